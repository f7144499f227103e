"""Exception hierarchy shared by every gssc module."""


class GsscError(Exception):
    """Base class; ``code`` is the stable machine-readable name."""

    code = "GsscError"


class IndexOutOfRange(GsscError, IndexError):
    code = "IndexOutOfRange"


class DuplicateEdge(GsscError, ValueError):
    code = "DuplicateEdge"


class SelfLoop(GsscError, ValueError):
    code = "SelfLoop"


class FeatureShapeMismatch(GsscError, ValueError):
    code = "FeatureShapeMismatch"


class NotABijection(GsscError, ValueError):
    code = "NotABijection"


class InvalidParameter(GsscError, ValueError):
    code = "InvalidParameter"


class SizeCapExceeded(GsscError, ValueError):
    code = "SizeCapExceeded"


class ConvergenceFailure(GsscError, RuntimeError):
    code = "ConvergenceFailure"

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ShapeMismatch(GsscError, ValueError):
    code = "ShapeMismatch"


class PartialBasis(GsscError, ValueError):
    code = "PartialBasis"


class SelectionNotConfigured(GsscError, ValueError):
    code = "SelectionNotConfigured"


class TapeConsumed(GsscError, RuntimeError):
    code = "TapeConsumed"


class NotScalar(GsscError, ValueError):
    code = "NotScalar"


class ZeroStd(GsscError, ZeroDivisionError):
    code = "ZeroStd"


class ResourceCapExceeded(GsscError, RuntimeError):
    code = "ResourceCapExceeded"


class ConfigParse(GsscError, ValueError):
    code = "ConfigParse"


class MissingInput(GsscError, FileNotFoundError):
    code = "MissingInput"


class IoFailure(GsscError, OSError):
    code = "IoFailure"


class CacheMismatch(GsscError, ValueError):
    code = "CacheMismatch"


class NonFiniteLoss(GsscError, FloatingPointError):
    code = "NonFiniteLoss"
