"""Graph state space convolution (GSSC)."""
