"""CAE-TD3: a convolution-and-attention history encoder for TD3 under partial observability."""

__version__ = "0.1.0"
