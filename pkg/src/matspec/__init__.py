"""Matrix Sturm-Liouville direct and inverse spectral problems."""

__version__ = "0.1.0"
