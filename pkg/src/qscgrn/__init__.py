"""Gene regulatory network inference with a simulated parameterized quantum circuit."""

__version__ = "0.1.0"
