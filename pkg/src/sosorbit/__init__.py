"""Time-average bounds for ODE systems via sum-of-squares optimization and
conversion of bound residual minimizers into unstable periodic orbits."""

__version__ = "0.1.0"
