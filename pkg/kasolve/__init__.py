# Knowledge-Aided Kaczmarz / LMS estimation package
# Contains the numerical kernel, the linear Gaussian model, the iterative
# solvers and the Monte-Carlo experiment harness.

__version__ = "1.0.0"
