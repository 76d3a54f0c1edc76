"""
plsdof
------
Partial Least Squares regression with unbiased Degrees of Freedom.
"""

__version__ = "0.1.0"
