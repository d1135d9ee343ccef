"""Krylov iterative regularization for image deblurring.

Structured blur operators (Toeplitz-block for zero boundaries, circulant for
periodic, Toeplitz-plus-Hankel for reflective), flip symmetrization so MINRES
applies, regularizing circulant preconditioners built from the blur symbol,
and flexible Krylov solvers with discrepancy-principle stopping.
"""

__version__ = "0.1.0"
