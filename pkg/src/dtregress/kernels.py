"""Kernel dispatch: the Cython extension when it was built, numpy otherwise."""

try:
    from ._ckernels import ci_gap, q_backup
    BACKEND = "cython"
except ImportError:  # extension not compiled
    from ._pykernels import ci_gap, q_backup
    BACKEND = "python"

__all__ = ["BACKEND", "ci_gap", "q_backup"]
