"""Backend selection for the angular Riesz kernel.

The compiled extension is used when it imports; otherwise the numpy
implementation in ``_kernel_py`` is used.  Set ``HARTREE_LAB_PURE=1`` to
force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernel_py
from ._kernel_py import sphere_area

try:
    if os.environ.get("HARTREE_LAB_PURE", "") == "1":
        raise ImportError("pure backend requested")
    from . import _kernel as _ext
except ImportError:  # pragma: no cover - depends on build
    _ext = None

BACKEND = "cython" if _ext is not None else "numpy"

__all__ = ["BACKEND", "angular_profile", "pair_matrix", "sphere_area"]


def angular_profile(rho, N: int, backend: str | None = None) -> np.ndarray:
    """Profile k(rho) so that K(r, s) = max(r, s)^-4 k(min/max)."""
    if _use_ext(backend):
        return sphere_area(N - 2) * _ext.angular_profile_raw(rho, N)
    return _kernel_py.angular_profile(rho, N)


def pair_matrix(r, s, N: int, backend: str | None = None) -> np.ndarray:
    """Dense K(r_i, s_j)."""
    if _use_ext(backend):
        return sphere_area(N - 2) * _ext.pair_matrix_raw(r, s, N)
    return _kernel_py.pair_matrix(r, s, N)


def _use_ext(backend):
    if backend is None:
        return _ext is not None
    if backend == "cython":
        if _ext is None:
            raise RuntimeError("compiled kernel not available")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
