"""Kernel selection: compiled Cython core when available, numpy fallback otherwise.

Set LEVYPORT_PURE_PYTHON=1 to force the fallback (used by the benchmark and to
exercise both paths in the test suite).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kv_py

if os.environ.get("LEVYPORT_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    _impl = _kv_py
    BACKEND = "python"
else:
    try:
        from . import _kv_c as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kv_py
        BACKEND = "python"


def kv_scaled(nu: float, z) -> np.ndarray:
    """Exponentially scaled K_nu(z) * exp(z), elementwise over complex z."""
    return np.asarray(_impl.kv_scaled(float(nu), np.atleast_1d(np.asarray(z, dtype=np.complex128)).ravel()))


def kv(nu: float, z) -> np.ndarray:
    """K_nu(z) for complex z with Re(z) >= 0."""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128)).ravel()
    return kv_scaled(nu, z) * np.exp(-z)


def log_kv(nu: float, z) -> np.ndarray:
    """log K_nu(z): principal log of the scaled value minus z.

    The scaled function K_nu(z)*exp(z) has bounded phase away from the origin,
    so this form avoids both overflow and the phase wrapping of exp(-z).
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128)).ravel()
    return np.log(kv_scaled(nu, z)) - z
