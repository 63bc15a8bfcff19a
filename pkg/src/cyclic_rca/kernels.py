"""Kernel backend selection.

The compiled extension ``_ckernels`` is used when importable; otherwise, or
when the environment variable ``CYCLIC_RCA_PURE_PYTHON`` is set to a
non-empty value other than ``0``, the NumPy versions in ``_pykernels`` are
used. ``BACKEND`` names the active choice.
"""
import os

from . import _pykernels

_force_python = os.environ.get("CYCLIC_RCA_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure Python backend requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

lasso_exact = _impl.lasso_exact
glasso_sweep = _impl.glasso_sweep
cholesky_search = _impl.cholesky_search


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython' or 'python'), default active."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
