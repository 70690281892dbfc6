"""Kernel selection: compiled Jacobi if built, numpy fallback otherwise.

Set ``LATENT_LAYERS_PURE=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
jacobi_eigh = _kernels_py.jacobi_eigh
project_psd = _kernels_py.project_psd

if os.environ.get("LATENT_LAYERS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        jacobi_eigh = _compiled.jacobi_eigh
        project_psd = _compiled.project_psd

__all__ = ["BACKEND", "jacobi_eigh", "project_psd"]
