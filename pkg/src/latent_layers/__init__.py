"""Toolkit for causal scenarios with intermediate latent nodes.

Modules: ``graph`` (DAG transforms and inflation), ``dist`` (boxes and
functionals), ``lp`` (exact feasibility and Farkas witnesses), ``npa`` and
``sdp`` (moment-matrix bounds), ``entropy`` (Shannon-cone projections) and
``cli``.
"""
from .qfield import SQRT2, QField

__version__ = "0.1.0"

__all__ = ["QField", "SQRT2", "__version__"]
