"""Numerical laboratory for the Tzitzeica equation and minimal Lagrangian tori."""
import os as _os

__version__ = "0.1.0"

# TZLAB_THREADS caps BLAS/FFT thread pools; must be set before numpy loads
_threads = _os.environ.get("TZLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
