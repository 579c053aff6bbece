"""hslab: numerical laboratory for the weighted Hardy-Steklov operator."""

import os

# Worker cap must land in the environment before any BLAS-backed import.
_threads = os.environ.get("HSLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
