"""Multi-level herding agent-based market model: calibration, simulation, spectral analysis."""

__version__ = "0.1.0"

import numba as _nb

# The system TBB is too old for numba; skip straight to OpenMP / workqueue.
_nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
