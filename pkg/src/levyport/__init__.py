"""levyport: multivariate NTS/GH log-return models, Esscher measure changes,
smile-plus-time-series calibration, and AVaR-based portfolio selection."""

__version__ = "0.1.0"

from levyport._kernels import BACKEND as kernel_backend  # noqa: F401
