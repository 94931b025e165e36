"""Label fusion, multi-view verification, semantic mapping, navigation,
and part discovery over precomputed perception-model outputs."""

__version__ = "0.1.0"

from .accel import BACKEND as kernel_backend  # noqa: F401
