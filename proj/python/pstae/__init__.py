"""Point-cloud video anomaly detection (C++ core)."""

from ._core import *  # noqa: F401,F403
from ._core import __version__, PCV1_VERSION, PSTW_VERSION  # noqa: F401
