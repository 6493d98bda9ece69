"""Estimation after parameter selection."""

from ._core import *  # noqa: F401,F403
from ._core import PselError, __version__  # noqa: F401
