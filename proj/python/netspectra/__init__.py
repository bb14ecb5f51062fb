"""Dense-network training and spectral analysis toolkit."""

from _netspectra import *  # noqa: F401,F403
from _netspectra import __doc__  # noqa: F401
