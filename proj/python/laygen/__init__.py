"""Autoregressive layout generation over quantized layout tokens."""

from ._laygen import *  # noqa: F401,F403
from ._laygen import __doc__  # noqa: F401

__version__ = "0.1.0"
