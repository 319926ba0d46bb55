"""Subgroup analysis benchmark for time-to-event randomized trials."""

from ._survhte import *  # noqa: F401,F403
from ._survhte import __doc__  # noqa: F401

__version__ = "0.1.0"
