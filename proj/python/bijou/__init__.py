"""Teacher-student masked prediction pretraining for text and speech."""

from ._bijou import *  # noqa: F401,F403
from ._bijou import __doc__  # noqa: F401

__version__ = "0.1.0"
