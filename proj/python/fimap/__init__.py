"""Multi-condition fluorescence imaging of microplastics."""

from ._fimap import *  # noqa: F401,F403
from ._fimap import FimapError, RegistrationError  # noqa: F401

__version__ = "0.1.0"
