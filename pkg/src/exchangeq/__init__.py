"""Operational quantum probability and partially exchangeable inference."""

from .errors import *  # noqa: F401,F403
from .gpt import *  # noqa: F401,F403
from .hilbert import *  # noqa: F401,F403
from .inference import *  # noqa: F401,F403
from .knowledge import *  # noqa: F401,F403
from .priors import *  # noqa: F401,F403

__version__ = "0.1.0"
