"""Desk-scale GRPO training over retrieval-augmented personalized QA rollouts.

The heavy lifting lives in the compiled extension; this package re-exports it.
"""

from rar_forge._core import *  # noqa: F401,F403
from rar_forge._core import __version__  # noqa: F401
