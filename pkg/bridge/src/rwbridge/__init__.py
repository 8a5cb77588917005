"""Out-of-process backend package for the roomweave wire protocol."""

from .echo import EchoBackend, default_schedule
from .server import BridgeServer

__version__ = "0.1.0"
