"""Browser teleoperation: command synthesis, session core, websocket server."""

from .server import TeleopError, TeleopServer, TeleopSession, serve
from .synth import CommandSynthesizer, SlewLimits, SynthError, TeleopCommand

__all__ = [
    "CommandSynthesizer", "SlewLimits", "SynthError", "TeleopCommand",
    "TeleopError", "TeleopServer", "TeleopSession", "serve",
]
