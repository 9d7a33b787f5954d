"""Model backends: scripted stand-ins and remote HTTP adapters."""

from .vlm import ScriptedVlm
from .chat import ScriptedChat
from .remote import RemoteChat, RemoteVlm, RemoteConfig

__all__ = ["ScriptedVlm", "ScriptedChat", "RemoteChat", "RemoteVlm",
           "RemoteConfig"]
