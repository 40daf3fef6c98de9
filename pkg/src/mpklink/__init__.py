"""Inter-service messaging over pipes, sockets, shared memory and protection-key guarded memory."""

from .codec import Envelope, decode, encode
from .errors import MpkLinkError
from .identity import CaRegistry, register, sign_envelope, verify_envelope
from .mpk_channel import RightsPolicy, create_pair
from .transports import ChannelConfig, Role, Transport, open_channel
from .wordcount import count_words, generate_corpus, request_count, run_server

__version__ = "0.1.0"

__all__ = [
    "CaRegistry", "ChannelConfig", "Envelope", "MpkLinkError", "RightsPolicy", "Role", "Transport",
    "count_words", "create_pair", "decode", "encode", "generate_corpus", "open_channel",
    "register", "request_count", "run_server", "sign_envelope", "verify_envelope",
]
