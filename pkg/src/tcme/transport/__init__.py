from .channel import PAD_BUCKET, SecureChannel, pad, unpad
from .frames import (
    MAX_FRAME,
    Frame,
    FrameError,
    IntegrityFailure,
    MsgType,
    Oversize,
    TrailingData,
    Truncated,
    UnknownType,
    decode_frame,
    encode_frame,
)
from .protocol import EnvironmentCore, PartyClient, PartyOutcome, SessionRegistry, session_id_for
from .server import ListenConfig, RunningEndpoint, TransportError, join, serve
from .sim import SimNetwork, SimResult, sim_network, simulate_session

__all__ = [
    "MAX_FRAME",
    "PAD_BUCKET",
    "EnvironmentCore",
    "Frame",
    "FrameError",
    "IntegrityFailure",
    "ListenConfig",
    "MsgType",
    "Oversize",
    "PartyClient",
    "PartyOutcome",
    "RunningEndpoint",
    "SecureChannel",
    "SessionRegistry",
    "SimNetwork",
    "SimResult",
    "TrailingData",
    "TransportError",
    "Truncated",
    "UnknownType",
    "decode_frame",
    "encode_frame",
    "join",
    "pad",
    "serve",
    "session_id_for",
    "sim_network",
    "simulate_session",
    "unpad",
]
