"""Bit-exact frame codec.

Layout::

    length      u32 big-endian, bytes that follow the length field
    msg_type    u8
    session_id  16 bytes
    payload     length - 17 bytes
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

MAX_FRAME = 16 * 1024 * 1024
SESSION_ID_SIZE = 16
HEADER_SIZE = 1 + SESSION_ID_SIZE
_LEN = struct.Struct(">I")


class FrameError(Exception):
    pass


class Truncated(FrameError):
    pass


class Oversize(FrameError):
    pass


class UnknownType(FrameError):
    pass


class IntegrityFailure(FrameError):
    pass


class TrailingData(FrameError):
    pass


class MsgType(enum.IntEnum):
    HELLO = 1
    PROPOSE = 2
    APPROVE = 3
    INPUT = 4
    RESULT = 5
    ABORT = 6
    ERROR = 7


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    session_id: bytes
    payload: bytes = b""

    def __post_init__(self):
        if len(self.session_id) != SESSION_ID_SIZE:
            raise ValueError("session_id must be 16 bytes")
        object.__setattr__(self, "msg_type", MsgType(self.msg_type))


def encode_frame(frame: Frame) -> bytes:
    length = HEADER_SIZE + len(frame.payload)
    if length > MAX_FRAME:
        raise Oversize(f"frame of {length} bytes exceeds {MAX_FRAME}")
    return _LEN.pack(length) + bytes([frame.msg_type]) + frame.session_id + frame.payload


def frame_length(prefix: bytes) -> int:
    """Validate the 4-byte length prefix and return the body length."""
    if len(prefix) < 4:
        raise Truncated("missing length field")
    (length,) = _LEN.unpack_from(prefix)
    if length > MAX_FRAME:
        raise Oversize(f"declared length {length} exceeds {MAX_FRAME}")
    if length < HEADER_SIZE:
        raise Truncated(f"declared length {length} shorter than the frame header")
    return length


def decode_frame(data: bytes) -> Frame:
    length = frame_length(data)
    body = data[4:]
    if len(body) < length:
        raise Truncated(f"declared {length} bytes, only {len(body)} present")
    if len(body) > length:
        raise TrailingData(f"{len(body) - length} bytes after frame end")
    try:
        msg_type = MsgType(body[0])
    except ValueError:
        raise UnknownType(f"unknown msg_type {body[0]}") from None
    return Frame(msg_type, bytes(body[1:HEADER_SIZE]), bytes(body[HEADER_SIZE:]))


def split_frames(buffer: bytearray) -> list[bytes]:
    """Pop every complete encoded frame off the front of a stream buffer."""
    out = []
    while len(buffer) >= 4:
        length = frame_length(bytes(buffer[:4]))
        if len(buffer) < 4 + length:
            break
        out.append(bytes(buffer[: 4 + length]))
        del buffer[: 4 + length]
    return out
