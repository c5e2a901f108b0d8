"""Authenticated encryption for INPUT/RESULT payloads.

Each party shares a 32-byte key with the environment. A handshake binds it to
fresh nonces and the session id, yielding a ChaCha20-Poly1305 key unique per
(party, session). Every sealed frame carries an explicit 64-bit counter that
must arrive in order, which rules out replay and reordering.
"""

from __future__ import annotations

import hashlib
import hmac
import struct

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .frames import Frame, IntegrityFailure, MsgType

PAD_BUCKET = 256
KEY_SIZE = 32
NONCE_SIZE = 16
MAC_SIZE = 32
_COUNTER = struct.Struct(">Q")
_PADLEN = struct.Struct(">I")


def pad(data: bytes, bucket: int = PAD_BUCKET) -> bytes:
    """Length-prefix then zero-fill to the next multiple of ``bucket``."""
    body = _PADLEN.pack(len(data)) + data
    return body + bytes(-len(body) % bucket)


def unpad(data: bytes) -> bytes:
    if len(data) < 4:
        raise IntegrityFailure("padded payload too short")
    (n,) = _PADLEN.unpack_from(data)
    if n > len(data) - 4:
        raise IntegrityFailure("padding length out of range")
    return data[4 : 4 + n]


def hello_mac(psk: bytes, session_id: bytes, party_id: str, client_nonce: bytes) -> bytes:
    msg = b"tcme-hello" + session_id + party_id.encode() + client_nonce
    return hmac.new(psk, msg, hashlib.sha256).digest()


def hello_ack_mac(psk: bytes, session_id: bytes, party_id: str, client_nonce: bytes, server_nonce: bytes) -> bytes:
    msg = b"tcme-hello-ack" + session_id + party_id.encode() + client_nonce + server_nonce
    return hmac.new(psk, msg, hashlib.sha256).digest()


def derive_key(psk: bytes, session_id: bytes, party_id: str, client_nonce: bytes, server_nonce: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=KEY_SIZE,
        salt=client_nonce + server_nonce,
        info=b"tcme-channel" + session_id + party_id.encode(),
    ).derive(psk)


class SecureChannel:
    """One side of a party <-> environment channel."""

    def __init__(self, key: bytes, is_environment: bool):
        self._aead = ChaCha20Poly1305(key)
        self._send_dir = b"E2P\x00" if is_environment else b"P2E\x00"
        self._recv_dir = b"P2E\x00" if is_environment else b"E2P\x00"
        self._send_ctr = 0
        self._recv_ctr = 0

    @staticmethod
    def _aad(msg_type: MsgType, session_id: bytes) -> bytes:
        return bytes([msg_type]) + session_id

    def seal(self, msg_type: MsgType, session_id: bytes, plaintext: bytes) -> Frame:
        ctr = _COUNTER.pack(self._send_ctr)
        self._send_ctr += 1
        ct = self._aead.encrypt(self._send_dir + ctr, pad(plaintext), self._aad(msg_type, session_id))
        return Frame(msg_type, session_id, ctr + ct)

    def open(self, frame: Frame) -> bytes:
        if len(frame.payload) < _COUNTER.size + 16:
            raise IntegrityFailure("sealed payload too short")
        (ctr,) = _COUNTER.unpack_from(frame.payload)
        try:
            padded = self._aead.decrypt(
                self._recv_dir + frame.payload[: _COUNTER.size],
                frame.payload[_COUNTER.size :],
                self._aad(frame.msg_type, frame.session_id),
            )
        except InvalidTag:
            raise IntegrityFailure("authentication tag mismatch") from None
        if ctr != self._recv_ctr:
            raise IntegrityFailure(f"out-of-order or replayed frame (counter {ctr}, expected {self._recv_ctr})")
        self._recv_ctr += 1
        return unpad(padded)
