"""1-out-of-2 oblivious transfer (Bellare-Micali style) over a prime-order subgroup.

Protocol, three messages::

    sender   -> receiver  C = g^c
    receiver -> sender    PK_0   (PK_choice = g^k, PK_other = C / g^k)
    sender   -> receiver  (g^r0, H(PK_0^r0) ^ m0), (g^r1, H(PK_1^r1) ^ m1)

PK_0 is uniformly distributed whatever the choice bit, so the sender learns
nothing about it; the receiver knows the discrete log of only one of the two
public keys and can open only that message.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

import gmpy2

# RFC 3526 group 14 (2048-bit MODP), safe prime p = 2q + 1; g = 4 generates the order-q subgroup
P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
Q = (P - 1) // 2
G = 4
_P = gmpy2.mpz(P)
EXPONENT_BITS = 256
MAX_MESSAGE = 32
MESSAGES_PER_OT = 3


class OTError(ValueError):
    """Malformed transcript element."""


def _rand_exponent(rng) -> int:
    return (rng.getrandbits(EXPONENT_BITS) % (Q - 1)) + 1


def _pow(base: int, exp: int) -> int:
    return int(gmpy2.powmod(base, exp, _P))


def _inv(x: int) -> int:
    return int(gmpy2.invert(x, _P))


def _check_element(x: int) -> int:
    # p is a safe prime, so the order-q subgroup is exactly the quadratic residues
    if not isinstance(x, int) or not 1 < x < P - 1 or gmpy2.jacobi(x, _P) != 1:
        raise OTError("value is not an element of the prime-order subgroup")
    return x


def _kdf(shared: int, index: int) -> bytes:
    return hashlib.sha256(index.to_bytes(1, "big") + shared.to_bytes(256, "big")).digest()


def _xor(x: bytes, y: bytes) -> bytes:
    return bytes(a ^ b for a, b in zip(x, y))


@dataclass(frozen=True)
class Transfer:
    r0: int
    e0: bytes
    r1: int
    e1: bytes


class OTSender:
    def __init__(self, m0: bytes, m1: bytes, rng=None):
        if len(m0) != len(m1) or len(m0) > MAX_MESSAGE:
            raise OTError(f"messages must have equal length <= {MAX_MESSAGE}")
        self._m = (m0, m1)
        self._rng = rng or secrets.SystemRandom()
        self._c = None

    def setup(self) -> int:
        self._c = _pow(G, _rand_exponent(self._rng))
        return self._c

    def transfer(self, pk0: int) -> Transfer:
        if self._c is None:
            raise OTError("setup() must run first")
        pk0 = _check_element(pk0)
        pk1 = self._c * _inv(pk0) % P
        out = []
        for i, pk in enumerate((pk0, pk1)):
            r = _rand_exponent(self._rng)
            pad = _kdf(_pow(pk, r), i)
            out += [_pow(G, r), _xor(self._m[i], pad)]
        return Transfer(*out)


class OTReceiver:
    def __init__(self, choice: int, rng=None):
        if choice not in (0, 1):
            raise OTError("choice must be 0 or 1")
        self.choice = choice
        self._rng = rng or secrets.SystemRandom()
        self._k = None

    def respond(self, c: int) -> int:
        c = _check_element(c)
        self._k = _rand_exponent(self._rng)
        pk_choice = _pow(G, self._k)
        pk_other = c * _inv(pk_choice) % P
        return pk_choice if self.choice == 0 else pk_other

    def receive(self, t: Transfer) -> bytes:
        if self._k is None:
            raise OTError("respond() must run first")
        r, e = (t.r0, t.e0) if self.choice == 0 else (t.r1, t.e1)
        r = _check_element(r)
        return _xor(e, _kdf(_pow(r, self._k), self.choice))


@dataclass(frozen=True)
class OTTranscript:
    c: int
    pk0: int
    transfer: Transfer


def ot_choose(pair: tuple[bytes, bytes], choice: int, rng=None) -> tuple[bytes, OTTranscript]:
    """Run sender and receiver in-process; returns the chosen message and what the sender saw."""
    sender = OTSender(pair[0], pair[1], rng)
    receiver = OTReceiver(choice, rng)
    c = sender.setup()
    pk0 = receiver.respond(c)
    t = sender.transfer(pk0)
    return receiver.receive(t), OTTranscript(c, pk0, t)
