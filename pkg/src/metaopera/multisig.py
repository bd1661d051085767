"""Aggregatable multi-signatures with proof-of-possession.

This is a keyed-hash simulation of a pairing-based scheme. Keys, shares,
PoPs and aggregates have the real scheme's encoded sizes (34-byte keys,
66-byte signatures), and aggregation is constant-size. The pairing check is
replaced by a process-wide key directory: ``keygen`` registers each public
key, and verification recomputes shares through it. Only the protocol logic
and the size accounting depend on this; cryptographic strength does not.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .params import DEFAULT_PARAMS

VK_BYTES = DEFAULT_PARAMS.vk_bytes
SIG_BYTES = DEFAULT_PARAMS.sig_bytes
POP_BYTES = DEFAULT_PARAMS.pop_bytes
_SK_BYTES = 32
_MOD = 1 << (8 * SIG_BYTES)

# vk -> sk. Plays the role of the pairing equation.
_DIRECTORY: dict[bytes, bytes] = {}


class AggregationError(ValueError):
    pass


def _xof(tag: bytes, *parts: bytes, n: int) -> bytes:
    h = hashlib.shake_256(tag)
    for p in parts:
        h.update(len(p).to_bytes(4, "big"))
        h.update(p)
    return h.digest(n)


def _check(name: str, value: bytes, n: int) -> bytes:
    if len(value) != n:
        raise ValueError(f"{name} must be {n} bytes, got {len(value)}")
    return value


@dataclass(frozen=True)
class KeyTriple:
    vk: bytes
    sk: bytes = field(repr=False)
    pop: bytes = field(repr=False)

    def __post_init__(self) -> None:
        _check("vk", self.vk, VK_BYTES)
        _check("pop", self.pop, POP_BYTES)


class Share(NamedTuple):
    vk: bytes
    message: bytes
    sig: bytes


@dataclass(frozen=True)
class MultiSig:
    sig: bytes
    signer_set: tuple[bytes, ...]

    def __post_init__(self) -> None:
        _check("aggregate signature", self.sig, SIG_BYTES)


def keygen(seed: bytes) -> KeyTriple:
    sk = _xof(b"metaopera/sk", seed, n=_SK_BYTES)
    vk = _xof(b"metaopera/vk", sk, n=VK_BYTES)
    _DIRECTORY[vk] = sk
    pop = _xof(b"metaopera/pop", sk, vk, n=POP_BYTES)
    return KeyTriple(vk, sk, pop)


def sign(sk: bytes, message: bytes) -> bytes:
    return _xof(b"metaopera/sig", sk, message, n=SIG_BYTES)


def sign_share(key: KeyTriple, message: bytes) -> Share:
    return Share(key.vk, message, sign(key.sk, message))


def verify(vk: bytes, message: bytes, sig: bytes) -> bool:
    sk = _DIRECTORY.get(bytes(vk))
    if sk is None or len(sig) != SIG_BYTES:
        return False
    return sign(sk, message) == sig


def verify_pop(vk: bytes, pop: bytes) -> bool:
    sk = _DIRECTORY.get(bytes(vk))
    if sk is None or len(pop) != POP_BYTES:
        return False
    return _xof(b"metaopera/pop", sk, vk, n=POP_BYTES) == pop


def _combine(sigs: Sequence[bytes]) -> bytes:
    acc = 0
    for s in sigs:
        acc = (acc + int.from_bytes(_check("signature", s, SIG_BYTES), "big")) % _MOD
    return acc.to_bytes(SIG_BYTES, "big")


def aggregate(shares: Sequence[Share], message: bytes) -> MultiSig:
    if not shares:
        raise AggregationError("cannot aggregate an empty share list")
    if any(s.message != message for s in shares):
        raise AggregationError("all shares must sign the same message")
    return MultiSig(_combine([s.sig for s in shares]), tuple(s.vk for s in shares))


def verify_aggregate(signer_set: Sequence[bytes], message: bytes, sig: bytes) -> bool:
    if not signer_set or len(sig) != SIG_BYTES:
        return False
    expected = []
    for vk in signer_set:
        sk = _DIRECTORY.get(bytes(vk))
        if sk is None:
            return False
        expected.append(sign(sk, message))
    return _combine(expected) == sig


def attestation_message(ledger_id: str, tx_id: bytes, height: int, randomness: bytes) -> bytes:
    """Bind an attestation to one chain, one transaction and one nonce."""
    lid = ledger_id.encode()
    return hashlib.sha256(
        b"metaopera/attest" + len(lid).to_bytes(2, "big") + lid + tx_id
        + height.to_bytes(DEFAULT_PARAMS.height_bytes, "big") + randomness
    ).digest()
