"""Committee selection by chain quality and cross-metaverse proofs.

A committee is the set of nodes that produced the most blocks in a window
of the relay chain. It attests to transactions on other chains (notary
role) and on centralized server logs (multi-signature oracle role); in both
cases the output is a :class:`CrossProof`.
"""

from __future__ import annotations

import enum
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Protocol

from . import multisig
from .ledger import TX_BYTES, LedgerTx, SimLedger, decode_tx
from .multisig import KeyTriple
from .params import DEFAULT_PARAMS, ProtocolParams

HEIGHT_BYTES = DEFAULT_PARAMS.height_bytes
RAND_BYTES = DEFAULT_PARAMS.rand_bytes
_FIXED = TX_BYTES + HEIGHT_BYTES + RAND_BYTES + multisig.SIG_BYTES


class CommitteeError(Exception):
    pass


class InsufficientProducersError(CommitteeError):
    def __init__(self, needed: int, found: int):
        super().__init__(f"need {needed} distinct producers in window, found {found} (short by {needed - found})")
        self.needed = needed
        self.found = found
        self.shortfall = needed - found


class UnconfirmedTxError(CommitteeError):
    pass


class MalformedProofError(ValueError):
    pass


class AttestationSource(Protocol):
    def confirmed_height(self, tx_id: bytes, now: int) -> int | None: ...


def node_key(node_id: str, seed: int = 0) -> KeyTriple:
    return multisig.keygen(f"node:{seed}:{node_id}".encode())


@dataclass(frozen=True)
class Committee:
    members: tuple[tuple[str, bytes], ...]
    source_window: tuple[str, int, int]
    keys: Mapping[bytes, KeyTriple] = field(default_factory=dict, repr=False, compare=False)

    @property
    def size_c(self) -> int:
        return len(self.members)

    @property
    def ledger_id(self) -> str:
        return self.source_window[0]

    @property
    def vks(self) -> tuple[bytes, ...]:
        return tuple(vk for _, vk in self.members)

    @cached_property
    def _vkset(self) -> frozenset[bytes]:
        return frozenset(self.vks)

    def is_member(self, vk: bytes) -> bool:
        return vk in self._vkset


def rank_producers(producers: list[str]) -> list[tuple[str, int]]:
    """Producers by descending block count, ties by ascending node id."""
    return sorted(Counter(producers).items(), key=lambda kv: (-kv[1], kv[0]))


def select_committee(
    ledger: SimLedger,
    window_k: int,
    size_c: int,
    keys: Mapping[str, KeyTriple] | None = None,
    seed: int = 0,
) -> Committee:
    if size_c < 1:
        raise ValueError(f"committee size must be >= 1, got {size_c}")
    if window_k < 1 or len(ledger.blocks) < window_k:
        raise CommitteeError(f"ledger has {len(ledger.blocks)} blocks, window needs {window_k}")
    last = len(ledger.blocks) - 1
    first = last - window_k + 1
    ranked = rank_producers(ledger.producers_in(first, last))
    if len(ranked) < size_c:
        raise InsufficientProducersError(size_c, len(ranked))
    members, keyring = [], {}
    for node_id, _ in ranked[:size_c]:
        key = keys[node_id] if keys is not None else node_key(node_id, seed)
        if not multisig.verify_pop(key.vk, key.pop):
            raise CommitteeError(f"proof-of-possession check failed for {node_id}")
        if key.vk in keyring:
            raise CommitteeError(f"duplicate verification key for {node_id}")
        keyring[key.vk] = key
        members.append((node_id, key.vk))
    return Committee(tuple(members), (ledger.ledger_id, first, last), keyring)


def proof_size_bytes(size_c: int, params: ProtocolParams = DEFAULT_PARAMS) -> int:
    m = params.signer_count(size_c)
    return params.tx_bytes + params.height_bytes + params.rand_bytes + m * params.vk_bytes + params.sig_bytes


@dataclass(frozen=True)
class CrossProof:
    tx: LedgerTx
    height: int
    randomness: bytes
    included_vks: tuple[bytes, ...]
    agg_sig: bytes
    latency: int = field(default=0, compare=False)

    def encode(self) -> bytes:
        return b"".join((
            self.tx.encode(),
            self.height.to_bytes(HEIGHT_BYTES, "big"),
            self.randomness,
            *self.included_vks,
            self.agg_sig,
        ))

    @classmethod
    def decode(cls, data: bytes) -> "CrossProof":
        n = len(data) - _FIXED
        if n <= 0 or n % multisig.VK_BYTES:
            raise MalformedProofError(f"bad proof length {len(data)}")
        try:
            tx = decode_tx(data[:TX_BYTES])
        except ValueError as exc:
            raise MalformedProofError(str(exc)) from None
        i = TX_BYTES
        height = int.from_bytes(data[i:i + HEIGHT_BYTES], "big")
        i += HEIGHT_BYTES
        rnd = data[i:i + RAND_BYTES]
        i += RAND_BYTES
        vks = tuple(data[j:j + multisig.VK_BYTES] for j in range(i, i + n, multisig.VK_BYTES))
        return cls(tx, height, rnd, vks, data[i + n:])

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    def message(self, ledger_id: str) -> bytes:
        return multisig.attestation_message(ledger_id, self.tx.tx_id, self.height, self.randomness)


def generate_proof(
    committee: Committee,
    source: AttestationSource,
    tx: LedgerTx,
    randomness: bytes,
    now: int = 0,
    params: ProtocolParams = DEFAULT_PARAMS,
    t_proof: int | None = None,
) -> CrossProof:
    if len(randomness) != params.rand_bytes:
        raise ValueError(f"randomness must be {params.rand_bytes} bytes")
    height = source.confirmed_height(tx.tx_id, now)
    if height is None:
        raise UnconfirmedTxError(f"tx {tx.tx_id.hex()[:16]} is not confirmed at its source")
    msg = multisig.attestation_message(committee.ledger_id, tx.tx_id, height, randomness)
    shares = []
    for _, vk in committee.members[: params.signer_count(committee.size_c)]:
        share = multisig.sign_share(committee.keys[vk], msg)
        if not multisig.verify(vk, msg, share.sig):
            raise CommitteeError(f"invalid signature share from {vk.hex()[:16]}")
        shares.append(share)
    agg = multisig.aggregate(shares, msg)
    latency = params.t_proof if t_proof is None else t_proof
    proof = CrossProof(tx, height, bytes(randomness), agg.signer_set, agg.sig, latency)
    assert len(proof.encode()) == proof_size_bytes(committee.size_c, params)
    return proof


def verify_proof(committee: Committee, proof: CrossProof, params: ProtocolParams = DEFAULT_PARAMS) -> bool:
    if len(proof.included_vks) != params.signer_count(committee.size_c):
        return False
    if len(set(proof.included_vks)) != len(proof.included_vks):
        return False
    if not all(committee.is_member(vk) for vk in proof.included_vks):
        return False
    if len(proof.randomness) != params.rand_bytes or len(proof.agg_sig) != params.sig_bytes:
        return False
    if proof.height >= 1 << (8 * params.height_bytes):
        return False
    if len(proof.encode()) != proof_size_bytes(committee.size_c, params):
        return False
    return multisig.verify_aggregate(proof.included_vks, proof.message(committee.ledger_id), proof.agg_sig)


class ProofStatus(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    MALFORMED = "malformed"


def check_encoded(committee: Committee, data: bytes, params: ProtocolParams = DEFAULT_PARAMS) -> ProofStatus:
    try:
        proof = CrossProof.decode(data)
    except MalformedProofError:
        return ProofStatus.MALFORMED
    return ProofStatus.VALID if verify_proof(committee, proof, params) else ProofStatus.INVALID
