"""Metaverses, transferable objects, owners and customizers.

A decentralized metaverse (DM) is backed by a :class:`SimLedger`; a
centralized one (CM) by an append-only :class:`ServerLog`. Objects move
between metaverses by being locked (or staked) in one place and minted as
a counterpart in another, gated on a committee proof.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any

from .committee import Committee, CrossProof, verify_proof
from .ledger import DuplicateTxError, LedgerTx, SimClock, SimLedger, TxKind
from .params import DEFAULT_PARAMS, ProtocolParams


class Refusal(Exception):
    """An operation's precondition does not hold; nothing was changed."""


class MvKind(str, enum.Enum):
    DM = "DM"
    CM = "CM"


class ObjKind(str, enum.Enum):
    ASSET = "asset"
    AVATAR = "avatar"
    NFT = "NFT"
    NFT_DERIVATIVE = "NFT-derivative"


class LockState(str, enum.Enum):
    ACTIVE = "Active"
    LOCKED = "Locked"
    BURNED = "Burned"


@dataclass
class ServerLog:
    ack_delay: int = 0
    entries: list[tuple[LedgerTx, int]] = field(default_factory=list)
    _index: dict[bytes, int] = field(default_factory=dict, repr=False)

    def append(self, tx: LedgerTx, t: int) -> int:
        if self.entries and t < self.entries[-1][1]:
            raise ValueError(f"log entry at {t} precedes last entry at {self.entries[-1][1]}")
        tid = tx.tx_id
        if tid in self._index:
            raise DuplicateTxError(f"duplicate log entry {tid.hex()[:16]}")
        self._index[tid] = len(self.entries)
        self.entries.append((tx, t))
        return len(self.entries) - 1

    def index_of(self, tx_id: bytes) -> int | None:
        return self._index.get(tx_id)

    def confirmation_time(self, tx_id: bytes) -> int:
        return self.entries[self._index[tx_id]][1] + self.ack_delay

    def confirmed_height(self, tx_id: bytes, now: int) -> int | None:
        i = self._index.get(tx_id)
        if i is None or now < self.entries[i][1] + self.ack_delay:
            return None
        return i


def cm_confirm(log: ServerLog, tx: LedgerTx, clock: SimClock) -> bool:
    return log.confirmed_height(tx.tx_id, clock.now) is not None


@dataclass
class Metaverse:
    mv_id: str
    kind: MvKind
    backend: SimLedger | ServerLog
    clock: SimClock
    supported_formats: frozenset[str] = frozenset({"2D", "3D"})
    supports_nft: bool = True
    proof_latency: int | None = None
    _seq: int = field(default=0, init=False, repr=False)

    def __post_init__(self) -> None:
        self.kind = MvKind(self.kind)
        self.supported_formats = frozenset(self.supported_formats)
        if self.kind is MvKind.DM:
            if not isinstance(self.backend, SimLedger):
                raise TypeError(f"{self.mv_id}: a DM needs a SimLedger backend")
            if not self.supports_nft:
                raise ValueError(f"{self.mv_id}: a DM always supports NFTs")
        elif not isinstance(self.backend, ServerLog):
            raise TypeError(f"{self.mv_id}: a CM needs a ServerLog backend")

    def next_nonce(self) -> int:
        self._seq += 1
        return self._seq

    def submit(self, tx: LedgerTx) -> int:
        if self.kind is MvKind.DM:
            return self.backend.submit(tx)
        return self.backend.append(tx, self.clock.now)

    def confirmation_time(self, tx_id: bytes) -> int:
        """Earliest simulated time at which ``tx_id`` counts as confirmed."""
        if self.kind is MvKind.CM:
            return self.backend.confirmation_time(tx_id)
        ledger = self.backend
        h = ledger.inclusion_height(tx_id)
        if h is None:
            raise KeyError(tx_id)
        return (h + ledger.common_prefix_k) * ledger.block_interval

    def confirmed_height(self, tx_id: bytes, now: int | None = None) -> int | None:
        return self.backend.confirmed_height(tx_id, self.clock.now if now is None else now)


@dataclass
class Owner:
    owner_id: str
    addresses: dict[str, str] = field(default_factory=dict)
    balances: dict[str, int] = field(default_factory=dict)

    def address(self, mv_id: str) -> str:
        return self.addresses.setdefault(mv_id, f"{mv_id}:{self.owner_id}")


@dataclass(frozen=True)
class Customizer:
    cust_id: str
    fee: int = 1
    capability: frozenset[tuple[str, str]] = frozenset()

    def target_format(self, fmt: str, supported: frozenset[str]) -> str | None:
        if fmt in supported:
            return fmt
        options = sorted(dst for src, dst in self.capability if src == fmt and dst in supported)
        return options[0] if options else None


@dataclass
class MetaObject:
    obj_id: str
    owner_id: str
    kind: ObjKind
    format: str
    location: str
    state: LockState = LockState.ACTIVE
    escrow: str | None = None
    properties: dict[str, Any] = field(default_factory=dict)
    epoch: int = 0
    origin_tx: LedgerTx | None = field(default=None, compare=False, repr=False)
    # stale escrow this instance replaced when minted; restored if the mint is unwound
    superseded: MetaObject | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        self.kind = ObjKind(self.kind)
        self.state = LockState(self.state)

    @property
    def active(self) -> bool:
        return self.state is LockState.ACTIVE

    def key(self) -> tuple:
        return (self.obj_id, self.location, self.state.value, self.escrow, self.owner_id,
                self.kind.value, self.format, json.dumps(self.properties, sort_keys=True), self.epoch)


class Registry:
    """Every object instance in a world, across all metaverses."""

    def __init__(self) -> None:
        self.instances: dict[str, list[MetaObject]] = defaultdict(list)
        self.used_proofs: set[bytes] = set()

    def add(self, obj: MetaObject) -> MetaObject:
        if self.find(obj.obj_id, obj.location) is not None:
            raise Refusal(f"{obj.obj_id} already has an instance in {obj.location}")
        self.instances[obj.obj_id].append(obj)
        return obj

    def remove(self, obj: MetaObject) -> None:
        self.instances[obj.obj_id].remove(obj)

    def find(self, obj_id: str, location: str) -> MetaObject | None:
        for o in self.instances.get(obj_id, ()):
            if o.location == location:
                return o
        return None

    def active(self, obj_id: str) -> list[MetaObject]:
        return [o for o in self.instances.get(obj_id, ()) if o.active]

    def sweep(self) -> dict[str, int]:
        """obj_ids with more than one Active instance, and their counts."""
        bad = {}
        for obj_id, objs in self.instances.items():
            n = sum(o.active for o in objs)
            if n > 1:
                bad[obj_id] = n
        return bad

    def snapshot(self) -> frozenset:
        return frozenset(o.key() for objs in self.instances.values() for o in objs)


def _payload(op: str, obj: MetaObject, mv: Metaverse, owner_id: str, **extra) -> bytes:
    body = {"op": op, "obj": obj.obj_id, "own": owner_id, "mv": mv.mv_id, "ep": obj.epoch,
            "n": mv.next_nonce(), **extra}
    return json.dumps(body, separators=(",", ":"), sort_keys=True).encode()


def parse_payload(tx: LedgerTx) -> dict:
    try:
        return json.loads(tx.payload)
    except ValueError:
        raise Refusal("transaction payload is not a protocol message") from None


def _escrow(mv: Metaverse, obj: MetaObject, owner: Owner, kind: TxKind, op: str) -> LedgerTx:
    if obj.location != mv.mv_id:
        raise Refusal(f"{obj.obj_id} is not in {mv.mv_id}")
    if obj.owner_id != owner.owner_id:
        raise Refusal(f"{owner.owner_id} does not own {obj.obj_id}")
    if not obj.active:
        raise Refusal(f"{obj.obj_id} is {obj.state.value} in {mv.mv_id}")
    tx = LedgerTx(kind, _payload(op, obj, mv, owner.owner_id))
    try:
        mv.submit(tx)
    except DuplicateTxError as exc:
        raise Refusal(str(exc)) from None
    obj.state = LockState.LOCKED
    obj.escrow = mv.mv_id
    obj.origin_tx = tx
    return tx


def lock_object(mv: Metaverse, obj: MetaObject, owner: Owner) -> LedgerTx:
    return _escrow(mv, obj, owner, TxKind.LOCK, "lock")


def stake_object(mv: Metaverse, obj: MetaObject, owner: Owner) -> LedgerTx:
    return _escrow(mv, obj, owner, TxKind.STAKE, "stake")


def needs_customizer(target: Metaverse, obj: MetaObject) -> bool:
    return obj.format not in target.supported_formats or not target.supports_nft


def customize(customizer: Customizer, obj: MetaObject, target: Metaverse) -> MetaObject:
    """Adapt format and kind for ``target``; every other field is carried over."""
    fmt = customizer.target_format(obj.format, target.supported_formats)
    if fmt is None:
        raise Refusal(f"{customizer.cust_id} cannot cast {obj.format} into {sorted(target.supported_formats)}")
    kind = ObjKind.NFT if target.supports_nft else ObjKind.NFT_DERIVATIVE
    return replace(obj, format=fmt, kind=kind)


def mint_counterpart(
    target: Metaverse,
    proof: CrossProof,
    owner: Owner,
    customizer: Customizer | None,
    committee: Committee,
    registry: Registry,
    params: ProtocolParams = DEFAULT_PARAMS,
) -> MetaObject:
    """Mint the counterpart of a proven lock/stake in ``target``.

    The new instance's ``origin_tx`` is the Mint (or CustomMint) transaction.
    """
    digest = proof.digest
    if digest in registry.used_proofs:
        raise Refusal("proof already used")
    if not verify_proof(committee, proof, params):
        raise Refusal("proof does not verify")
    if proof.tx.kind not in (TxKind.LOCK, TxKind.STAKE):
        raise Refusal(f"proof attests a {proof.tx.kind.name} transaction, not a lock or stake")
    msg = parse_payload(proof.tx)
    src = registry.find(msg["obj"], msg["mv"])
    if src is None or src.state is not LockState.LOCKED or src.epoch != msg["ep"]:
        raise Refusal(f"no matching locked instance of {msg['obj']} in {msg['mv']}")
    if src.owner_id != owner.owner_id or msg["own"] != owner.owner_id:
        raise Refusal(f"{owner.owner_id} does not own {src.obj_id}")
    if registry.active(src.obj_id):
        raise Refusal(f"{src.obj_id} is already active elsewhere")
    stale = registry.find(src.obj_id, target.mv_id)
    if stale is not None and not (stale.state is LockState.LOCKED and stale.epoch < src.epoch):
        raise Refusal(f"{src.obj_id} already has an instance in {target.mv_id}")

    base = replace(src, kind=ObjKind.NFT, location=target.mv_id, state=LockState.ACTIVE,
                   escrow=None, epoch=src.epoch + 1, properties=dict(src.properties), origin_tx=None)
    acting = None
    if needs_customizer(target, src):
        if customizer is None:
            raise Refusal(f"{target.mv_id} needs a customizer for {src.format}"
                          + ("" if target.supports_nft else " / NFT-derivative"))
        acting = customizer
        base = customize(customizer, base, target)
        if owner.balances.get(target.mv_id, 0) < customizer.fee:
            raise Refusal(f"{owner.owner_id} cannot pay customizer fee {customizer.fee}")

    extra = {"pf": digest[:8].hex()}
    if acting is not None:
        extra["cu"] = acting.cust_id
    tx = LedgerTx(TxKind.CUSTOM_MINT if acting else TxKind.MINT,
                  _payload("mint", base, target, owner.owner_id, **extra))
    try:
        target.submit(tx)
    except DuplicateTxError as exc:
        raise Refusal(str(exc)) from None
    if acting is not None:
        owner.balances[target.mv_id] -= acting.fee
    base.origin_tx = tx
    registry.used_proofs.add(digest)
    if stale is not None:
        # an older escrow here is dead: a later epoch was locked elsewhere
        registry.remove(stale)
        base.superseded = stale
    return registry.add(base)


def release(mv: Metaverse, obj: MetaObject, owner: Owner, registry: Registry) -> LedgerTx:
    """Return a locked escrow to Active, provided no counterpart is live."""
    if obj.location != mv.mv_id or obj.state is not LockState.LOCKED:
        raise Refusal(f"{obj.obj_id} is not locked in {mv.mv_id}")
    if obj.owner_id != owner.owner_id:
        raise Refusal(f"{owner.owner_id} does not own {obj.obj_id}")
    others = [o for o in registry.instances.get(obj.obj_id, ()) if o is not obj and o.state is not LockState.BURNED]
    if any(o.epoch > obj.epoch for o in others):
        raise Refusal(f"{obj.obj_id} has a live counterpart; cannot release")
    tx = LedgerTx(TxKind.RELEASE, _payload("release", obj, mv, owner.owner_id))
    try:
        mv.submit(tx)
    except DuplicateTxError as exc:
        raise Refusal(str(exc)) from None
    obj.state = LockState.ACTIVE
    obj.escrow = None
    return tx
