"""Simulated blockchains with fixed-interval block production.

Block ``h`` carries timestamp ``h * block_interval``. A block is *opened*
at its instant, collects every transaction submitted at that instant, and
is then sealed (its header digest fixed). This lets a transaction enter the
block of the instant it is submitted in, so confirmation latency is purely
the confirmation depth.
"""

from __future__ import annotations

import bisect
import enum
import hashlib
import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .params import DEFAULT_PARAMS

TX_BYTES = DEFAULT_PARAMS.tx_bytes
HEIGHT_BYTES = DEFAULT_PARAMS.height_bytes
_TX_HEADER = 3  # kind byte + 2-byte payload length
MAX_PAYLOAD = TX_BYTES - _TX_HEADER
GENESIS_PARENT = bytes(32)
_EMPTY_ROOT = hashlib.sha256(b"").digest()


class LedgerError(Exception):
    pass


class DuplicateTxError(LedgerError):
    pass


class UnknownHeightError(LedgerError):
    pass


def h256(*parts: bytes) -> bytes:
    return hashlib.sha256(b"".join(parts)).digest()


class TxKind(enum.IntEnum):
    PLAIN = 0
    LOCK = 1
    MINT = 2
    STAKE = 3
    CUSTOM_MINT = 4
    RELEASE = 5


@dataclass(frozen=True)
class LedgerTx:
    """A protocol transaction; always encodes to exactly ``TX_BYTES``.

    Payloads longer than the encoding allows are truncated on construction,
    so ``decode_tx(tx.encode()) == tx`` holds for every instance.
    """

    kind: TxKind
    payload: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TxKind(self.kind))
        if len(self.payload) > MAX_PAYLOAD:
            object.__setattr__(self, "payload", bytes(self.payload[:MAX_PAYLOAD]))

    def encode(self) -> bytes:
        body = bytes([self.kind]) + len(self.payload).to_bytes(2, "big") + self.payload
        return body.ljust(TX_BYTES, b"\x00")

    @property
    def encoded_size(self) -> int:
        return TX_BYTES

    @property
    def tx_id(self) -> bytes:
        return h256(self.encode())


def decode_tx(data: bytes) -> LedgerTx:
    if len(data) != TX_BYTES:
        raise ValueError(f"tx encoding must be {TX_BYTES} bytes, got {len(data)}")
    try:
        kind = TxKind(data[0])
    except ValueError:
        raise ValueError(f"unknown tx kind {data[0]}") from None
    n = int.from_bytes(data[1:3], "big")
    if n > MAX_PAYLOAD:
        raise ValueError(f"payload length {n} exceeds {MAX_PAYLOAD}")
    if any(data[_TX_HEADER + n:]):
        raise ValueError("non-zero tx padding")
    return LedgerTx(kind, data[_TX_HEADER:_TX_HEADER + n])


@dataclass
class SimClock:
    now: int = 0

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise ValueError(f"clock cannot move backwards ({self.now} -> {t})")
        self.now = t


@dataclass(slots=True)
class Block:
    height: int
    producer: str
    timestamp: int
    tx_list: list[LedgerTx] = field(default_factory=list)
    header_digest: bytes = b""


def tx_root(txs: Iterable[LedgerTx]) -> bytes:
    ids = b"".join(tx.tx_id for tx in txs)
    return h256(ids) if ids else _EMPTY_ROOT


def header_digest(height: int, producer: str, root: bytes, parent: bytes) -> bytes:
    p = producer.encode()
    return h256(height.to_bytes(HEIGHT_BYTES, "big"), len(p).to_bytes(2, "big"), p, root, parent)


class SimLedger:
    """Append-only chain with a seeded producer schedule and depth-k finality."""

    def __init__(
        self,
        ledger_id: str,
        producers: Mapping[str, int] | Sequence[str],
        block_interval: int = DEFAULT_PARAMS.block_interval,
        common_prefix_k: int = DEFAULT_PARAMS.relay_k,
        seed: int = 0,
        schedule: str | Sequence[str] = "weighted",
    ):
        if block_interval <= 0:
            raise ValueError("block_interval must be positive")
        if common_prefix_k < 0:
            raise ValueError("common_prefix_k must be >= 0")
        if not isinstance(producers, Mapping):
            producers = {p: 1 for p in producers}
        if not producers or any(w <= 0 for w in producers.values()):
            raise ValueError("producer set must be non-empty with positive weights")
        self.ledger_id = ledger_id
        self.block_interval = block_interval
        self.common_prefix_k = common_prefix_k
        self.weights = dict(sorted(producers.items()))
        self.schedule = schedule
        self.blocks: list[Block] = []
        self._pending: list[LedgerTx] = []
        self._open: Block | None = None
        self._where: dict[bytes, int] = {}
        self._next_producer = self._make_schedule(seed)

    def _make_schedule(self, seed: int):
        nodes = list(self.weights)
        if not isinstance(self.schedule, str):
            script = list(self.schedule)
            if not script or set(script) - set(nodes):
                raise ValueError("scripted schedule must name only configured producers")
            cycle = itertools.cycle(script)
            return lambda: next(cycle)
        if self.schedule == "round_robin":
            slots = [n for n in nodes for _ in range(self.weights[n])]
            cycle = itertools.cycle(slots)
            return lambda: next(cycle)
        if self.schedule != "weighted":
            raise ValueError(f"unknown producer schedule {self.schedule!r}")
        rng = random.Random(f"{seed}:{self.ledger_id}")
        cum = list(itertools.accumulate(self.weights.values()))
        total = cum[-1]
        if len(set(self.weights.values())) == 1:
            return lambda: nodes[rng.randrange(len(nodes))]
        return lambda: nodes[bisect.bisect_right(cum, rng.randrange(total))]

    @property
    def tip(self) -> int:
        """Height of the newest block (open or sealed); -1 when empty."""
        return len(self.blocks) - 1

    @property
    def next_height(self) -> int:
        """Height a transaction submitted now would be included at."""
        return len(self.blocks) if self._open is None else len(self.blocks) - 1

    @property
    def next_block_time(self) -> int:
        return len(self.blocks) * self.block_interval

    @property
    def is_open(self) -> bool:
        return self._open is not None

    def open_block(self) -> Block:
        if self._open is not None:
            raise LedgerError("a block is already open")
        h = len(self.blocks)
        block = Block(h, self._next_producer(), h * self.block_interval, self._pending)
        self._pending = []
        self.blocks.append(block)
        self._open = block
        return block

    def seal_block(self) -> Block:
        block = self._open
        if block is None:
            raise LedgerError("no open block")
        parent = self.blocks[-2].header_digest if len(self.blocks) > 1 else GENESIS_PARENT
        block.header_digest = header_digest(block.height, block.producer, tx_root(block.tx_list), parent)
        self._open = None
        return block

    def produce_block(self) -> Block:
        self.open_block()
        return self.seal_block()

    def submit(self, tx: LedgerTx) -> int:
        tid = tx.tx_id
        if tid in self._where:
            raise DuplicateTxError(f"{self.ledger_id}: duplicate tx {tid.hex()[:16]}")
        if self._open is not None:
            self._open.tx_list.append(tx)
            h = self._open.height
        else:
            self._pending.append(tx)
            h = len(self.blocks)
        self._where[tid] = h
        return h

    def inclusion_height(self, tx_id: bytes) -> int | None:
        return self._where.get(tx_id)

    def confirmed(self, inclusion_height: int) -> bool:
        if not 0 <= inclusion_height <= self.tip:
            raise UnknownHeightError(f"{self.ledger_id}: no block at height {inclusion_height}")
        return self.tip >= inclusion_height + self.common_prefix_k

    def confirmed_height(self, tx_id: bytes, now: int | None = None) -> int | None:
        """Inclusion height of ``tx_id`` if it is confirmed, else None."""
        h = self._where.get(tx_id)
        if h is None or h > self.tip or not self.confirmed(h):
            return None
        return h

    def producers_in(self, first: int, last: int) -> list[str]:
        return [b.producer for b in self.blocks[first:last + 1]]

    def verify_chain(self, upto: int | None = None) -> bool:
        """Recompute header digests over a prefix and compare with stored ones."""
        parent = GENESIS_PARENT
        for b in self.blocks[: (upto + 1) if upto is not None else None]:
            if b is self._open:
                break
            if b.header_digest != header_digest(b.height, b.producer, tx_root(b.tx_list), parent):
                return False
            parent = b.header_digest
        return True


def advance_blocks(ledger: SimLedger, clock: SimClock, n: int) -> list[Block]:
    """Produce ``n`` blocks and move the clock forward ``n`` intervals."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    new = [ledger.produce_block() for _ in range(n)]
    clock.advance_to(clock.now + n * ledger.block_interval)
    return new


def submit_tx(ledger: SimLedger, tx: LedgerTx) -> int:
    return ledger.submit(tx)


def is_confirmed(ledger: SimLedger, inclusion_height: int) -> bool:
    return ledger.confirmed(inclusion_height)
