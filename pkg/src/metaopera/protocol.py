"""End-to-end transfers between metaverses through the relay chain.

Each transfer is a generator-based process driven by :class:`World`. A
process yields the simulated time it wants to resume at; the world opens
the blocks of every chain at that instant first, so a process resuming at
a confirmation time sees the confirming block and may add transactions to
it.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Generator, Iterable, Mapping

from .committee import Committee, CrossProof, generate_proof, verify_proof
from .ledger import LedgerTx, SimClock, SimLedger
from .metaverse import (
    Customizer,
    Metaverse,
    MetaObject,
    MvKind,
    Owner,
    Refusal,
    Registry,
    lock_object,
    mint_counterpart,
    needs_customizer,
    release,
    stake_object,
)
from .params import DEFAULT_PARAMS, ProtocolParams


class State(str, enum.Enum):
    INITIATED = "Initiated"
    SOURCE_LOCKED = "SourceLocked"
    SOURCE_PROVED = "SourceProved"
    RELAY_MINTED = "RelayMinted"
    RELAY_STAKED = "RelayStaked"
    RELAY_PROVED = "RelayProved"
    CUSTOMIZED = "Customized"
    TARGET_MINTED = "TargetMinted"
    COMPLETED = "Completed"


HAPPY_PATH = tuple(State)


@dataclass(frozen=True)
class TransferRequest:
    obj_id: str
    owner_id: str
    source: str
    target: str
    relay: str

    def __post_init__(self) -> None:
        if self.source == self.target:
            raise ValueError("source and target must differ")


@dataclass
class TraceEvent:
    state: State
    time: int
    ref: str | None = None


@dataclass
class TransferTrace:
    request: TransferRequest
    events: list[TraceEvent] = field(default_factory=list)
    terminal: str | None = None
    reason: str | None = None
    failed_step: State | None = None
    txs: list[dict] = field(default_factory=list)
    proofs: list[dict] = field(default_factory=list)
    confirmations: list[dict] = field(default_factory=list)
    sweep_violations: list[dict] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.terminal == "Completed"

    @property
    def states(self) -> list[State]:
        return [e.state for e in self.events]

    def export(self) -> str:
        """One JSON record per line: request, events, then the terminal record."""
        lines = [json.dumps({"record": "request", **self.request.__dict__}, sort_keys=True)]
        for e in self.events:
            lines.append(json.dumps({"record": "event", "state": e.state.value, "time": e.time, "ref": e.ref},
                                    sort_keys=True))
        for kind, rows in (("tx", self.txs), ("proof", self.proofs), ("confirmation", self.confirmations)):
            lines.extend(json.dumps({"record": kind, **r}, sort_keys=True) for r in rows)
        end = {"record": "terminal", "terminal": self.terminal, "reason": self.reason,
               "failed_step": self.failed_step.value if self.failed_step else None}
        lines.append(json.dumps(end, sort_keys=True))
        return "\n".join(lines) + "\n"


def simulated_duration(trace: TransferTrace) -> int:
    if not trace.completed:
        raise ValueError(f"trace is not completed ({trace.terminal}: {trace.reason})")
    return trace.events[-1].time - trace.events[0].time


class InjectedFailure(Refusal):
    pass


Process = Generator[int, None, None]


class World:
    """All metaverses, the relay committee, owners and the object registry."""

    def __init__(
        self,
        metaverses: Mapping[str, Metaverse],
        relay_id: str,
        committee: Committee,
        owners: Mapping[str, Owner],
        clock: SimClock,
        registry: Registry | None = None,
        customizers: Iterable[Customizer] = (),
        params: ProtocolParams = DEFAULT_PARAMS,
        seed: int = 0,
        check_sweep: bool = True,
    ):
        self.metaverses = dict(metaverses)
        if relay_id not in self.metaverses or self.metaverses[relay_id].kind is not MvKind.DM:
            raise ValueError(f"relay {relay_id!r} must be a DM in the world")
        self.relay_id = relay_id
        self.committee = committee
        self.owners = dict(owners)
        self.clock = clock
        self.registry = registry if registry is not None else Registry()
        self.customizers = sorted(customizers, key=lambda c: c.cust_id)
        self.params = params
        self.rng = random.Random(f"world:{seed}")
        self.check_sweep = check_sweep
        self._queue: list[tuple[int, int, Process]] = []
        self._seq = itertools.count()

    @property
    def ledgers(self) -> list[SimLedger]:
        return [mv.backend for mv in self.metaverses.values() if mv.kind is MvKind.DM]

    # -- scheduler ---------------------------------------------------------

    def spawn(self, proc: Process, at: int | None = None) -> None:
        t = self.clock.now if at is None else at
        if t < self.clock.now:
            raise ValueError(f"cannot schedule in the past ({t} < {self.clock.now})")
        heapq.heappush(self._queue, (t, next(self._seq), proc))

    def _sync_ledgers(self, t: int) -> list[SimLedger]:
        opened = []
        for ledger in self.ledgers:
            while ledger.next_block_time < t:
                ledger.produce_block()
            if ledger.next_block_time == t:
                ledger.open_block()
                opened.append(ledger)
        return opened

    def run(self) -> None:
        q = self._queue
        while q:
            t = q[0][0]
            opened = self._sync_ledgers(t)
            self.clock.advance_to(t)
            while q and q[0][0] == t:
                _, _, proc = heapq.heappop(q)
                try:
                    resume = next(proc)
                except StopIteration:
                    continue
                if resume < t:
                    raise RuntimeError(f"process asked to resume in the past ({resume} < {t})")
                heapq.heappush(q, (resume, next(self._seq), proc))
            for ledger in opened:
                ledger.seal_block()

    def next_instant(self) -> int:
        """Earliest time at which some chain still has a block to produce."""
        return min(ledger.next_block_time for ledger in self.ledgers)

    def advance_to(self, t: int) -> None:
        """Produce blocks on every chain up to and including instant ``t``."""
        for ledger in self._sync_ledgers(t):
            ledger.seal_block()
        self.clock.advance_to(t)

    # -- transfers ---------------------------------------------------------

    def start_transfer(self, request: TransferRequest, fail_at: State | None = None,
                       start_at: int | None = None) -> TransferTrace:
        trace = TransferTrace(request)
        self.spawn(self._transfer(trace, fail_at), start_at)
        return trace

    def run_transfer(self, request: TransferRequest, fail_at: State | None = None,
                     start_at: int | None = None) -> TransferTrace:
        trace = self.start_transfer(request, fail_at, start_at)
        self.run()
        return trace

    def run_transfers(self, requests: Iterable[tuple[TransferRequest, State | None, int | None]]) -> list[TransferTrace]:
        traces = [self.start_transfer(r, f, s) for r, f, s in requests]
        self.run()
        return traces

    def release(self, request: TransferRequest) -> LedgerTx:
        mv = self.metaverses[request.source]
        obj = self.registry.find(request.obj_id, request.source)
        if obj is None:
            raise Refusal(f"{request.obj_id} has no instance in {request.source}")
        return release(mv, obj, self.owners[request.owner_id], self.registry)

    def _record(self, trace: TransferTrace, state: State, ref: str | None = None) -> None:
        trace.events.append(TraceEvent(state, self.clock.now, ref))
        if self.check_sweep:
            bad = self.registry.sweep()
            if bad:
                trace.sweep_violations.append({"state": state.value, "time": self.clock.now, "objects": bad})

    def _note_tx(self, trace: TransferTrace, mv: Metaverse, tx: LedgerTx) -> None:
        trace.txs.append({"mv": mv.mv_id, "kind": tx.kind.name, "tx_id": tx.tx_id.hex(), "time": self.clock.now})

    def _await_confirmation(self, trace: TransferTrace, mv: Metaverse, tx: LedgerTx) -> Process:
        t = mv.confirmation_time(tx.tx_id)
        if t > self.clock.now:
            yield t
        trace.confirmations.append({"mv": mv.mv_id, "tx_id": tx.tx_id.hex(), "time": self.clock.now})

    def _attest(self, trace: TransferTrace, mv: Metaverse, tx: LedgerTx) -> Generator[int, None, CrossProof]:
        latency = self.params.t_proof if mv.proof_latency is None else mv.proof_latency
        proof = generate_proof(self.committee, mv.backend, tx, self.rng.randbytes(self.params.rand_bytes),
                               now=self.clock.now, params=self.params, t_proof=latency)
        if latency:
            yield self.clock.now + latency
        trace.proofs.append({"mv": mv.mv_id, "digest": proof.digest.hex(), "bytes": len(proof.encode()),
                             "tx_id": tx.tx_id.hex(), "verified": verify_proof(self.committee, proof, self.params),
                             "time": self.clock.now})
        return proof

    def _transfer(self, trace: TransferTrace, fail_at: State | None) -> Process:
        req = trace.request
        minted: list[MetaObject] = []
        fees: list[tuple[Owner, str, int]] = []
        step = State.INITIATED

        def enter(state: State) -> None:
            nonlocal step
            step = state
            if fail_at is state:
                raise InjectedFailure(f"injected failure at {state.value}")

        try:
            enter(State.INITIATED)
            try:
                src = self.metaverses[req.source]
                dst = self.metaverses[req.target]
                owner = self.owners[req.owner_id]
            except KeyError as exc:
                raise Refusal(f"unknown id {exc.args[0]!r}") from None
            if req.relay != self.relay_id:
                raise Refusal(f"{req.relay!r} is not the relay metaverse")
            relay = self.metaverses[self.relay_id]
            obj = self.registry.find(req.obj_id, req.source)
            if obj is None:
                raise Refusal(f"{req.obj_id} has no instance in {req.source}")
            self._record(trace, State.INITIATED)

            enter(State.SOURCE_LOCKED)
            lock_tx = lock_object(src, obj, owner)
            self._note_tx(trace, src, lock_tx)
            self._record(trace, State.SOURCE_LOCKED, lock_tx.tx_id.hex())

            yield from self._await_confirmation(trace, src, lock_tx)
            enter(State.SOURCE_PROVED)
            proof1 = yield from self._attest(trace, src, lock_tx)
            self._record(trace, State.SOURCE_PROVED, proof1.digest.hex())

            enter(State.RELAY_MINTED)
            relay_obj = mint_counterpart(relay, proof1, owner, None, self.committee, self.registry, self.params)
            minted.append(relay_obj)
            self._note_tx(trace, relay, relay_obj.origin_tx)
            self._record(trace, State.RELAY_MINTED, relay_obj.origin_tx.tx_id.hex())

            yield from self._await_confirmation(trace, relay, relay_obj.origin_tx)
            enter(State.RELAY_STAKED)
            stake_tx = stake_object(relay, relay_obj, owner)
            self._note_tx(trace, relay, stake_tx)
            self._record(trace, State.RELAY_STAKED, stake_tx.tx_id.hex())

            yield from self._await_confirmation(trace, relay, stake_tx)
            enter(State.RELAY_PROVED)
            proof2 = yield from self._attest(trace, relay, stake_tx)
            self._record(trace, State.RELAY_PROVED, proof2.digest.hex())

            customizer = None
            if needs_customizer(dst, relay_obj):
                enter(State.CUSTOMIZED)
                customizer = self._pick_customizer(relay_obj, dst)
                self._record(trace, State.CUSTOMIZED, customizer.cust_id)

            enter(State.TARGET_MINTED)
            balance_before = owner.balances.get(dst.mv_id, 0)
            target_obj = mint_counterpart(dst, proof2, owner, customizer, self.committee, self.registry, self.params)
            minted.append(target_obj)
            if customizer is not None:
                fees.append((owner, dst.mv_id, balance_before - owner.balances.get(dst.mv_id, 0)))
            self._note_tx(trace, dst, target_obj.origin_tx)
            self._record(trace, State.TARGET_MINTED, target_obj.origin_tx.tx_id.hex())

            yield from self._await_confirmation(trace, dst, target_obj.origin_tx)
            enter(State.COMPLETED)
            self._record(trace, State.COMPLETED)
            trace.terminal = "Completed"
        except Refusal as exc:
            for obj in reversed(minted):
                self._unwind(obj)
            for owner_, mv_id, fee in fees:
                owner_.balances[mv_id] += fee
            trace.terminal = "Failed"
            trace.reason = str(exc)
            trace.failed_step = step

    def _unwind(self, obj: MetaObject) -> None:
        # leave alone anything a later transfer has already built on
        peers = self.registry.instances.get(obj.obj_id, [])
        if not any(o is obj for o in peers) or any(o.epoch > obj.epoch for o in peers):
            return
        self.registry.remove(obj)
        old = obj.superseded
        if old is not None and self.registry.find(old.obj_id, old.location) is None:
            self.registry.add(old)

    def _pick_customizer(self, obj: MetaObject, dst: Metaverse) -> Customizer:
        for c in self.customizers:
            if c.target_format(obj.format, dst.supported_formats) is not None:
                return c
        raise Refusal(f"no customizer can adapt {obj.format} for {dst.mv_id}")
