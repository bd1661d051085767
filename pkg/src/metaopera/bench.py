"""Proof-size sweep, latency model and the seeded latency experiment."""

from __future__ import annotations

import csv
import enum
import io
import random
import statistics
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from . import params as P
from .committee import generate_proof, node_key, proof_size_bytes, select_committee
from .ledger import LedgerTx, SimClock, SimLedger, TxKind
from .metaverse import Customizer, Metaverse, MetaObject, MvKind, Owner
from .params import DEFAULT_PARAMS, ProtocolParams
from .protocol import TransferRequest, TransferTrace, World, simulated_duration


class Scheme(str, enum.Enum):
    METAOPERA = "MetaOpera"
    SIDECHAINS = "SidechainsBaseline"


@dataclass(frozen=True)
class LatencyModel:
    relay_k: int = DEFAULT_PARAMS.relay_k
    target_k: int = DEFAULT_PARAMS.target_k
    block_interval: int = DEFAULT_PARAMS.block_interval
    t_proof: int = DEFAULT_PARAMS.t_proof
    scheme: Scheme = Scheme.METAOPERA

    def __post_init__(self) -> None:
        if self.block_interval <= 0:
            raise ValueError("block_interval must be positive")
        if self.relay_k < 0 or self.target_k < 0 or self.t_proof < 0:
            raise ValueError("relay_k, target_k and t_proof must be >= 0")


def expected_latency(model: LatencyModel) -> int:
    """Seconds for one DM-to-DM transfer under ``model``."""
    if model.scheme is Scheme.SIDECHAINS:
        return (10 * model.relay_k + model.target_k) * model.block_interval
    return (2 * model.relay_k + model.target_k) * model.block_interval + model.t_proof


def hours(seconds: int | float, places: int = 3) -> Decimal:
    q = Decimal(1).scaleb(-places)
    return (Decimal(seconds) / Decimal(3600)).quantize(q, rounding=ROUND_HALF_UP)


def latency_table(model: LatencyModel) -> list[dict]:
    """Component and total times for both schemes, laid out like the reference table."""
    k, kp, dt, t = model.relay_k, model.target_k, model.block_interval, model.t_proof
    ours = {"relay_confirm": ("2k", 2 * k, 2 * k * dt), "proof": ("t", None, t),
            "target_confirm": ("k'", kp, kp * dt)}
    side = {"relay_confirm": ("10k", 10 * k, 10 * k * dt), "proof": ("(in 10k)", None, 0),
            "target_confirm": ("k'", kp, kp * dt)}
    rows = []
    for name in ("relay_confirm", "proof", "target_confirm"):
        (e1, b1, s1), (e2, b2, s2) = ours[name], side[name]
        rows.append({
            "row": name, "metaopera_expr": e1, "metaopera_blocks": b1, "metaopera_s": s1,
            "metaopera_h": hours(s1), "sidechains_expr": e2, "sidechains_blocks": b2, "sidechains_s": s2,
            "sidechains_h": hours(s2),
            "reference_metaopera_h": P.TABLE_ROWS_H["metaopera"].get(name),
            "reference_sidechains_h": P.TABLE_ROWS_H["sidechains"].get(name),
        })
    total_ours = expected_latency(model)
    total_side = expected_latency(LatencyModel(k, kp, dt, t, Scheme.SIDECHAINS))
    rows.append({
        "row": "total", "metaopera_expr": "2k + t + k'", "metaopera_blocks": 2 * k + kp,
        "metaopera_s": total_ours, "metaopera_h": hours(total_ours),
        "sidechains_expr": "10k + k'", "sidechains_blocks": 10 * k + kp, "sidechains_s": total_side,
        "sidechains_h": hours(total_side),
        "reference_metaopera_h": P.TABLE_METAOPERA_H, "reference_sidechains_h": P.TABLE_SIDECHAINS_H,
    })
    return rows


TABLE_COLUMNS = ["row", "metaopera_expr", "metaopera_blocks", "metaopera_s", "metaopera_h",
                 "sidechains_expr", "sidechains_blocks", "sidechains_s", "sidechains_h",
                 "reference_metaopera_h", "reference_sidechains_h"]


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in TABLE_COLUMNS})
    return buf.getvalue()


# -- proof-size sweep -------------------------------------------------------

@dataclass
class SweepWorld:
    """A relay chain whose last ``window`` blocks have ``n_nodes`` distinct producers."""

    ledger: SimLedger
    window: int
    tx: LedgerTx
    seed: int = 0

    @classmethod
    def build(cls, n_nodes: int, seed: int = 0, params: ProtocolParams = DEFAULT_PARAMS) -> "SweepWorld":
        nodes = [f"sweep-{i:05d}" for i in range(n_nodes)]
        ledger = SimLedger("metaopera", nodes, params.block_interval, params.relay_k, seed, "round_robin")
        tx = LedgerTx(TxKind.STAKE, f'{{"op":"stake","obj":"sweep","seed":{seed}}}'.encode())
        ledger.submit(tx)
        for _ in range(max(n_nodes, params.relay_k + 1)):
            ledger.produce_block()
        return cls(ledger, n_nodes, tx, seed)


@dataclass
class SweepResult:
    rows: list[tuple[int, int]]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["committee_size,proof_bytes"]
        lines.extend(f"{c},{b}" for c, b in self.rows)
        return "\n".join(lines) + "\n"


def run_proof_sweep(c_min: int, c_max: int, step: int = 1, world: SweepWorld | None = None,
                    seed: int = 0, params: ProtocolParams = DEFAULT_PARAMS) -> SweepResult:
    if not 1 <= c_min <= c_max:
        raise ValueError(f"need 1 <= c_min <= c_max, got {c_min}, {c_max}")
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if world is None:
        world = SweepWorld.build(c_max, seed, params)
    ledger = world.ledger
    window = ledger.producers_in(len(ledger.blocks) - world.window, len(ledger.blocks) - 1)
    keys = {node: node_key(node, world.seed) for node in sorted(set(window))}
    rng = random.Random(f"sweep:{world.seed}")
    rows = []
    for c in range(c_min, c_max + 1, step):
        committee = select_committee(ledger, world.window, c, keys=keys)
        proof = generate_proof(committee, ledger, world.tx, rng.randbytes(params.rand_bytes), params=params)
        rows.append((c, len(proof.encode())))
    meta = {"seed": world.seed, "c_min": c_min, "c_max": c_max, "step": step, **_param_meta(params)}
    return SweepResult(rows, meta)


def _param_meta(params: ProtocolParams) -> dict:
    d = asdict(params)
    d["signer_fraction"] = str(params.signer_fraction)
    return d


# -- latency experiment -----------------------------------------------------

class ExperimentAborted(RuntimeError):
    def __init__(self, trace: TransferTrace):
        super().__init__(f"transfer failed at {trace.failed_step}: {trace.reason}")
        self.trace = trace


def reference_world(model: LatencyModel = LatencyModel(), seed: int = 0, committee_size: int = 400,
                relay_nodes: int = 500, committee_window: int = 2000) -> World:
    """Relay and target chains with the reference parameters.

    The origin chain has zero confirmation depth and zero attestation time,
    so a DM-to-DM transfer costs exactly the relay-to-target leg that the
    reference table accounts for.
    """
    params = DEFAULT_PARAMS.with_(relay_k=model.relay_k, target_k=model.target_k,
                                  block_interval=model.block_interval, t_proof=model.t_proof,
                                  committee_size=committee_size)
    clock = SimClock()
    dt = model.block_interval
    relay = SimLedger("metaopera", {f"mo-{i:04d}": 1 for i in range(relay_nodes)}, dt, model.relay_k, seed)
    origin = SimLedger("axie", {f"ax-{i:03d}": 1 for i in range(20)}, dt, 0, seed)
    target = SimLedger("sandbox", {f"sb-{i:03d}": 1 for i in range(20)}, dt, model.target_k, seed)
    mvs = {
        "metaopera": Metaverse("metaopera", MvKind.DM, relay, clock),
        "axie": Metaverse("axie", MvKind.DM, origin, clock, frozenset({"2D"}), proof_latency=0),
        "sandbox": Metaverse("sandbox", MvKind.DM, target, clock),
    }
    world = World(mvs, "metaopera", None, {"owner": Owner("owner")}, clock,
                  customizers=[Customizer("caster", 1, frozenset({("2D", "3D")}))], params=params, seed=seed)
    world.advance_to((committee_window - 1) * dt)
    world.committee = select_committee(relay, committee_window, committee_size, seed=seed)
    return world


@dataclass
class LatencySummary:
    n: int
    mean_s: float
    min_s: int
    max_s: int
    expected_s: int
    abs_error_s: float
    rel_error: float
    durations: list[int]
    metadata: dict

    def runs_csv(self) -> str:
        lines = ["run,duration_s,duration_h"]
        lines.extend(f"{i},{d},{hours(d)}" for i, d in enumerate(self.durations))
        return "\n".join(lines) + "\n"

    def report(self) -> str:
        keys = ["n", "mean_s", "min_s", "max_s", "expected_s", "abs_error_s", "rel_error"]
        out = [f"{k}={getattr(self, k)}" for k in keys]
        out.extend(f"{k}={v}" for k, v in sorted(self.metadata.items()))
        return "\n".join(out) + "\n"


def run_latency_experiment(n_transfers: int, model: LatencyModel = LatencyModel(), world: World | None = None,
                           seed: int = 0, source_id: str = "axie", target_id: str = "sandbox") -> LatencySummary:
    """Run ``n_transfers`` DM-to-DM transfers one after another in ``world``.

    Each request arrives at a seeded offset inside a block interval, so the
    wait for the first block varies between runs.
    """
    if n_transfers < 1:
        raise ValueError(f"n_transfers must be >= 1, got {n_transfers}")
    if world is None:
        world = reference_world(model, seed)
    rng = random.Random(f"arrivals:{seed}")
    dt = model.block_interval
    source = world.metaverses[source_id]
    target = world.metaverses[target_id]
    owner = next(iter(world.owners.values()))
    fmt = sorted(source.supported_formats)[0]
    durations = []
    for i in range(n_transfers):
        obj_id = f"exp-{seed}-{i:05d}"
        world.registry.add(MetaObject(obj_id, owner.owner_id, "asset", fmt, source.mv_id))
        req = TransferRequest(obj_id, owner.owner_id, source.mv_id, target.mv_id, world.relay_id)
        trace = world.run_transfer(req, start_at=world.clock.now + 1 + rng.randrange(dt))
        if not trace.completed:
            raise ExperimentAborted(trace)
        durations.append(simulated_duration(trace))
    expected = expected_latency(model)
    mean = statistics.fmean(durations)
    meta = {
        "seed": seed, "relay_k": model.relay_k, "target_k": model.target_k, "block_interval": dt,
        "t_proof": model.t_proof, "source": source.mv_id, "target": target.mv_id,
        "expected_h": str(hours(expected)),
        "reference_table_h": P.TABLE_METAOPERA_H,
        "reference_text_min": P.TEXT_TRANSFER_MIN,
        "reference_discrepancy": (f"table {P.TABLE_METAOPERA_H} h vs text {P.TEXT_TRANSFER_MIN} min "
                                  f"({P.TEXT_TRANSFER_MIN / 60:.3f} h); model follows the table"),
    }
    return LatencySummary(n_transfers, mean, min(durations), max(durations), expected,
                          abs(mean - expected), abs(mean - expected) / expected if expected else 0.0,
                          durations, meta)
