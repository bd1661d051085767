"""Scenario configuration and world construction."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .committee import select_committee
from .ledger import SimClock, SimLedger
from .metaverse import Customizer, Metaverse, MetaObject, MvKind, Owner, Registry, ServerLog
from .params import ProtocolParams
from .protocol import TransferRequest, World

SEED_ENV = "METAOPERA_SEED"
SCENARIOS = ("dm2dm", "cm2cm", "dm2cm", "cm2dm")

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "params": {"block_interval": 5, "committee_size": 400, "t_proof": 90},
    "relay": {"id": "metaopera", "k": 400, "nodes": 500, "committee_window": 2000, "formats": ["2D", "3D"]},
    "metaverses": [
        {"id": "axie", "kind": "DM", "k": 500, "nodes": 50, "formats": ["2D"]},
        {"id": "sandbox", "kind": "DM", "k": 500, "nodes": 50, "formats": ["2D", "3D"]},
        {"id": "minecraft", "kind": "CM", "ack_delay": 0, "formats": ["3D"], "nft": False},
        {"id": "roblox", "kind": "CM", "ack_delay": 0, "formats": ["3D"], "nft": False},
    ],
    "owners": [{"id": "alice", "balances": {"sandbox": 10, "roblox": 10, "metaopera": 10}}],
    "objects": [
        {"id": "axies", "owner": "alice", "kind": "asset", "format": "2D", "location": "axie",
         "properties": {"species": "beast"}},
        {"id": "steve", "owner": "alice", "kind": "avatar", "format": "3D", "location": "minecraft"},
        {"id": "axies-2", "owner": "alice", "kind": "asset", "format": "2D", "location": "axie"},
        {"id": "creeper", "owner": "alice", "kind": "avatar", "format": "3D", "location": "minecraft"},
    ],
    "customizers": [{"id": "caster", "fee": 1, "capability": [["2D", "3D"]]}],
    "transfers": {
        "dm2dm": {"object": "axies", "owner": "alice", "source": "axie", "target": "sandbox"},
        "cm2cm": {"object": "steve", "owner": "alice", "source": "minecraft", "target": "roblox"},
        "dm2cm": {"object": "axies-2", "owner": "alice", "source": "axie", "target": "roblox"},
        "cm2dm": {"object": "creeper", "owner": "alice", "source": "minecraft", "target": "sandbox"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    seed: int
    params: ProtocolParams
    relay: dict[str, Any]
    metaverses: list[dict[str, Any]]
    owners: list[dict[str, Any]]
    objects: list[dict[str, Any]]
    customizers: list[dict[str, Any]] = field(default_factory=list)
    transfers: dict[str, dict[str, Any]] = field(default_factory=dict)


def _require(d: dict, key: str, where: str) -> Any:
    if key not in d:
        raise ConfigError(f"{where}: missing '{key}'")
    return d[key]


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def parse_config(raw: dict[str, Any]) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in fields(ProtocolParams)}
    p = dict(raw.get("params") or {})
    bad = set(p) - known
    if bad:
        raise ConfigError(f"params: unknown keys {sorted(bad)}")
    try:
        params = ProtocolParams(**p)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params: {exc}") from None
    relay = dict(_require(raw, "relay", "config"))
    relay.setdefault("k", params.relay_k)
    if relay["k"] != params.relay_k:
        params = params.with_(relay_k=relay["k"])
    mvs = list(_require(raw, "metaverses", "config"))
    seed = raw.get("seed")
    cfg = ScenarioConfig(
        seed=default_seed() if seed is None else seed,
        params=params,
        relay=relay,
        metaverses=mvs,
        owners=list(raw.get("owners") or []),
        objects=list(raw.get("objects") or []),
        customizers=list(raw.get("customizers") or []),
        transfers=dict(raw.get("transfers") or {}),
    )
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    relay_id = _require(cfg.relay, "id", "relay")
    mv_ids = [relay_id]
    for i, mv in enumerate(cfg.metaverses):
        where = f"metaverses[{i}]"
        mv_ids.append(_require(mv, "id", where))
        kind = _require(mv, "kind", where)
        if kind not in ("DM", "CM"):
            raise ConfigError(f"{where}: kind must be DM or CM, got {kind!r}")
        if kind == "DM" and mv.get("nft") is False:
            raise ConfigError(f"{where}: a DM always supports NFTs")
    if len(set(mv_ids)) != len(mv_ids):
        raise ConfigError("metaverse ids must be unique")
    owner_ids = {_require(o, "id", f"owners[{i}]") for i, o in enumerate(cfg.owners)}
    obj_ids = set()
    for i, o in enumerate(cfg.objects):
        where = f"objects[{i}]"
        obj_ids.add(_require(o, "id", where))
        if _require(o, "owner", where) not in owner_ids:
            raise ConfigError(f"{where}: unknown owner {o['owner']!r}")
        if _require(o, "location", where) not in mv_ids:
            raise ConfigError(f"{where}: unknown location {o['location']!r}")
        _require(o, "format", where)
    for name, t in cfg.transfers.items():
        where = f"transfers.{name}"
        if _require(t, "object", where) not in obj_ids:
            raise ConfigError(f"{where}: unknown object {t['object']!r}")
        if _require(t, "owner", where) not in owner_ids:
            raise ConfigError(f"{where}: unknown owner {t['owner']!r}")
        for end in ("source", "target"):
            if _require(t, end, where) not in mv_ids:
                raise ConfigError(f"{where}: unknown {end} {t[end]!r}")
        if t["source"] == t["target"]:
            raise ConfigError(f"{where}: source and target must differ")


def load_config(path: str | Path | None = None) -> ScenarioConfig:
    if path is None:
        return parse_config(copy.deepcopy(DEFAULT_CONFIG))
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc.__class__.__name__})") from None
    return parse_config(raw)


def _nodes(prefix: str, spec: dict) -> dict[str, int]:
    weights = spec.get("weights")
    if weights is not None:
        return {f"{prefix}-{i:04d}": int(w) for i, w in enumerate(weights)}
    return {f"{prefix}-{i:04d}": 1 for i in range(int(spec.get("nodes", 10)))}


def build_world(cfg: ScenarioConfig, check_sweep: bool = True) -> World:
    params = cfg.params
    clock = SimClock()
    interval = params.block_interval
    r = cfg.relay
    relay_ledger = SimLedger(r["id"], _nodes(f"{r['id']}-n", r), interval, r["k"], cfg.seed,
                             r.get("schedule", "weighted"))
    metaverses = {
        r["id"]: Metaverse(r["id"], MvKind.DM, relay_ledger, clock, frozenset(r.get("formats", ["2D", "3D"])),
                           True, r.get("proof_latency")),
    }
    for mv in cfg.metaverses:
        fmts = frozenset(mv.get("formats", ["2D", "3D"]))
        if mv["kind"] == "DM":
            backend = SimLedger(mv["id"], _nodes(f"{mv['id']}-n", mv), mv.get("interval", interval),
                                mv.get("k", params.target_k), cfg.seed, mv.get("schedule", "weighted"))
            nft = True
        else:
            backend = ServerLog(ack_delay=mv.get("ack_delay", 0))
            nft = mv.get("nft", True)
        metaverses[mv["id"]] = Metaverse(mv["id"], MvKind(mv["kind"]), backend, clock, fmts, nft,
                                         mv.get("proof_latency"))

    window = r.get("committee_window", 5 * params.relay_k)
    world = World(
        metaverses, r["id"], committee=None, owners={}, clock=clock,
        customizers=[Customizer(c["id"], c.get("fee", 1), frozenset(tuple(x) for x in c.get("capability", [])))
                     for c in cfg.customizers],
        params=params, seed=cfg.seed, check_sweep=check_sweep,
    )
    world.advance_to((window - 1) * interval)
    world.committee = select_committee(relay_ledger, window, params.committee_size, seed=cfg.seed)

    for o in cfg.owners:
        world.owners[o["id"]] = Owner(o["id"], balances=dict(o.get("balances", {})))
    for o in cfg.objects:
        world.registry.add(MetaObject(o["id"], o["owner"], o.get("kind", "asset"), o["format"], o["location"],
                                      properties=dict(o.get("properties", {}))))
    return world


def transfer_request(cfg: ScenarioConfig, scenario: str) -> TransferRequest:
    try:
        t = cfg.transfers[scenario]
    except KeyError:
        raise ConfigError(f"scenario {scenario!r} is not defined in the config") from None
    return TransferRequest(t["object"], t["owner"], t["source"], t["target"], cfg.relay["id"])
