import json

import pytest

from metaopera.bench import LatencyModel, reference_world
from metaopera.config import transfer_request
from metaopera.metaverse import LockState, MetaObject, ObjKind
from metaopera.protocol import HAPPY_PATH, State, TransferRequest, simulated_duration

DM_PATH = [s for s in HAPPY_PATH if s is not State.CUSTOMIZED]


def run(world, cfg, scenario, **kw):
    return world.run_transfer(transfer_request(cfg, scenario), **kw)


def test_dm2dm_workflow(small_world, small_cfg):
    trace = run(small_world, small_cfg, "dm2dm")
    assert trace.completed
    assert trace.states == DM_PATH
    assert [t["kind"] for t in trace.txs] == ["LOCK", "MINT", "STAKE", "MINT"]
    assert len(trace.proofs) == 2 and all(p["verified"] for p in trace.proofs)
    target = small_world.registry.find("axies", "sandbox")
    assert target.active and target.kind is ObjKind.NFT
    assert small_world.registry.find("axies", "axie").state is LockState.LOCKED
    assert small_world.registry.find("axies", "metaopera").state is LockState.LOCKED


def test_cm2cm_ends_with_custom_mint_of_derivative(small_world, small_cfg):
    trace = run(small_world, small_cfg, "cm2cm")
    assert trace.completed
    assert trace.states == list(HAPPY_PATH)
    assert trace.txs[-1]["kind"] == "CUSTOM_MINT" and trace.txs[-1]["mv"] == "roblox"
    assert small_world.registry.find("steve", "roblox").kind is ObjKind.NFT_DERIVATIVE


@pytest.mark.parametrize("scenario", ["dm2cm", "cm2dm"])
def test_mixed_scenarios_complete(small_world, small_cfg, scenario):
    trace = run(small_world, small_cfg, scenario)
    assert trace.completed, trace.reason
    assert not trace.sweep_violations


def test_locked_object_fails_at_source_lock(small_world, small_cfg):
    small_world.registry.find("axies", "axie").state = LockState.LOCKED
    trace = run(small_world, small_cfg, "dm2dm")
    assert trace.terminal == "Failed"
    assert trace.failed_step is State.SOURCE_LOCKED


def test_unknown_ids_fail_cleanly(small_world):
    trace = small_world.run_transfer(TransferRequest("nope", "alice", "axie", "sandbox", "metaopera"))
    assert trace.terminal == "Failed" and trace.failed_step is State.INITIATED
    trace = small_world.run_transfer(TransferRequest("axies", "alice", "axie", "sandbox", "elsewhere"))
    assert trace.terminal == "Failed"


def test_event_times_non_decreasing(small_world, small_cfg):
    trace = run(small_world, small_cfg, "dm2cm")
    times = [e.time for e in trace.events]
    assert times == sorted(times)


def test_dm2dm_duration_small_world(small_world, small_cfg):
    # source k=3, relay k=2 twice, target k=3, 5 s blocks, two 10 s proofs
    trace = run(small_world, small_cfg, "dm2dm", start_at=small_world.next_instant())
    assert simulated_duration(trace) == 3 * 5 + 10 + 2 * 2 * 5 + 10 + 3 * 5


def test_cm2cm_duration_is_relay_confirmation_plus_proofs(small_world, small_cfg):
    trace = run(small_world, small_cfg, "cm2cm")
    assert simulated_duration(trace) == 2 * 2 * 5 + 2 * 10


def add_object(world, obj_id="thing", location="axie"):
    world.registry.add(MetaObject(obj_id, "owner", "asset", "2D", location))
    return TransferRequest(obj_id, "owner", location, "sandbox", "metaopera")


def test_dm2dm_duration_with_reference_parameters():
    world = reference_world()
    trace = world.run_transfer(add_object(world), start_at=world.next_instant())
    assert trace.completed
    assert simulated_duration(trace) == 2 * 400 * 5 + 90 + 500 * 5 == 6590


def test_zero_delay_world_takes_no_time():
    world = reference_world(LatencyModel(relay_k=0, target_k=0, block_interval=5, t_proof=0))
    trace = world.run_transfer(add_object(world), start_at=world.next_instant())
    assert trace.completed
    assert simulated_duration(trace) == 0


def test_duration_requires_completion(small_world, small_cfg):
    trace = run(small_world, small_cfg, "dm2dm", fail_at=State.RELAY_STAKED)
    with pytest.raises(ValueError):
        simulated_duration(trace)


def test_every_mint_is_preceded_by_a_verified_proof(small_world, small_cfg):
    for scenario in ("dm2dm", "cm2cm"):
        trace = run(small_world, small_cfg, scenario)
        escrow = [t for t in trace.txs if t["kind"] in ("LOCK", "STAKE")]
        mints = [t for t in trace.txs if t["kind"] in ("MINT", "CUSTOM_MINT")]
        assert len(escrow) == len(mints) == len(trace.proofs) == 2
        for esc, proof, mint in zip(escrow, trace.proofs, mints):
            assert proof["tx_id"] == esc["tx_id"] and proof["verified"]
            assert esc["time"] <= proof["time"] <= mint["time"]


@pytest.mark.parametrize("scenario", ["dm2dm", "cm2cm"])
def test_injected_failure_at_every_state_is_undone_by_release(small_cfg, scenario):
    from metaopera.config import build_world

    states = DM_PATH if scenario == "dm2dm" else list(HAPPY_PATH)
    for state in states:
        world = build_world(small_cfg)
        req = transfer_request(small_cfg, scenario)
        before = world.registry.snapshot()
        balances = {k: dict(o.balances) for k, o in world.owners.items()}
        trace = world.run_transfer(req, fail_at=state)
        assert trace.terminal == "Failed" and trace.failed_step is state
        assert not trace.sweep_violations
        assert len(world.registry.active(req.obj_id)) <= 1
        src = world.registry.find(req.obj_id, req.source)
        if src.state is LockState.LOCKED:
            world.release(req)
        assert world.registry.snapshot() == before, state
        assert {k: o.balances for k, o in world.owners.items()} == balances


def test_released_object_can_transfer_again(small_world, small_cfg):
    req = transfer_request(small_cfg, "dm2dm")
    assert small_world.run_transfer(req, fail_at=State.RELAY_STAKED).terminal == "Failed"
    small_world.release(req)
    trace = small_world.run_transfer(req)
    assert trace.completed, trace.reason


def test_concurrent_transfers_of_one_object(small_world, small_cfg):
    req = transfer_request(small_cfg, "dm2dm")
    other = TransferRequest(req.obj_id, req.owner_id, req.source, "roblox", req.relay)
    t = small_world.next_instant()
    a, b = small_world.run_transfers([(req, None, t), (other, None, t)])
    assert a.completed
    assert b.terminal == "Failed" and b.failed_step is State.SOURCE_LOCKED
    assert len(small_world.registry.active(req.obj_id)) == 1


def test_completed_transfer_leaves_one_active_instance(small_world, small_cfg):
    for scenario in ("dm2dm", "cm2cm", "dm2cm", "cm2dm"):
        req = transfer_request(small_cfg, scenario)
        assert run(small_world, small_cfg, scenario).completed
        instances = small_world.registry.instances[req.obj_id]
        assert [o.location for o in instances if o.active] == [req.target]
        assert sum(o.state is LockState.LOCKED for o in instances) == 2


def test_export_is_one_json_record_per_line(small_world, small_cfg):
    trace = run(small_world, small_cfg, "cm2cm")
    records = [json.loads(line) for line in trace.export().splitlines()]
    assert records[0]["record"] == "request"
    events = [r for r in records if r["record"] == "event"]
    assert [e["state"] for e in events] == [s.value for s in HAPPY_PATH]
    assert records[-1] == {"record": "terminal", "terminal": "Completed", "reason": None, "failed_step": None}


def test_request_rejects_same_source_and_target():
    with pytest.raises(ValueError):
        TransferRequest("o", "a", "x", "x", "r")


def test_round_trip_supersedes_stale_escrows(small_world, small_cfg):
    assert run(small_world, small_cfg, "dm2dm").completed
    back = small_world.run_transfer(TransferRequest("axies", "alice", "sandbox", "axie", "metaopera"))
    assert back.completed, back.reason
    reg = small_world.registry
    home = reg.find("axies", "axie")
    assert home.active and home.epoch == 4
    assert [o.location for o in reg.active("axies")] == ["axie"]
    assert len(reg.instances["axies"]) == 3


def test_failed_round_trip_restores_superseded_escrow(small_world, small_cfg):
    assert run(small_world, small_cfg, "dm2dm").completed
    reg = small_world.registry
    stale = reg.find("axies", "metaopera")
    request = TransferRequest("axies", "alice", "sandbox", "axie", "metaopera")
    trace = small_world.run_transfer(request, fail_at=State.RELAY_STAKED)
    assert trace.failed_step is State.RELAY_STAKED
    assert reg.find("axies", "metaopera") is stale
    small_world.release(request)
    assert [o.location for o in reg.active("axies")] == ["sandbox"]


def test_only_older_escrows_are_superseded(small_world, small_cfg):
    world, reg = small_world, small_world.registry
    reg.add(MetaObject("axies", "alice", "asset", "2D", "metaopera", state=LockState.LOCKED, epoch=0))
    trace = run(world, small_cfg, "dm2dm")
    assert trace.failed_step is State.RELAY_MINTED
    assert "already has an instance" in trace.reason
