from decimal import Decimal

import pytest

from metaopera.bench import (
    LatencyModel,
    Scheme,
    SweepWorld,
    expected_latency,
    hours,
    latency_table,
    run_latency_experiment,
    run_proof_sweep,
    table_csv,
)
from metaopera.committee import InsufficientProducersError, proof_size_bytes


def test_metaopera_reference_latency():
    s = expected_latency(LatencyModel(400, 500, 5, 90))
    assert s == 6590
    assert abs(float(hours(s)) - 1.832) <= 0.002


def test_sidechains_reference_latency():
    s = expected_latency(LatencyModel(400, 500, 5, 90, Scheme.SIDECHAINS))
    assert s == 22500 and hours(s) == Decimal("6.250")
    # component-rounded reference: 5.556 + 0.695
    assert abs(float(hours(s)) - 6.251) <= 0.002


def test_degenerate_latency_zero():
    assert expected_latency(LatencyModel(0, 0, 5, 0)) == 0


def test_invalid_model():
    with pytest.raises(ValueError):
        LatencyModel(block_interval=0)
    with pytest.raises(ValueError):
        LatencyModel(t_proof=-1)


def test_ratio_is_under_a_third():
    ours = expected_latency(LatencyModel())
    side = expected_latency(LatencyModel(scheme=Scheme.SIDECHAINS))
    assert round(ours / side, 3) == 0.293
    assert ours / side < 1 / 3 + 0.05


def test_hours_round_half_up():
    assert hours(1.8055 * 3600) == Decimal("1.806")
    assert hours(6500) == Decimal("1.806")


def test_table_layout():
    rows = {r["row"]: r for r in latency_table(LatencyModel())}
    assert rows["relay_confirm"]["metaopera_blocks"] == 800
    assert rows["proof"]["metaopera_s"] == 90 and rows["proof"]["metaopera_h"] == Decimal("0.025")
    assert rows["target_confirm"]["sidechains_blocks"] == 500
    assert rows["total"]["metaopera_h"] == Decimal("1.831")
    assert rows["total"]["reference_metaopera_h"] == 1.832
    assert table_csv(list(rows.values())).splitlines()[0].startswith("row,metaopera_expr")


def test_interval_scales_block_terms():
    base = {r["row"]: r for r in latency_table(LatencyModel(block_interval=5))}
    fast = {r["row"]: r for r in latency_table(LatencyModel(block_interval=1))}
    for name in ("relay_confirm", "target_confirm"):
        assert fast[name]["metaopera_s"] * 5 == base[name]["metaopera_s"]
        assert fast[name]["sidechains_s"] * 5 == base[name]["sidechains_s"]
    assert fast["total"]["metaopera_s"] == (800 + 500) * 1 + 90


def test_sweep_contains_400():
    res = run_proof_sweep(50, 1000, 50)
    assert (400, 1740) in res.rows
    assert len(res.rows) == 20
    assert all(b == proof_size_bytes(c) for c, b in res.rows)


def test_sweep_step_ten_differences():
    res = run_proof_sweep(10, 300, 10)
    sizes = [b for _, b in res.rows]
    assert {b - a for a, b in zip(sizes, sizes[1:])} == {34}


def test_single_row_sweep():
    res = run_proof_sweep(10, 10, 1)
    assert res.rows == [(10, 414)]
    assert res.to_csv() == "committee_size,proof_bytes\n10,414\n"


@pytest.mark.parametrize("step", [10, 13, 50])
def test_sweep_rows_strictly_increasing(step):
    cs, bs = zip(*run_proof_sweep(1, 300, step).rows)
    assert list(cs) == sorted(set(cs)) and list(bs) == sorted(set(bs))


def test_sweep_below_ten_plateaus():
    # members 1..10 all put one key into the proof
    cs, bs = zip(*run_proof_sweep(1, 30, 7).rows)
    assert list(bs) == sorted(bs)
    assert bs[:2] == (414, 414)


def test_sweep_bad_range():
    with pytest.raises(ValueError):
        run_proof_sweep(0, 10)
    with pytest.raises(ValueError):
        run_proof_sweep(5, 4)


def test_sweep_insufficient_producers():
    with pytest.raises(InsufficientProducersError):
        run_proof_sweep(10, 50, 10, world=SweepWorld.build(30))


def test_single_run_experiment():
    s = run_latency_experiment(1)
    assert s.n == 1 and s.min_s == s.max_s == s.mean_s
    assert s.expected_s == 6590


def test_experiment_reports_reference_discrepancy():
    s = run_latency_experiment(3, seed=4)
    assert s.metadata["reference_table_h"] == 1.832
    assert s.metadata["reference_text_min"] == 76.5
    assert "76.5" in s.metadata["reference_discrepancy"]
    assert s.runs_csv().splitlines()[0] == "run,duration_s,duration_h"
    assert 6590 <= s.min_s <= s.max_s < 6590 + 5


def test_experiment_is_seeded():
    assert run_latency_experiment(5, seed=9).durations == run_latency_experiment(5, seed=9).durations


def test_experiment_needs_a_transfer():
    with pytest.raises(ValueError):
        run_latency_experiment(0)
