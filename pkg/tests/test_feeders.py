import numpy as np
import pytest

from gridarb.feeders import (
    FEEDER_SIZES,
    load_demo_fleet,
    load_demo_timeseries,
    load_feeder,
)
from gridarb.network import build_admittance
from gridarb.powerflow import (
    InjectionSet,
    SolveOptions,
    batch_solve,
    solve_fixed_point,
    solve_reference,
)


def day_injections(model, ds, day_index):
    """Net-load injection sets (pu on 1 MVA) for every slot of one day."""
    adm = build_admittance(model)
    pq = model.pq_ids
    injs = []
    for row in range(day_index * ds.rows_per_day,
                     (day_index + 1) * ds.rows_per_day):
        rec = ds.record_at(row)
        p = np.array([-(rec.demand_p.get(m, 0.0) - rec.pv_p.get(m, 0.0)) / 1000.0
                      for m in pq])
        q = np.array([-rec.demand_q.get(m, 0.0) / 1000.0 for m in pq])
        injs.append(InjectionSet(p=p, q=q))
    return adm, injs


def test_all_four_feeders_load():
    for size in FEEDER_SIZES:
        model = load_feeder(size)
        assert len(model.nodes) == size
        assert len(model.lines) == size - 1
        assert model.slack_id == 1
    with pytest.raises(ValueError):
        load_feeder(99)


def test_34_node_feeder_structure():
    model = load_feeder(34)
    assert len(model.nodes) == 34
    assert len(model.lines) == 33
    adm = build_admittance(model)
    assert adm.y_dd.shape == (33, 33)
    assert np.max(np.abs(adm.y_dd - adm.y_dd.T)) <= 1e-12
    # the fleet sits on the lateral end nodes
    fleet = load_demo_fleet()
    assert [u.node for u in fleet] == [12, 16, 27, 34]
    degree = {}
    for line in model.lines:
        degree[line.from_node] = degree.get(line.from_node, 0) + 1
        degree[line.to_node] = degree.get(line.to_node, 0) + 1
    for unit in fleet:
        assert degree[unit.node] == 1


def test_demo_fleet_parameters():
    for unit in load_demo_fleet():
        assert unit.capacity == 200.0
        assert unit.p_min == -50.0 and unit.p_max == 50.0
        assert unit.soc_min == 0.2 and unit.soc_max == 0.8
        assert unit.efficiency == 0.95


def test_demo_timeseries_shape():
    ds = load_demo_timeseries()
    assert ds.n_rows == 2880
    assert ds.day_count == 30
    assert ds.rows_per_day == 96
    assert ds.nodes == tuple(range(2, 35))
    assert "price" in ds.columns
    assert (ds.columns["price"] > 0).all()
    for node in (17, 22, 30):
        assert (ds.columns[f"pv_node_{node}"] >= 0).all()


def test_34_node_voltage_band_over_demo_day():
    model = load_feeder(34)
    ds = load_demo_timeseries()
    adm, injs = day_injections(model, ds, 0)
    sols = batch_solve(adm, injs)
    vmin = min(float(np.min(np.abs(s.v))) for s in sols)
    vmax = max(float(np.max(np.abs(s.v))) for s in sols)
    # realistic operating band: close to, but not violating, 0.95/1.05
    assert 0.90 < vmin < 1.0
    assert vmax <= 1.01


def test_34_node_solver_accuracy_over_96_slots():
    # mean relative |v| gap fixed-point vs Newton <= 1e-6, max <= 1e-5
    model = load_feeder(34)
    ds = load_demo_timeseries()
    adm, injs = day_injections(model, ds, 3)
    gaps = []
    for inj in injs:
        fast = solve_fixed_point(adm, inj)
        ref = solve_reference(adm, inj, SolveOptions(tolerance=1e-10))
        gaps.append(np.abs(np.abs(fast.v) - np.abs(ref.v)) / np.abs(ref.v))
    gaps = np.concatenate(gaps)
    assert gaps.mean() <= 1e-6
    assert gaps.max() <= 1e-5
