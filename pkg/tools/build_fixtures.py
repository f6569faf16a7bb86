#!/usr/bin/env python3
"""Regenerate the packaged fixture data under src/gridarb/data/.

Feeders are radial (trunk + laterals) on a 12.66 kV, 1 MVA base.  Line
impedances are drawn once from a seeded RNG and then scaled so the
Newton solution at a nominal load sits near a target minimum voltage,
keeping the fixtures in the realistic 0.95-1.0 pu band.  The 34-node
feeder additionally gets a 30-day, 15-minute time series (demand at all
PQ nodes, PV at three nodes, a day-shaped price) and a four-unit ESS
fleet at its lateral ends.  Everything is deterministic.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gridarb.network import build_admittance, load_network  # noqa: E402
from gridarb.powerflow import InjectionSet, SolveOptions, solve_reference  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "gridarb" / "data"
BASE_KV = 12.66
BASE_MVA = 1.0


def feeder_topology(n: int) -> list[tuple[int, int]]:
    """Trunk plus laterals; lateral ends of the 34-node feeder carry the ESSs."""
    if n == 25:
        spec = [(1, 10), (4, 11, 17), (8, 18, 25)]
    elif n == 34:
        spec = [(1, 12), (6, 13, 16), (3, 17, 27), (9, 28, 34)]
    elif n == 69:
        spec = [(1, 27), (5, 28, 40), (12, 41, 55), (20, 56, 69)]
    elif n == 123:
        spec = [(1, 40), (8, 41, 60), (15, 61, 80), (25, 81, 102), (33, 103, 123)]
    else:
        raise ValueError(n)
    edges = []
    trunk_start, trunk_end = spec[0]
    edges += [(i, i + 1) for i in range(trunk_start, trunk_end)]
    for tap, lo, hi in spec[1:]:
        edges.append((tap, lo))
        edges += [(i, i + 1) for i in range(lo, hi)]
    assert len(edges) == n - 1, (n, len(edges))
    return edges


def write_feeder(n: int, rng: np.random.Generator, target_vmin: float,
                 nominal_kw: float) -> None:
    edges = feeder_topology(n)
    r = rng.uniform(0.15, 0.7, len(edges))
    ratio = rng.uniform(0.7, 1.1, len(edges))
    x = r * ratio
    z_base = BASE_KV ** 2 / BASE_MVA
    r_pu, x_pu = r / z_base, x / z_base

    nodes_path = DATA / f"feeder{n}_nodes.csv"
    lines_path = DATA / f"feeder{n}_lines.csv"

    def dump(scale: float) -> None:
        with open(nodes_path, "w", encoding="utf-8") as fh:
            fh.write("node_id,kind,base_kv\n")
            fh.write(f"1,slack,{BASE_KV}\n")
            for i in range(2, n + 1):
                fh.write(f"{i},pq,{BASE_KV}\n")
        with open(lines_path, "w", encoding="utf-8") as fh:
            fh.write("from_node,to_node,r_pu,x_pu\n")
            for (a, b), rv, xv in zip(edges, r_pu * scale, x_pu * scale):
                fh.write(f"{a},{b},{rv:.8f},{xv:.8f}\n")

    # scale impedances until the nominal-load Newton solve bottoms out at
    # the target minimum voltage
    scale = 1.0
    p_nom = -np.full(n - 1, nominal_kw / (BASE_MVA * 1000.0))
    q_nom = p_nom * 0.33
    for _ in range(12):
        dump(scale)
        adm = build_admittance(load_network(nodes_path, lines_path))
        sol = solve_reference(adm, InjectionSet(p=p_nom, q=q_nom),
                              SolveOptions(tolerance=1e-10))
        drop = 1.0 - float(np.min(np.abs(sol.v)))
        scale *= (1.0 - target_vmin) / drop
    dump(scale)
    adm = build_admittance(load_network(nodes_path, lines_path))
    sol = solve_reference(adm, InjectionSet(p=p_nom, q=q_nom),
                          SolveOptions(tolerance=1e-10))
    print(f"feeder{n}: min|v| at nominal {nominal_kw} kW/node = "
          f"{np.min(np.abs(sol.v)):.4f} (scale {scale:.3f})")


def daily_demand_shape(slots: int) -> np.ndarray:
    t = np.arange(slots) / slots * 24.0
    morning = np.exp(-0.5 * ((t - 8.5) / 2.0) ** 2)
    evening = np.exp(-0.5 * ((t - 18.5) / 2.2) ** 2)
    return 0.55 + 0.5 * morning + 0.9 * evening


def pv_shape(slots: int) -> np.ndarray:
    t = np.arange(slots) / slots * 24.0
    bell = np.exp(-0.5 * ((t - 13.0) / 3.0) ** 2)
    bell[(t < 6.0) | (t > 20.5)] = 0.0
    return bell


def price_shape(slots: int) -> np.ndarray:
    t = np.arange(slots) / slots * 24.0
    base = np.full(slots, 0.12)
    base[t < 6] = 0.07
    base[(t >= 6) & (t < 9)] = 0.16
    base[(t >= 11) & (t < 15)] = 0.10
    base[(t >= 17) & (t < 21)] = 0.30
    base[t >= 22] = 0.09
    return base


def write_timeseries_34(rng: np.random.Generator, days: int = 30) -> None:
    slots = 96
    n_rows = days * slots
    pq_nodes = list(range(2, 35))
    pv_nodes = [17, 22, 30]
    pv_peak = {17: 40.0, 22: 32.0, 30: 26.0}

    start = np.datetime64("2023-06-01T00:00")
    stamps = start + np.arange(n_rows) * np.timedelta64(15, "m")

    shape_d = daily_demand_shape(slots)
    shape_pv = pv_shape(slots)
    shape_rho = price_shape(slots)

    base_kw = {m: float(rng.uniform(8.0, 16.0)) for m in pq_nodes}
    cols: dict[str, np.ndarray] = {}
    for m in pq_nodes:
        day_scale = rng.uniform(0.85, 1.15, days)[:, None]
        noise = rng.normal(0.0, 0.04, (days, slots))
        p = base_kw[m] * shape_d[None, :] * day_scale * (1.0 + noise)
        cols[f"p_node_{m}"] = np.round(p.ravel(), 3)
        qn = rng.normal(0.0, 0.03, (days, slots))
        cols[f"q_node_{m}"] = np.round((p * (0.33 + qn)).ravel(), 3)
    for m in pv_nodes:
        cloud = rng.uniform(0.45, 1.0, days)[:, None]
        noise = rng.normal(0.0, 0.05, (days, slots))
        pv = pv_peak[m] * shape_pv[None, :] * cloud * (1.0 + noise)
        cols[f"pv_node_{m}"] = np.round(np.maximum(pv, 0.0).ravel(), 3)
    rho = shape_rho[None, :] * rng.uniform(0.85, 1.2, days)[:, None] \
        * (1.0 + rng.normal(0.0, 0.05, (days, slots)))
    cols["price"] = np.round(np.maximum(rho, 0.01).ravel(), 4)

    names = ([f"p_node_{m}" for m in pq_nodes]
             + [f"q_node_{m}" for m in pq_nodes]
             + [f"pv_node_{m}" for m in pv_nodes] + ["price"])
    with open(DATA / "timeseries_34.csv", "w", encoding="utf-8") as fh:
        fh.write("timestamp," + ",".join(names) + "\n")
        for i in range(n_rows):
            row = ",".join(format(cols[name][i], "g") for name in names)
            fh.write(f"{stamps[i]}" + "," + row + "\n")
    peak = max(float(cols[f"p_node_{m}"].max()) for m in pq_nodes)
    print(f"timeseries_34: {n_rows} rows, peak nodal demand {peak:.1f} kW")


def write_toy(rng: np.random.Generator) -> None:
    with open(DATA / "feeder_toy_nodes.csv", "w", encoding="utf-8") as fh:
        fh.write("node_id,kind,base_kv\n1,slack,12.66\n2,pq,12.66\n")
    with open(DATA / "feeder_toy_lines.csv", "w", encoding="utf-8") as fh:
        fh.write("from_node,to_node,r_pu,x_pu\n1,2,0.05,0.05\n")
    with open(DATA / "ess_toy.csv", "w", encoding="utf-8") as fh:
        fh.write("node_id,capacity_kwh,p_min_kw,p_max_kw,soc_min,soc_max,efficiency\n")
        fh.write("2,200,-50,50,0.2,0.8,1.0\n")
    # one flat-demand day with a two-level price: cheap first half,
    # expensive second half; the canonical arbitrage toy
    start = np.datetime64("2023-06-01T00:00")
    with open(DATA / "timeseries_toy.csv", "w", encoding="utf-8") as fh:
        fh.write("timestamp,p_node_2,q_node_2,price\n")
        for i in range(96):
            price = 0.05 if i < 48 else 0.30
            fh.write(f"{start + i * np.timedelta64(15, 'm')},10,3.3,{price}\n")


def write_toy_dp() -> None:
    # hourly arbitrage day with one obvious trade: buy hour 0 at 0.10,
    # sell hour 1 at 0.30, flat 0.20 elsewhere (round trips there net 0).
    # The SOC window [0.25, 0.75] makes every 10 kW action step move the
    # 200 kWh unit by exactly four default-grid levels (0.5/40 = 0.0125),
    # so the stock 41-level benchmark grid has zero snapping bias here.
    with open(DATA / "ess_toy_dp.csv", "w", encoding="utf-8") as fh:
        fh.write("node_id,capacity_kwh,p_min_kw,p_max_kw,soc_min,soc_max,efficiency\n")
        fh.write("2,200,-50,50,0.25,0.75,1.0\n")
    start = np.datetime64("2023-06-01T00:00")
    with open(DATA / "timeseries_toy_dp.csv", "w", encoding="utf-8") as fh:
        fh.write("timestamp,p_node_2,q_node_2,price\n")
        for i in range(24):
            price = {0: 0.1, 1: 0.3}.get(i, 0.2)
            fh.write(f"{start + i * np.timedelta64(60, 'm')},10,3.3,{price}\n")


def write_ess_34() -> None:
    with open(DATA / "ess_34.csv", "w", encoding="utf-8") as fh:
        fh.write("node_id,capacity_kwh,p_min_kw,p_max_kw,soc_min,soc_max,efficiency\n")
        for node in (12, 16, 27, 34):
            fh.write(f"{node},200,-50,50,0.2,0.8,0.95\n")


def write_configs() -> None:
    cfg34 = {
        "network": {"nodes": "feeder34_nodes.csv", "lines": "feeder34_lines.csv",
                    "base_mva": BASE_MVA},
        "fleet": "ess_34.csv",
        "timeseries": {"path": "timeseries_34.csv", "resolution_minutes": 15,
                       "price_unit": "eur_per_kwh"},
        "sigma": 400.0,
        "v_max": 1.05, "v_min": 0.95, "v_ref": 1.0,
        "dt_hours": 0.25, "horizon": 96,
        "s_base_mva": 1.0,
        "penalty_nodes": "all",
        "zip_coefficients": {"impedance": 0.0, "current": 0.0, "power": 1.0},
    }
    cfg_toy = json.loads(json.dumps(cfg34))
    cfg_toy["network"] = {"nodes": "feeder_toy_nodes.csv",
                          "lines": "feeder_toy_lines.csv", "base_mva": BASE_MVA}
    cfg_toy["fleet"] = "ess_toy.csv"
    cfg_toy["timeseries"]["path"] = "timeseries_toy.csv"
    cfg_dp = json.loads(json.dumps(cfg_toy))
    cfg_dp["fleet"] = "ess_toy_dp.csv"
    cfg_dp["timeseries"] = {"path": "timeseries_toy_dp.csv",
                            "resolution_minutes": 60,
                            "price_unit": "eur_per_kwh"}
    cfg_dp["dt_hours"] = 1.0
    cfg_dp["horizon"] = 24
    (DATA / "config_34.json").write_text(json.dumps(cfg34, indent=2) + "\n",
                                         encoding="utf-8")
    (DATA / "config_toy.json").write_text(json.dumps(cfg_toy, indent=2) + "\n",
                                          encoding="utf-8")
    (DATA / "config_toy_dp.json").write_text(json.dumps(cfg_dp, indent=2) + "\n",
                                             encoding="utf-8")


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20230601)
    write_feeder(25, rng, target_vmin=0.960, nominal_kw=14.0)
    write_feeder(34, rng, target_vmin=0.955, nominal_kw=14.0)
    write_feeder(69, rng, target_vmin=0.958, nominal_kw=12.0)
    write_feeder(123, rng, target_vmin=0.960, nominal_kw=10.0)
    write_timeseries_34(rng)
    write_ess_34()
    write_toy(rng)
    write_toy_dp()
    write_configs()
    print("fixtures written to", DATA)


if __name__ == "__main__":
    main()
