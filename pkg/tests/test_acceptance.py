"""Acceptance gate: one test per shipped guarantee, run with -v.

Each test here restates a headline guarantee end to end, with its own
tolerances and (where promised) wall-clock budget, independent of the
finer-grained module tests.  Helper oracles are shared with the module
suites (`test_benchmark`, `test_augmentation`) so each check has exactly
one frozen reference implementation.
"""

import time

import numpy as np
import pytest
from scipy import stats

import test_augmentation as ta
import test_benchmark as tb
from gridarb.augmentation import augment_dataset, fit_gmm
from gridarb.cli import main as cli_main
from gridarb.config import load_config
from gridarb.environment import Action, DaySelector, _slot_injections, cal_reward, reset, step
from gridarb.benchmark import DpGrid, solve_optimal_dp
from gridarb.ess import EssParams
from gridarb.feeders import default_config_path, load_feeder
from gridarb.network import build_admittance
from gridarb.powerflow import InjectionSet, batch_solve, solve_fixed_point, solve_reference

RC34 = load_config(default_config_path())


def day_injections():
    """The 96 zero-dispatch injection sets of the bundled demo day."""
    from gridarb.timeseries import select_day
    episode = select_day(RC34.data, 0)
    return [_slot_injections(RC34.env, slot, {}) for slot in episode.rows]


def random_injections(rng, n_pq, nominal_kw, count):
    out = []
    for _ in range(count):
        p_kw = rng.uniform(0.0, 2.0 * nominal_kw, n_pq)
        q_kvar = p_kw * rng.uniform(0.1, 0.4, n_pq)
        out.append(InjectionSet(p=-p_kw / 1000.0, q=-q_kvar / 1000.0))
    return out


def test_solver_accuracy_on_the_34_node_feeder_over_a_day():
    started = time.perf_counter()
    adm = build_admittance(RC34.env.network)
    gaps = []
    for inj in day_injections():
        fast = solve_fixed_point(adm, inj, RC34.env.solve_options)
        ref = solve_reference(adm, inj, RC34.env.solve_options)
        gaps.append(np.abs(np.abs(fast.v) - np.abs(ref.v)) / np.abs(ref.v))
    gaps = np.concatenate(gaps)
    assert gaps.mean() <= 1e-6
    assert gaps.max() <= 1e-5
    assert time.perf_counter() - started < 10.0


def test_batch_solver_is_5x_faster_than_newton_on_123_nodes():
    started = time.perf_counter()
    model = load_feeder(123)
    adm = build_admittance(model)
    injections = random_injections(np.random.default_rng(123),
                                   n_pq=len(model.nodes) - 1,
                                   nominal_kw=10.0, count=96)

    batch_times, newton_times = [], []
    for _ in range(10):
        t0 = time.perf_counter()
        batch_solve(adm, injections)
        batch_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        for inj in injections:
            solve_reference(adm, inj)
        newton_times.append(time.perf_counter() - t0)

    speedup = np.median(newton_times) / np.median(batch_times)
    assert speedup >= 5.0, f"batch is only {speedup:.1f}x faster"
    assert time.perf_counter() - started < 60.0


def test_conservation_invariants_on_1000_random_injections():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for size in (25, 34, 69, 123):
        model = load_feeder(size)
        adm = build_admittance(model)
        r = np.array([line.resistance for line in model.lines])
        x = np.array([line.reactance for line in model.lines])
        injections = random_injections(rng, len(model.nodes) - 1,
                                       nominal_kw=12.0, count=250)
        for inj, sol in zip(injections, batch_solve(adm, injections)):
            assert abs(sol.slack_p + inj.p.sum()
                       - np.dot(r, sol.line_i2)) <= 1e-6
            assert abs(sol.slack_q + inj.q.sum()
                       - np.dot(x, sol.line_i2)) <= 1e-6
            vm2 = np.abs(sol.v[adm.line_from]) ** 2
            identity_gap = vm2 * sol.line_i2 - (sol.line_p ** 2
                                                + sol.line_q ** 2)
            assert np.max(np.abs(identity_gap)) <= 1e-8
    assert time.perf_counter() - started < 60.0


def test_reward_arithmetic_reproduces_the_worked_examples():
    from gridarb.environment import EnvConfig
    cfg = EnvConfig(network=tb.TOY_NET, fleet=tb.TOY_FLEET,
                    dt=0.25, horizon=96)
    assert cfg.sigma == 400.0 and cfg.v_max == 1.05 and cfg.v_min == 0.95

    idle = cal_reward(0.10, [0.0], [1.0], cfg)
    assert abs(idle.total - 0.0) <= 1e-12

    charging = cal_reward(0.10, [50.0], [1.0], cfg)
    assert abs(charging.total - (-1.25)) <= 1e-12

    violating = cal_reward(0.10, [50.0], [1.06], cfg)
    assert abs(violating.penalty_term - 4.0) <= 1e-12
    assert abs(violating.total - (-5.25)) <= 1e-12


def test_soc_stays_in_bounds_under_10k_random_steps():
    cfg, data = RC34.env, RC34.data
    rng = np.random.default_rng(99)
    steps = 0
    env = reset(cfg, data, DaySelector(0))
    while steps < 10_000:
        if env.t >= cfg.horizon:
            env = reset(cfg, data, DaySelector(int(rng.integers(0, 30))))
        requested = tuple(float(rng.uniform(-80.0, 80.0)) for _ in cfg.fleet)
        tr = step(env, cfg, Action(requested))
        for realized in tr.info["realized_powers"]:
            assert abs(realized) <= 50.0 + 1e-12
        for state in env.ess_states:
            assert 0.2 - 1e-12 <= state.soc <= 0.8 + 1e-12
        steps += 1


def test_dp_oracle_matches_enumeration_and_the_worked_case():
    started = time.perf_counter()
    rng = np.random.default_rng(31)
    for trial in range(50):
        params = EssParams(
            node=2,
            capacity=float(rng.uniform(60, 260)),
            p_min=-float(rng.uniform(20, 60)),
            p_max=float(rng.uniform(20, 60)),
            soc_min=0.15, soc_max=0.85,
            efficiency=float(rng.uniform(0.85, 1.0)),
        )
        horizon = int(rng.integers(2, 5))
        prices = [float(rng.uniform(-0.1, 0.5)) for _ in range(horizon)]
        cfg = tb.hourly_cfg(fleet=(params,))
        episode = tb.make_slice(prices,
                                demand=float(rng.uniform(0.0, 30.0)),
                                q=float(rng.uniform(0.0, 8.0)))
        soc_levels = int(rng.integers(4, 14))
        power_levels = int(rng.integers(2, 6))
        _, dp_obj = solve_optimal_dp(cfg, episode,
                                     DpGrid(soc_levels=soc_levels,
                                            power_levels=power_levels))
        brute = tb.brute_force_optimum(cfg, episode, soc_levels,
                                       power_levels)
        assert dp_obj == brute, (f"trial {trial}: DP {dp_obj!r} "
                                 f"!= enumeration {brute!r}")

    sched, obj = solve_optimal_dp(tb.hourly_cfg(), tb.make_slice([0.1, 0.3]),
                                  DpGrid(soc_levels=13, power_levels=3))
    assert obj == -10.0
    assert sched.powers.tolist() == [[50.0], [-50.0]]
    assert time.perf_counter() - started < 30.0


def test_augmentation_reproduces_a_known_generator(tmp_path):
    started = time.perf_counter()
    h = ta.H
    source = ta.sample_true_gmc(150, h, rho=0.85, seed=7)
    ds = ta.write_dataset(str(tmp_path), source)
    synthetic = augment_dataset(ds, "gaussian_copula", n_days=300,
                                seed=8).day_matrix("p_node_2")

    assert ta.two_sample_ks(source, synthetic) <= 0.1
    r_src = stats.spearmanr(source).statistic
    r_out = stats.spearmanr(synthetic).statistic
    assert float(np.linalg.norm(r_src - r_out)) <= 0.15 * h
    assert time.perf_counter() - started < 120.0


def test_bic_selects_the_right_component_count_20_of_20():
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        assert fit_gmm(rng.normal(5.0, 1.0, size=800)).k == 1
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        bimodal = np.concatenate([rng.normal(0.0, 0.5, 400),
                                  rng.normal(10.0, 0.5, 400)])
        assert fit_gmm(bimodal).k == 2


def test_simulate_seed_3_is_byte_identical(tmp_path):
    cfg = str(default_config_path())
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        code = cli_main(["simulate", "--config", cfg, "--policy", "random",
                         "--seed", "3", "--output", str(out)])
        assert code == 0
    assert first.read_bytes() == second.read_bytes()
    assert len(first.read_bytes().splitlines()) == 97


def test_full_scale_drl_training_results_are_excluded():
    """Desk-scale stand-ins replace full-scale learning curves.

    Training a fleet of DRL agents to convergence takes GPU-days and
    tuning that has no place in a test suite, so no such numbers are
    asserted anywhere.  What stands in for them: the DP optimum (exact
    on its grid), the performance-bound arithmetic, and the
    protocol/CLI determinism suites — all asserted elsewhere in this
    file and in the module tests.
    """
    assert True
