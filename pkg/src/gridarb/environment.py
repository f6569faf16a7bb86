"""The dispatch MDP: daily episodes of storage control on a feeder.

An episode walks one day of time-series data.  Each step dispatches the
storage fleet, solves the resulting power flow, and pays out

    reward = -price * sum(realized) * dt  -  sigma * violation_sum

so charging costs money, discharging earns it, and voltage-band
violations are penalized.  Rewards are therefore negated costs
(``reward_sign = "cost_negative"``); maximizing reward minimizes the
day's procurement cost.

All powers entering and leaving this module are in kW (matching the
data files); conversion to per-unit happens only at the solver boundary
using the configured base power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ActionDimensionMismatch, EpisodeFinished, NotConverged
from .ess import EssParams, EssState, apply_dispatch
from .network import AdmittancePartition, NetworkModel, build_admittance
from .powerflow import InjectionSet, PowerFlowSolution, SolveOptions, solve_fixed_point
from .timeseries import EpisodeSlice, SlotRecord, TimeSeriesDataset, select_day

__all__ = [
    "EnvConfig",
    "Action",
    "StateVector",
    "RewardBreakdown",
    "Transition",
    "EnvState",
    "DaySelector",
    "RandomDaySelector",
    "reset",
    "step",
    "build_state",
    "register_state_builder",
    "cal_reward",
]

PENALTY_NODE_CHOICES = ("all", "ess_only")


@dataclass(frozen=True)
class EnvConfig:
    network: NetworkModel
    fleet: tuple[EssParams, ...]
    sigma: float = 400.0  # EUR per pu of violation
    v_max: float = 1.05
    v_min: float = 0.95
    v_ref: float = 1.0
    dt: float = 0.25  # hours per step
    horizon: int = 96  # steps per episode
    s_base_mva: float = 1.0
    penalty_nodes: str = "all"  # or "ess_only"
    state_builder: str = "net_load"
    reward_sign: str = "cost_negative"
    solve_options: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        object.__setattr__(self, "fleet", tuple(self.fleet))
        if not self.v_min < self.v_ref < self.v_max:
            raise ValueError(
                f"need v_min < v_ref < v_max, got {self.v_min}/{self.v_ref}/"
                f"{self.v_max}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        if abs(self.horizon * self.dt - 24.0) > 1e-9:
            raise ValueError(
                f"episodes must cover one day: horizon*dt = "
                f"{self.horizon * self.dt} h, expected 24")
        if self.s_base_mva <= 0:
            raise ValueError("s_base_mva must be positive")
        if self.penalty_nodes not in PENALTY_NODE_CHOICES:
            raise ValueError(f"penalty_nodes must be one of "
                             f"{PENALTY_NODE_CHOICES}, got {self.penalty_nodes!r}")
        if self.reward_sign != "cost_negative":
            raise ValueError("the only supported reward sign is 'cost_negative'")
        known = {n.id for n in self.network.nodes}
        for params in self.fleet:
            if params.node not in known:
                raise ValueError(f"fleet references node {params.node}, "
                                 f"which is not in the network")

    @property
    def s_base_kw(self) -> float:
        return 1000.0 * self.s_base_mva

    @property
    def half_band(self) -> float:
        """Violation-free distance from v_ref: (v_max - v_min) / 2."""
        return 0.5 * (self.v_max - self.v_min)

    @property
    def state_dim(self) -> int:
        return len(self.network.nodes) + 1 + len(self.fleet) + 1


@dataclass(frozen=True)
class Action:
    """Requested ESS powers in kW, ordered like the config fleet."""
    powers: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(p) for p in self.powers)
        object.__setattr__(self, "powers", vals)
        if not all(np.isfinite(vals)):
            raise ValueError(f"action powers must be finite, got {vals}")


@dataclass(frozen=True)
class StateVector:
    net_load: np.ndarray  # kW per node, ascending node id (slack included)
    price: float  # EUR/kWh for the current slot
    socs: np.ndarray  # fraction per ESS, fleet order
    time_frac: float  # t / horizon

    def __post_init__(self):
        for name in ("net_load", "socs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.net_load, [self.price], self.socs,
                               [self.time_frac]])

    def __len__(self) -> int:
        return self.net_load.size + 1 + self.socs.size + 1


@dataclass(frozen=True)
class RewardBreakdown:
    arbitrage_term: float
    penalty_term: float
    total: float


@dataclass(frozen=True)
class Transition:
    state: StateVector
    reward: float
    done: bool
    info: dict


@dataclass(eq=False)
class EnvState:
    """Mutable per-episode state; one instance per concurrent episode."""
    t: int
    ess_states: tuple[EssState, ...]
    episode: EpisodeSlice
    last_solution: PowerFlowSolution
    state: StateVector
    adm: AdmittancePartition
    day_index: int


@dataclass(frozen=True)
class DaySelector:
    """Pick a specific day of the dataset by index."""
    index: int


@dataclass(frozen=True)
class RandomDaySelector:
    """Pick a day uniformly at random; the seed fixes the choice."""
    seed: int


# --- state builders ------------------------------------------------------

def _net_load_builder(slot: SlotRecord, socs, t: int,
                      cfg: EnvConfig) -> StateVector:
    load = np.array([slot.demand_p.get(n.id, 0.0) - slot.pv_p.get(n.id, 0.0)
                     for n in cfg.network.nodes])
    return StateVector(net_load=load, price=slot.price,
                       socs=np.asarray(socs, dtype=float),
                       time_frac=t / cfg.horizon)


def _raw_demand_builder(slot: SlotRecord, socs, t: int,
                        cfg: EnvConfig) -> StateVector:
    load = np.array([slot.demand_p.get(n.id, 0.0) for n in cfg.network.nodes])
    return StateVector(net_load=load, price=slot.price,
                       socs=np.asarray(socs, dtype=float),
                       time_frac=t / cfg.horizon)


_STATE_BUILDERS = {
    "net_load": _net_load_builder,
    "raw_demand": _raw_demand_builder,
}


def register_state_builder(name: str, builder, replace: bool = False) -> None:
    """Register a custom ``(slot, socs, t, cfg) -> StateVector`` builder."""
    if name in _STATE_BUILDERS and not replace:
        raise ValueError(f"state builder {name!r} already registered")
    _STATE_BUILDERS[name] = builder


def build_state(slot: SlotRecord, socs, t: int, cfg: EnvConfig) -> StateVector:
    try:
        builder = _STATE_BUILDERS[cfg.state_builder]
    except KeyError:
        raise ValueError(f"unknown state builder {cfg.state_builder!r}; "
                         f"registered: {sorted(_STATE_BUILDERS)}") from None
    return builder(slot, socs, t, cfg)


# --- reward ---------------------------------------------------------------

def _violation_sum(v_mag: np.ndarray, cfg: EnvConfig) -> float:
    """Total band violation over the monitored PQ nodes, in pu."""
    if cfg.penalty_nodes == "ess_only":
        fleet_nodes = {p.node for p in cfg.fleet}
        mask = np.array([nid in fleet_nodes for nid in cfg.network.pq_ids])
        v_mag = v_mag[mask]
    gap = np.abs(cfg.v_ref - v_mag) - cfg.half_band
    return float(np.maximum(gap, 0.0).sum())


def cal_reward(price: float, realized, v_mag, cfg: EnvConfig) -> RewardBreakdown:
    """Arbitrage earnings minus the voltage-violation penalty.

    ``realized`` are the actually-applied ESS powers in kW (charging
    positive); ``v_mag`` are the PQ-node voltage magnitudes in ascending
    node-id order.
    """
    realized = np.asarray(realized, dtype=float)
    v_mag = np.asarray(v_mag, dtype=float)
    if v_mag.size != len(cfg.network.pq_ids):
        raise ValueError(f"expected {len(cfg.network.pq_ids)} voltage "
                         f"magnitudes, got {v_mag.size}")
    arbitrage = -price * float(realized.sum()) * cfg.dt
    penalty = cfg.sigma * _violation_sum(v_mag, cfg)
    return RewardBreakdown(arbitrage_term=arbitrage, penalty_term=penalty,
                           total=arbitrage - penalty)


# --- episode loop ----------------------------------------------------------

def _slot_injections(cfg: EnvConfig, slot: SlotRecord,
                     ess_kw: dict) -> InjectionSet:
    """Per-unit nodal injections for one slot (loads enter negative)."""
    base = cfg.s_base_kw
    p = []
    q = []
    for nid in cfg.network.pq_ids:
        drawn = (slot.demand_p.get(nid, 0.0) - slot.pv_p.get(nid, 0.0)
                 + ess_kw.get(nid, 0.0))
        p.append(-drawn / base)
        q.append(-slot.demand_q.get(nid, 0.0) / base)
    return InjectionSet(p=np.array(p), q=np.array(q))


def _solve(cfg: EnvConfig, adm: AdmittancePartition,
           injections: InjectionSet) -> tuple[PowerFlowSolution, bool]:
    try:
        return solve_fixed_point(adm, injections, cfg.solve_options), True
    except NotConverged as err:
        # training loops survive pathological operating points: keep the
        # best iterate and flag it
        return err.solution, False


def reset(cfg: EnvConfig, data: TimeSeriesDataset, selector) -> EnvState:
    """Start an episode; the returned EnvState carries s_0 in ``.state``."""
    if abs(data.dt_hours - cfg.dt) > 1e-12:
        raise ValueError(f"dataset resolution {data.dt_hours} h does not "
                         f"match config dt {cfg.dt} h")
    if isinstance(selector, DaySelector):
        day_index = selector.index
    elif isinstance(selector, RandomDaySelector):
        day_index = int(np.random.default_rng(selector.seed)
                        .integers(0, data.day_count))
    else:
        raise TypeError(f"selector must be DaySelector or RandomDaySelector, "
                        f"got {type(selector).__name__}")
    episode = select_day(data, day_index)

    adm = build_admittance(cfg.network)
    ess_states = tuple(EssState(soc=p.initial_soc) for p in cfg.fleet)
    slot0 = episode.rows[0]
    solution, _ = _solve(cfg, adm, _slot_injections(cfg, slot0, {}))
    socs = [s.soc for s in ess_states]
    state0 = build_state(slot0, socs, 0, cfg)
    return EnvState(t=0, ess_states=ess_states, episode=episode,
                    last_solution=solution, state=state0, adm=adm,
                    day_index=day_index)


def step(env: EnvState, cfg: EnvConfig, action: Action) -> Transition:
    """Advance one slot; mutates ``env`` and returns the transition."""
    if env.t >= cfg.horizon:
        raise EpisodeFinished(
            f"episode is over after {cfg.horizon} steps; call reset")
    if len(action.powers) != len(cfg.fleet):
        raise ActionDimensionMismatch(
            f"expected {len(cfg.fleet)} ESS powers, got {len(action.powers)}")

    slot = env.episode.rows[env.t]
    new_states = []
    realized = []
    ess_kw: dict = {}
    for params, state, requested in zip(cfg.fleet, env.ess_states,
                                        action.powers):
        nxt, applied = apply_dispatch(params, state, requested, cfg.dt)
        new_states.append(nxt)
        realized.append(applied)
        ess_kw[params.node] = ess_kw.get(params.node, 0.0) + applied

    solution, converged = _solve(cfg, env.adm,
                                 _slot_injections(cfg, slot, ess_kw))
    v_mag = np.abs(solution.v[1:])  # monitored PQ nodes, ascending id
    breakdown = cal_reward(slot.price, realized, v_mag, cfg)

    env.t += 1
    env.ess_states = tuple(new_states)
    env.last_solution = solution
    done = env.t == cfg.horizon
    # the terminal state reuses the final slot's data with time_frac = 1
    next_slot = env.episode.rows[env.t] if not done else slot
    socs = [s.soc for s in env.ess_states]
    env.state = build_state(next_slot, socs, env.t, cfg)

    realized_arr = np.array(realized)
    realized_arr.setflags(write=False)
    v_mag.setflags(write=False)
    info = {
        "realized_powers": realized_arr,
        "v_mag": v_mag,
        "violation_sum": _violation_sum(v_mag, cfg),
        "arbitrage_term": breakdown.arbitrage_term,
        "penalty_term": breakdown.penalty_term,
        "slack_p": solution.slack_p * cfg.s_base_kw,
        "converged": converged,
    }
    return Transition(state=env.state, reward=breakdown.total, done=done,
                      info=info)
