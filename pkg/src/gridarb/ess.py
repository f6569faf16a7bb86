"""Energy-storage model: SOC dynamics, power limits, feasibility clipping.

State-of-charge update (charging positive):

    charging:     soc' = soc + eta * P * dt / capacity
    discharging:  soc' = soc + P * dt / (eta * capacity)

The asymmetric efficiency keeps discharging from creating energy; with
eta = 1 both branches coincide.  Commands are clipped — first to the
power rating, then to whatever keeps the SOC inside its band — and the
clipped (realized) power is reported back, so dispatch never errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import MalformedRow

__all__ = ["EssParams", "EssState", "apply_dispatch", "load_fleet"]

ESS_HEADER = ("node_id", "capacity_kwh", "p_min_kw", "p_max_kw",
              "soc_min", "soc_max", "efficiency")


@dataclass(frozen=True)
class EssParams:
    node: int
    capacity: float  # kWh
    p_min: float  # kW, most negative (discharge) command
    p_max: float  # kW, largest charge command
    soc_min: float
    soc_max: float
    efficiency: float

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError(f"ESS at node {self.node}: capacity must be positive")
        if not (self.p_min < 0 < self.p_max):
            raise ValueError(f"ESS at node {self.node}: need p_min < 0 < p_max")
        if not (0 <= self.soc_min < self.soc_max <= 1):
            raise ValueError(f"ESS at node {self.node}: need 0 <= soc_min < soc_max <= 1")
        if not (0 < self.efficiency <= 1):
            raise ValueError(f"ESS at node {self.node}: efficiency must be in (0, 1]")

    @property
    def initial_soc(self) -> float:
        """Episode-reset SOC: band midpoint."""
        return 0.5 * (self.soc_min + self.soc_max)


@dataclass(frozen=True)
class EssState:
    soc: float
    # Rounding remainder of soc, kept so that equal-and-opposite dispatches
    # cancel exactly over a step sequence (soc + soc_err is the unrounded
    # value).  Plain reads should use .soc.
    soc_err: float = 0.0


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    t = s - a
    return s, (a - (s - t)) + (b - t)


def apply_dispatch(params: EssParams, state: EssState, requested_power: float,
                   dt: float) -> tuple[EssState, float]:
    """Clip a power command to feasibility and advance the SOC.

    Returns the new state and the realized power (kW, charging positive).
    The realized power is the request clipped to [p_min, p_max] and then
    to the band-preserving range, so the new SOC lands inside
    [soc_min, soc_max] for every request.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = min(max(requested_power, params.p_min), params.p_max)
    soc = state.soc
    if p > 0:
        headroom = (params.soc_max - soc) * params.capacity / (params.efficiency * dt)
        p = min(p, headroom)
        delta = params.efficiency * p * dt / params.capacity
    elif p < 0:
        floor = (params.soc_min - soc) * params.efficiency * params.capacity / dt
        p = max(p, floor)
        delta = p * dt / (params.efficiency * params.capacity)
    else:
        return state, 0.0
    hi, lo = _two_sum(soc, delta)
    lo += state.soc_err
    new_soc = hi + lo
    err = lo - (new_soc - hi)
    if not params.soc_min < new_soc < params.soc_max:
        # pin to the band edge; float dust from the headroom arithmetic can
        # overshoot by an ulp
        new_soc = min(max(new_soc, params.soc_min), params.soc_max)
        err = 0.0
    return EssState(soc=new_soc, soc_err=err), p


def load_fleet(path) -> tuple[EssParams, ...]:
    """Load ESS parameters from CSV (one unit per row, sorted by node)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != ESS_HEADER:
            raise MalformedRow(
                f"{path}: expected header {','.join(ESS_HEADER)}")
        fleet = []
        for i, row in enumerate(reader):
            desc = f"{path} row {i + 2}"
            try:
                params = EssParams(
                    node=int(row["node_id"]),
                    capacity=float(row["capacity_kwh"]),
                    p_min=float(row["p_min_kw"]),
                    p_max=float(row["p_max_kw"]),
                    soc_min=float(row["soc_min"]),
                    soc_max=float(row["soc_max"]),
                    efficiency=float(row["efficiency"]))
            except (TypeError, ValueError) as err:
                raise MalformedRow(f"{desc}: {err}")
            if not all(math.isfinite(x) for x in
                       (params.capacity, params.p_min, params.p_max,
                        params.soc_min, params.soc_max, params.efficiency)):
                raise MalformedRow(f"{desc}: non-finite value")
            fleet.append(params)
    if not fleet:
        raise MalformedRow(f"{path}: no ESS rows")
    nodes = [f.node for f in fleet]
    if len(set(nodes)) != len(nodes):
        raise MalformedRow(f"{path}: duplicate ESS node ids {nodes}")
    return tuple(sorted(fleet, key=lambda f: f.node))
