"""Packaged fixture feeders, fleets, datasets and configs.

All feeders share a 12.66 kV / 1 MVA per-unit base (the per-unit base is
a fixture convention; line CSVs carry per-unit impedances directly).
The 34-node feeder is the workhorse: a trunk with three laterals whose
end nodes 12, 16, 27 and 34 carry the four-unit ESS fleet, plus a
30-day, 15-minute time series.  The toy fixture is a 2-node feeder with
one ESS and a two-level price day for arbitrage demos.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .ess import EssParams, load_fleet
from .network import NetworkModel, load_network
from .timeseries import TimeSeriesDataset, load_timeseries

__all__ = [
    "FEEDER_SIZES",
    "BASE_KV",
    "BASE_MVA",
    "fixture_path",
    "load_feeder",
    "load_demo_fleet",
    "load_demo_timeseries",
    "load_toy_feeder",
    "load_toy_fleet",
    "load_toy_timeseries",
    "default_config_path",
    "toy_config_path",
]

FEEDER_SIZES = (25, 34, 69, 123)
BASE_KV = 12.66
BASE_MVA = 1.0


def fixture_path(name: str) -> Path:
    """Filesystem path of a packaged data file."""
    path = resources.files("gridarb.data") / name
    with resources.as_file(path) as concrete:
        return Path(concrete)


def load_feeder(size: int) -> NetworkModel:
    """One of the bundled radial feeders (25, 34, 69 or 123 nodes)."""
    if size not in FEEDER_SIZES:
        raise ValueError(f"no bundled feeder of size {size}; have {FEEDER_SIZES}")
    return load_network(fixture_path(f"feeder{size}_nodes.csv"),
                        fixture_path(f"feeder{size}_lines.csv"),
                        base_mva=BASE_MVA)


def load_demo_fleet() -> tuple[EssParams, ...]:
    """The four-unit fleet at the 34-node feeder's lateral ends."""
    return load_fleet(fixture_path("ess_34.csv"))


def load_demo_timeseries() -> TimeSeriesDataset:
    """Thirty days of 15-minute data for the 34-node feeder."""
    return load_timeseries(fixture_path("timeseries_34.csv"), resolution=15)


def load_toy_feeder() -> NetworkModel:
    """The 2-node arbitrage demo feeder."""
    return load_network(fixture_path("feeder_toy_nodes.csv"),
                        fixture_path("feeder_toy_lines.csv"),
                        base_mva=BASE_MVA)


def load_toy_fleet() -> tuple[EssParams, ...]:
    """One lossless 200 kWh unit at node 2."""
    return load_fleet(fixture_path("ess_toy.csv"))


def load_toy_timeseries() -> TimeSeriesDataset:
    """One flat-demand day with a cheap-night / dear-evening price split."""
    return load_timeseries(fixture_path("timeseries_toy.csv"), resolution=15)


def default_config_path() -> Path:
    return fixture_path("config_34.json")


def toy_config_path() -> Path:
    return fixture_path("config_toy.json")


def toy_dp_config_path() -> Path:
    """Toy feeder on an hourly grid with a two-hour price spread.

    The single 200 kWh unit can buy one full-power hour at 0.10 and sell
    it back at 0.30, which makes the optimal day easy to check by hand.
    """
    return fixture_path("config_toy_dp.json")
