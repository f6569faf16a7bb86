"""JSON run configuration: one file that names the network, fleet, and data.

A config document references its CSV inputs by paths relative to the
config file's own directory, so a config and its data move together.
Keys are validated strictly — an unknown key is an error, not a silent
default — because a typo like ``"sigm"`` would otherwise change the
economics of every run without a trace.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .environment import EnvConfig
from .ess import load_fleet
from .network import load_network
from .timeseries import TimeSeriesDataset, load_timeseries

__all__ = ["RunConfig", "load_config", "resolve_config_path", "CONFIG_ENV_VAR"]

CONFIG_ENV_VAR = "GRIDARB_CONFIG"

_TOP_LEVEL_KEYS = {
    "network", "fleet", "timeseries", "sigma", "v_max", "v_min", "v_ref",
    "dt_hours", "horizon", "s_base_mva", "penalty_nodes", "state_builder",
    "zip_coefficients",
}
_PRICE_UNITS = ("eur_per_kwh",)


@dataclass(frozen=True)
class RunConfig:
    """A fully loaded run: environment config, dataset, and provenance."""
    env: EnvConfig
    data: TimeSeriesDataset
    source: Path


def resolve_config_path(explicit=None) -> Path:
    """--config flag beats $GRIDARB_CONFIG beats the bundled demo config."""
    if explicit:
        return Path(explicit)
    from_env = os.environ.get(CONFIG_ENV_VAR)
    if from_env:
        return Path(from_env)
    from .feeders import default_config_path
    return default_config_path()


def _require(doc: dict, key: str, where) -> object:
    if key not in doc:
        raise ValueError(f"{where}: missing required key {key!r}")
    return doc[key]


def _check_zip(doc: dict, where) -> None:
    """Only constant-power loads are modeled; reject anything else."""
    zip_doc = doc.get("zip_coefficients")
    if zip_doc is None:
        return
    impedance = float(zip_doc.get("impedance", 0.0))
    current = float(zip_doc.get("current", 0.0))
    power = float(zip_doc.get("power", 1.0))
    if impedance != 0.0 or current != 0.0 or power != 1.0:
        raise ValueError(
            f"{where}: only constant-power loads are implemented; "
            f"zip_coefficients must be impedance=0, current=0, power=1")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: not valid JSON: {err}")
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config root must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")

    base = path.parent
    net_doc = _require(doc, "network", path)
    network = load_network(
        base / _require(net_doc, "nodes", path),
        base / _require(net_doc, "lines", path),
        base_mva=float(net_doc.get("base_mva", 1.0)))
    fleet = load_fleet(base / _require(doc, "fleet", path))

    ts_doc = _require(doc, "timeseries", path)
    resolution = int(ts_doc.get("resolution_minutes", 15))
    price_unit = ts_doc.get("price_unit", "eur_per_kwh")
    if price_unit not in _PRICE_UNITS:
        raise ValueError(f"{path}: unsupported price_unit {price_unit!r}; "
                         f"supported: {_PRICE_UNITS}")
    data = load_timeseries(base / _require(ts_doc, "path", path),
                           resolution=resolution)

    dt_hours = float(doc.get("dt_hours", 0.25))
    if abs(dt_hours - resolution / 60.0) > 1e-12:
        raise ValueError(
            f"{path}: dt_hours {dt_hours} does not match the "
            f"{resolution}-minute data resolution")
    _check_zip(doc, path)

    env = EnvConfig(
        network=network,
        fleet=fleet,
        sigma=float(doc.get("sigma", 400.0)),
        v_max=float(doc.get("v_max", 1.05)),
        v_min=float(doc.get("v_min", 0.95)),
        v_ref=float(doc.get("v_ref", 1.0)),
        dt=dt_hours,
        horizon=int(doc.get("horizon", round(24.0 / dt_hours))),
        s_base_mva=float(doc.get("s_base_mva", 1.0)),
        penalty_nodes=doc.get("penalty_nodes", "all"),
        state_builder=doc.get("state_builder", "net_load"),
    )
    return RunConfig(env=env, data=data, source=path)
