"""Timestamp-indexed operational data: load, classify, clean, split, slice.

Column classification follows a fixed naming convention instead of
heuristics: ``p_node_<id>`` (active demand, kW), ``q_node_<id>``
(reactive demand, kvar), ``pv_node_<id>`` (PV generation, kW) and
``price`` (EUR/kWh).  Interior gaps are filled by linear interpolation
and edge gaps by the nearest value, so every loaded dataset is dense.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd

from .errors import (
    BoundaryNotDayAligned,
    BoundaryOutOfRange,
    EmptyFile,
    IndexOutOfRange,
    IrregularTimestamps,
    MalformedRow,
    TimestampNotFound,
    UnknownColumnKind,
)

__all__ = [
    "ColumnKind",
    "SlotRecord",
    "EpisodeSlice",
    "TimeSeriesDataset",
    "load_timeseries",
    "split_train_test",
    "select_day",
    "select_timeslot",
]

_COLUMN_PATTERNS = (
    (re.compile(r"^p_node_(\d+)$"), "active_demand"),
    (re.compile(r"^q_node_(\d+)$"), "reactive_demand"),
    (re.compile(r"^pv_node_(\d+)$"), "pv"),
)


class ColumnKind(NamedTuple):
    kind: str  # active_demand | reactive_demand | pv | price
    node: int | None  # None for price


@dataclass(frozen=True)
class SlotRecord:
    """One timeslot of exogenous data, keyed by node id."""

    timestamp: pd.Timestamp
    demand_p: dict[int, float]  # kW
    demand_q: dict[int, float]  # kvar
    pv_p: dict[int, float]  # kW, zero for nodes without a PV column
    price: float  # EUR/kWh


@dataclass(frozen=True)
class EpisodeSlice:
    day_start: pd.Timestamp
    rows: tuple[SlotRecord, ...]


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    timestamps: pd.DatetimeIndex
    columns: dict[str, np.ndarray]
    kinds: dict[str, ColumnKind]
    resolution_minutes: int

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)

    @property
    def rows_per_day(self) -> int:
        return (24 * 60) // self.resolution_minutes

    @property
    def day_count(self) -> int:
        return self.n_rows // self.rows_per_day

    @property
    def dt_hours(self) -> float:
        return self.resolution_minutes / 60.0

    @property
    def nodes(self) -> tuple[int, ...]:
        """All node ids mentioned by any demand or PV column, ascending."""
        return tuple(sorted({k.node for k in self.kinds.values()
                             if k.node is not None}))

    def day_matrix(self, column: str) -> np.ndarray:
        """Column values reshaped to (day_count, rows_per_day).

        Trailing rows of a partial final day are dropped.
        """
        values = self.columns[column]
        usable = self.day_count * self.rows_per_day
        return values[:usable].reshape(self.day_count, self.rows_per_day)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {name: values.copy() for name, values in self.columns.items()},
            index=self.timestamps.copy())
        frame.index.name = "timestamp"
        return frame

    def record_at(self, row: int) -> SlotRecord:
        nodes = self.nodes
        demand_p = {n: 0.0 for n in nodes}
        demand_q = {n: 0.0 for n in nodes}
        pv_p = {n: 0.0 for n in nodes}
        price = 0.0
        for name, ck in self.kinds.items():
            value = float(self.columns[name][row])
            if ck.kind == "active_demand":
                demand_p[ck.node] = value
            elif ck.kind == "reactive_demand":
                demand_q[ck.node] = value
            elif ck.kind == "pv":
                pv_p[ck.node] = value
            else:
                price = value
        return SlotRecord(timestamp=self.timestamps[row], demand_p=demand_p,
                          demand_q=demand_q, pv_p=pv_p, price=price)


def classify_column(name: str) -> ColumnKind:
    if name == "price":
        return ColumnKind("price", None)
    for pattern, kind in _COLUMN_PATTERNS:
        match = pattern.match(name)
        if match:
            return ColumnKind(kind, int(match.group(1)))
    raise UnknownColumnKind(
        f"column {name!r} does not match p_node_<id>/q_node_<id>/"
        f"pv_node_<id>/price")


def _fill_gaps(series: pd.Series) -> pd.Series:
    # linear interpolation for interior holes, nearest value at the edges
    filled = series.interpolate(method="linear", limit_area="inside")
    return filled.ffill().bfill()


def load_timeseries(path, resolution: int = 15) -> TimeSeriesDataset:
    """Load a dense, classified dataset from a timestamped CSV.

    ``resolution`` is the expected spacing in minutes; it must divide a
    day evenly and the file's timestamps must match it exactly.
    """
    if resolution <= 0 or (24 * 60) % resolution != 0:
        raise ValueError(f"resolution {resolution} min must divide 24 h evenly")
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise EmptyFile(f"{path}: no data")
    if frame.empty:
        raise EmptyFile(f"{path}: no rows")
    if frame.columns[0] != "timestamp":
        raise MalformedRow(f"{path}: first column must be 'timestamp', "
                           f"got {frame.columns[0]!r}")
    if len(frame.columns) < 2:
        raise UnknownColumnKind(f"{path}: no data columns after 'timestamp'")

    try:
        ts = pd.DatetimeIndex(pd.to_datetime(frame["timestamp"], format="ISO8601"))
    except (ValueError, TypeError) as err:
        raise MalformedRow(f"{path}: unparseable timestamp: {err}")
    deltas = np.diff(ts.asi8)
    step_ns = resolution * 60 * 1_000_000_000
    if len(ts) > 1 and not (deltas == step_ns).all():
        first_bad = int(np.flatnonzero(deltas != step_ns)[0])
        raise IrregularTimestamps(
            f"{path}: spacing breaks at row {first_bad + 2} "
            f"({ts[first_bad]} -> {ts[first_bad + 1]}, expected {resolution} min)")

    kinds = {}
    columns = {}
    for name in frame.columns[1:]:
        kinds[name] = classify_column(name)
        series = pd.to_numeric(frame[name], errors="coerce")
        filled = _fill_gaps(series)
        if filled.isna().any():
            raise MalformedRow(f"{path}: column {name!r} has no usable values")
        values = filled.to_numpy(dtype=float)
        if kinds[name].kind == "pv" and (values < 0).any():
            row = int(np.flatnonzero(values < 0)[0])
            raise MalformedRow(
                f"{path}: column {name!r} row {row + 2}: negative PV generation")
        values.setflags(write=False)
        columns[name] = values

    return TimeSeriesDataset(timestamps=ts, columns=columns, kinds=kinds,
                             resolution_minutes=resolution)


def _subset(ds: TimeSeriesDataset, mask: np.ndarray) -> TimeSeriesDataset:
    columns = {}
    for name, values in ds.columns.items():
        sub = values[mask].copy()
        sub.setflags(write=False)
        columns[name] = sub
    return TimeSeriesDataset(timestamps=ds.timestamps[mask], columns=columns,
                             kinds=dict(ds.kinds),
                             resolution_minutes=ds.resolution_minutes)


def split_train_test(ds: TimeSeriesDataset, boundary
                     ) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Split at a day-aligned timestamp: train [start, boundary), test [boundary, end]."""
    boundary = pd.Timestamp(boundary)
    start, end = ds.timestamps[0], ds.timestamps[-1]
    if not (start < boundary <= end):
        raise BoundaryOutOfRange(
            f"boundary {boundary} must lie strictly inside ({start}, {end}]")
    offset = boundary - start
    day = pd.Timedelta(hours=24)
    if offset % day != pd.Timedelta(0):
        raise BoundaryNotDayAligned(
            f"boundary {boundary} is {offset % day} past a day start")
    mask = ds.timestamps < boundary
    return _subset(ds, mask), _subset(ds, ~mask)


def select_day(ds: TimeSeriesDataset, day_index: int) -> EpisodeSlice:
    """The H contiguous rows of one calendar day."""
    if not 0 <= day_index < ds.day_count:
        raise IndexOutOfRange(
            f"day_index {day_index} outside [0, {ds.day_count})")
    h = ds.rows_per_day
    lo = day_index * h
    rows = tuple(ds.record_at(row) for row in range(lo, lo + h))
    return EpisodeSlice(day_start=ds.timestamps[lo], rows=rows)


def select_timeslot(ds: TimeSeriesDataset, ts) -> SlotRecord:
    """The single record at an exact timestamp (no interpolation)."""
    ts = pd.Timestamp(ts)
    pos = ds.timestamps.get_indexer([ts])
    if pos[0] < 0:
        raise TimestampNotFound(f"timestamp {ts} not in dataset index")
    return ds.record_at(int(pos[0]))
