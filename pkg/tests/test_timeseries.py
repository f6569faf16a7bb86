import numpy as np
import pandas as pd
import pytest

from gridarb.errors import (
    BoundaryNotDayAligned,
    BoundaryOutOfRange,
    EmptyFile,
    IndexOutOfRange,
    IrregularTimestamps,
    MalformedRow,
    TimestampNotFound,
    UnknownColumnKind,
)
from gridarb.timeseries import (
    load_timeseries,
    select_day,
    select_timeslot,
    split_train_test,
)


def make_csv(path, days=30, resolution=15, columns=None, mangle=None):
    """Synthesize a timestamped CSV with deterministic values."""
    rows_per_day = 24 * 60 // resolution
    n = days * rows_per_day
    index = pd.date_range("2023-03-01", periods=n, freq=f"{resolution}min")
    rng = np.random.default_rng(123)
    if columns is None:
        columns = ["p_node_2", "q_node_2", "pv_node_3", "price"]
    data = {}
    for name in columns:
        base = np.abs(rng.normal(10, 3, n)) if not name.startswith("q") else rng.normal(3, 1, n)
        data[name] = np.round(base, 4)
    frame = pd.DataFrame(data, index=index)
    frame.index.name = "timestamp"
    if mangle:
        frame = mangle(frame)
    frame.to_csv(path)
    return path


def test_thirty_days_at_quarter_hour_gives_2880_rows(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv"), resolution=15)
    assert ds.n_rows == 2880
    assert ds.rows_per_day == 96
    assert ds.day_count == 30
    assert ds.dt_hours == 0.25
    assert ds.nodes == (2, 3)


def test_column_classification(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=1), resolution=15)
    assert ds.kinds["p_node_2"] == ("active_demand", 2)
    assert ds.kinds["q_node_2"] == ("reactive_demand", 2)
    assert ds.kinds["pv_node_3"] == ("pv", 3)
    assert ds.kinds["price"] == ("price", None)


def test_unknown_column_named_in_error(tmp_path):
    path = make_csv(tmp_path / "d.csv", days=1,
                    columns=["p_node_2", "temperature"])
    with pytest.raises(UnknownColumnKind) as exc:
        load_timeseries(path, resolution=15)
    assert "temperature" in str(exc.value)


def test_interior_gap_linear_interpolation(tmp_path):
    def mangle(frame):
        frame.iloc[1, frame.columns.get_loc("p_node_2")] = np.nan
        frame.iloc[0, frame.columns.get_loc("p_node_2")] = 4.0
        frame.iloc[2, frame.columns.get_loc("p_node_2")] = 6.0
        return frame
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=1, mangle=mangle),
                         resolution=15)
    assert ds.columns["p_node_2"][1] == 5.0


def test_edge_gaps_take_nearest_value(tmp_path):
    def mangle(frame):
        col = frame.columns.get_loc("price")
        frame.iloc[0, col] = np.nan
        frame.iloc[1, col] = np.nan
        frame.iloc[2, col] = 7.0
        frame.iloc[-1, col] = np.nan
        frame.iloc[-2, col] = 9.0
        return frame
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=1, mangle=mangle),
                         resolution=15)
    assert ds.columns["price"][0] == 7.0
    assert ds.columns["price"][1] == 7.0
    assert ds.columns["price"][-1] == 9.0


def test_no_missing_values_after_load(tmp_path):
    def mangle(frame):
        rng = np.random.default_rng(5)
        for col in range(frame.shape[1]):
            holes = rng.choice(len(frame), 20, replace=False)
            frame.iloc[holes, col] = np.nan
        return frame
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=3, mangle=mangle),
                         resolution=15)
    for name, values in ds.columns.items():
        assert np.isfinite(values).all(), name


def test_irregular_spacing_rejected(tmp_path):
    def mangle(frame):
        frame = frame.copy()
        idx = frame.index.to_list()
        idx[10] = idx[10] + pd.Timedelta(minutes=5)
        frame.index = pd.DatetimeIndex(idx, name="timestamp")
        return frame
    path = make_csv(tmp_path / "d.csv", days=1, mangle=mangle)
    with pytest.raises(IrregularTimestamps):
        load_timeseries(path, resolution=15)
    # wrong declared resolution also fails
    with pytest.raises(IrregularTimestamps):
        load_timeseries(make_csv(tmp_path / "e.csv", days=1, resolution=15),
                        resolution=30)


def test_empty_and_malformed_files(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(EmptyFile):
        load_timeseries(empty, resolution=15)

    header_only = tmp_path / "h.csv"
    header_only.write_text("timestamp,price\n", encoding="utf-8")
    with pytest.raises(EmptyFile):
        load_timeseries(header_only, resolution=15)

    wrong_first = tmp_path / "w.csv"
    wrong_first.write_text("time,price\n2023-01-01,5\n", encoding="utf-8")
    with pytest.raises(MalformedRow):
        load_timeseries(wrong_first, resolution=15)

    with pytest.raises(ValueError):
        load_timeseries(make_csv(tmp_path / "d.csv", days=1), resolution=7)


def test_negative_pv_rejected(tmp_path):
    def mangle(frame):
        frame.iloc[5, frame.columns.get_loc("pv_node_3")] = -1.0
        return frame
    path = make_csv(tmp_path / "d.csv", days=1, mangle=mangle)
    with pytest.raises(MalformedRow) as exc:
        load_timeseries(path, resolution=15)
    assert "pv_node_3" in str(exc.value)


def test_split_at_day_24(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=30), resolution=15)
    boundary = ds.timestamps[0] + pd.Timedelta(days=24)
    train, test = split_train_test(ds, boundary)
    assert train.n_rows == 2304
    assert test.n_rows == 576
    assert train.timestamps[-1] < boundary <= test.timestamps[0]


def test_split_is_exact_partition(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=10), resolution=15)
    train, test = split_train_test(ds, ds.timestamps[0] + pd.Timedelta(days=3))
    assert train.n_rows + test.n_rows == ds.n_rows
    joined_ts = train.timestamps.append(test.timestamps)
    assert (joined_ts == ds.timestamps).all()
    for name in ds.columns:
        joined = np.concatenate([train.columns[name], test.columns[name]])
        assert joined.tobytes() == ds.columns[name].tobytes()


def test_split_boundary_validation(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=5), resolution=15)
    with pytest.raises(BoundaryOutOfRange):
        split_train_test(ds, ds.timestamps[0])
    with pytest.raises(BoundaryOutOfRange):
        split_train_test(ds, ds.timestamps[0] - pd.Timedelta(days=1))
    with pytest.raises(BoundaryOutOfRange):
        split_train_test(ds, ds.timestamps[-1] + pd.Timedelta(days=1))
    with pytest.raises(BoundaryNotDayAligned):
        split_train_test(ds, ds.timestamps[0] + pd.Timedelta(hours=36))


def test_select_day_rows(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=3), resolution=15)
    day0 = select_day(ds, 0)
    assert len(day0.rows) == 96
    assert day0.day_start == ds.timestamps[0]
    assert day0.rows[0].timestamp == ds.timestamps[0]

    last = select_day(ds, 2)
    assert last.rows[-1].timestamp == ds.timestamps[-1]

    with pytest.raises(IndexOutOfRange):
        select_day(ds, 3)
    with pytest.raises(IndexOutOfRange):
        select_day(ds, -1)


def test_select_day_agrees_with_select_timeslot(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=2), resolution=15)
    day = select_day(ds, 1)
    for row in day.rows:
        single = select_timeslot(ds, row.timestamp)
        assert single == row


def test_select_timeslot(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=1), resolution=15)
    first = select_timeslot(ds, ds.timestamps[0])
    assert first.price == ds.columns["price"][0]
    assert first.demand_p[2] == ds.columns["p_node_2"][0]
    # node 3 has PV but no demand columns: zero-filled, and node 2 no PV
    assert first.demand_p[3] == 0.0
    assert first.pv_p[2] == 0.0
    assert first.pv_p[3] == ds.columns["pv_node_3"][0]

    with pytest.raises(TimestampNotFound):
        select_timeslot(ds, ds.timestamps[0] + pd.Timedelta(minutes=7))


def test_day_matrix_shape_and_content(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=4), resolution=15)
    mat = ds.day_matrix("price")
    assert mat.shape == (4, 96)
    assert mat[2, 13] == ds.columns["price"][2 * 96 + 13]


def test_dataset_columns_read_only(tmp_path):
    ds = load_timeseries(make_csv(tmp_path / "d.csv", days=1), resolution=15)
    with pytest.raises((ValueError, AttributeError)):
        ds.columns["price"][0] = 99.0
