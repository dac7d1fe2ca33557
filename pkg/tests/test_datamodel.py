import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rpsae.datamodel import (CostParams, Line, PeriodMatrix, Resource, SpecError, SystemSpec, Zone,
                             denormalize, load_system, normalize, periodize, save_system, write_series_csv)
from rpsae.synthetic import make_system


def one_zone_config(tmp_path, hours=8760, rows=None, avail_col="solar"):
    rows = hours if rows is None else rows
    write_series_csv(tmp_path / "load.csv", "load", {"Z1": np.full(rows, 5.0)})
    write_series_csv(tmp_path / "avail.csv", "avail", {avail_col: np.full(rows, 0.5)})
    cfg = {
        "zones": [{"id": "Z1"}],
        "lines": [],
        "resources": [
            {"id": "gas", "kind": "thermal", "zone": "Z1", "costs": {"invest_power": 10.0}},
            {"id": "pv", "kind": "vre", "zone": "Z1", "availability_column": "avail.solar"},
        ],
        "files": {"load": "load.csv", "availability": "avail.csv"},
        "voll": 1000.0,
        "hours": hours,
    }
    path = tmp_path / "system.json"
    path.write_text(json.dumps(cfg))
    return path


def test_load_valid_one_zone_year(tmp_path):
    spec = load_system(one_zone_config(tmp_path))
    assert spec.hours == 8760
    assert spec.load["Z1"].shape == (8760,)
    assert spec.voll == {"Z1": 1000.0}


def test_short_load_csv_names_file(tmp_path):
    path = one_zone_config(tmp_path, rows=8759)
    with pytest.raises(SpecError) as exc:
        load_system(path)
    assert "load.csv" in str(exc.value)
    assert "8759" in str(exc.value) or "rows" in str(exc.value)


def test_absent_availability_column(tmp_path):
    path = one_zone_config(tmp_path, avail_col="wind")
    with pytest.raises(SpecError) as exc:
        load_system(path)
    assert "avail.solar" in str(exc.value)


def test_bad_header_reported(tmp_path):
    path = one_zone_config(tmp_path, hours=4)
    (tmp_path / "load.csv").write_text("hr,load.Z1\n1,1\n2,1\n3,1\n4,1\n")
    with pytest.raises(SpecError, match="hour"):
        load_system(path)


def test_negative_load_row_reported(tmp_path):
    path = one_zone_config(tmp_path, hours=3)
    (tmp_path / "load.csv").write_text("hour,load.Z1\n1,1\n2,-1\n3,1\n")
    with pytest.raises(SpecError) as exc:
        load_system(path)
    assert exc.value.row == 2


def test_resource_invariants():
    with pytest.raises(SpecError):
        Resource("g", "thermal", "Z1", CostParams(invest_energy=1.0))
    with pytest.raises(SpecError):
        Resource("s", "vre", "Z1", CostParams(startup=1.0), availability_column="a")
    with pytest.raises(SpecError):
        Resource("v", "vre", "Z1")
    with pytest.raises(SpecError):
        Line("A", "A", 1.0, 1.0)
    with pytest.raises(SpecError):
        Line("A", "B", 0.0, 1.0)


def test_duplicate_line_pair_rejected():
    with pytest.raises(SpecError):
        SystemSpec([Zone("A"), Zone("B")], [Line("A", "B", 1, 1), Line("B", "A", 1, 1, id="x")], [],
                   {"A": np.zeros(2), "B": np.zeros(2)}, {}, 100.0, hours=2)


def test_save_load_roundtrip(tmp_path):
    spec = make_system(hours=48, zones=3)
    back = load_system(save_system(spec, tmp_path))
    assert back.resources == spec.resources and back.lines == spec.lines
    for z in spec.zone_ids:
        np.testing.assert_array_equal(back.load[z], spec.load[z])
    for c in spec.availability:
        np.testing.assert_array_equal(back.availability[c], spec.availability[c])


def year_spec(zones=1, hours=8760):
    zs = [Zone(f"Z{i}") for i in range(zones)]
    rng = np.random.default_rng(0)
    res = [Resource(f"pv{i}", "vre", z.id, availability_column=f"s{i}") for i, z in enumerate(zs)]
    res += [Resource(f"w{i}", "vre", z.id, availability_column=f"w{i}") for i, z in enumerate(zs)]
    return SystemSpec(zs, [], res, {z.id: rng.uniform(0, 10, hours) for z in zs},
                      {f"{k}{i}": rng.uniform(0, 1, hours) for i in range(zones) for k in "sw"}, 100.0,
                      hours=hours)


def test_weekly_periods_of_a_year():
    m = periodize(year_spec(), 168)
    assert m.n_periods == 52
    assert m.shape == (52, 3 * 168)


def test_eight_bus_input_dimension():
    m = periodize(year_spec(zones=8), 168)
    assert m.shape == (52, 4032)


def test_single_period_is_flattened_series():
    spec = year_spec()
    m = periodize(spec, 8760)
    assert m.n_periods == 1
    expected = np.concatenate([spec.availability["s0"], spec.availability["w0"], spec.load["Z0"]])
    np.testing.assert_array_equal(m.data[0], expected)


def test_q_larger_than_horizon():
    with pytest.raises(ValueError):
        periodize(year_spec(hours=100), 101)


def test_missing_period_solution():
    spec = make_system(hours=48, storage=False)
    with pytest.raises(ValueError, match="period"):
        periodize(spec, 24, "output", [None, None])


@given(q=st.integers(1, 50))
@settings(max_examples=25, deadline=None)
def test_rows_reassemble_series(q):
    spec = year_spec(hours=200)
    m = periodize(spec, q)
    p = 200 // q
    for kind, entity in m.series_keys():
        cols = [j for j, lab in enumerate(m.column_labels) if lab[:2] == (kind, entity)]
        table = spec.load if kind == "load" else spec.availability
        np.testing.assert_array_equal(m.data[:, cols].reshape(-1), table[entity][:p * q])


def test_column_order_deterministic():
    a, b = periodize(year_spec(), 24), periodize(year_spec(), 24)
    assert a.column_labels == b.column_labels
    assert a.data.tobytes() == b.data.tobytes()
    keys = a.series_keys()
    assert keys == sorted(keys)


def pm(data):
    data = np.asarray(data, float)
    return PeriodMatrix(data, 1, [("load", f"c{j}", 0) for j in range(data.shape[1])])


def test_normalize_column():
    n = normalize(pm([[0.0], [5.0], [10.0]]))
    np.testing.assert_array_equal(n.data[:, 0], [0, 0.5, 1])
    np.testing.assert_array_equal(n.scaling[:, 0], [0, 10])


def test_constant_column():
    n = normalize(pm([[3.0], [3.0]]))
    np.testing.assert_array_equal(n.data[:, 0], [0, 0])
    np.testing.assert_array_equal(n.scaling[:, 0], [3, 3])
    np.testing.assert_array_equal(denormalize(n).data[:, 0], [3, 3])


def test_denormalize_needs_scaling():
    with pytest.raises(ValueError):
        denormalize(pm([[1.0]]))


@given(arrays(float, (6, 3), elements=st.floats(-1e3, 1e3)))
@settings(max_examples=50, deadline=None)
def test_normalize_roundtrip_and_idempotence(x):
    m = pm(x)
    n = normalize(m)
    back = denormalize(n)
    varying = x.max(axis=0) > x.min(axis=0)
    np.testing.assert_allclose(back.data[:, varying], x[:, varying], rtol=1e-12, atol=1e-9)
    assert n.data.min() >= 0 and n.data.max() <= 1
    nn = normalize(n)
    np.testing.assert_allclose(nn.data, n.data, atol=1e-12)
    np.testing.assert_allclose(denormalize(nn).data[:, varying], x[:, varying], rtol=1e-12, atol=1e-9)
