import io

import numpy as np
import pytest

from abcad.data import (Dataset, Role, SettingParams, assemble_setting, dataset_to_csv, gen_toy,
                        load_csv, minmax_apply, minmax_fit, parse_csv, write_csv)
from abcad.errors import ConfigError, ParseError


@pytest.fixture(scope="module")
def toy():
    return gen_toy(10000, 10000, 10000, seed=0)


def test_toy_counts(toy):
    assert len(toy) == 30000
    assert [toy.count(r) for r in Role] == [10000, 10000, 10000]
    assert np.all(toy.y[toy.role == Role.NORMAL] == 1)
    assert np.all(toy.y[toy.role != Role.NORMAL] == 0)


def test_toy_deterministic():
    a, b = gen_toy(50, 50, 50, seed=4), gen_toy(50, 50, 50, seed=4)
    assert a.x.tobytes() == b.x.tobytes() and a.equals(b)
    assert not gen_toy(50, 50, 50, seed=5).equals(a)


def test_toy_unknown_blob_statistics(toy):
    blob = toy.x[toy.role == Role.UNKNOWN]
    assert np.all(np.abs(blob.mean(axis=0) - [-3.0, 3.0]) < 0.03)
    dist = np.linalg.norm(blob - [-3.0, 3.0], axis=1)
    assert dist.max() < 2.0


def test_toy_moon_geometry():
    # without jitter, normals sit on the unit upper half circle and known
    # anomalies on the shifted lower one
    ds = gen_toy(500, 500, 0, noise_std=0.0, seed=1)
    up = ds.x[ds.role == Role.NORMAL]
    low = ds.x[ds.role == Role.KNOWN]
    np.testing.assert_allclose(np.linalg.norm(up, axis=1), 1.0, rtol=1e-12)
    assert up[:, 1].min() >= 0
    np.testing.assert_allclose(np.linalg.norm(low - [1.0, 0.5], axis=1), 1.0, rtol=1e-12)
    assert low[:, 1].max() <= 0.5


def test_csv_three_roles(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("f0,f1,role\n1,2,normal\n3,4,known_anomaly\n5,6,unknown_anomaly\n")
    ds = load_csv(p)
    assert len(ds) == 3 and ds.dim == 2
    assert ds.y.tolist() == [1, 0, 0]
    assert ds.role.tolist() == [Role.NORMAL, Role.KNOWN, Role.UNKNOWN]


@pytest.mark.parametrize("body,line", [
    ("f0,f1,role\n1,2,normal\n1,nan,normal\n", "line 3"),
    ("f0,f1,role\n1,inf,normal\n", "line 2"),
    ("f0,f1,role\n1,2\n", "line 2"),
    ("f0,f1,role\n1,2,weird\n", "line 2"),
    ("f0,f1,role\n1,x,normal\n", "line 2"),
    ("a,b,role\n1,2,normal\n", "line 1"),
    ("", "line 1"),
])
def test_csv_errors_name_line(body, line):
    with pytest.raises(ParseError, match=line):
        parse_csv(io.StringIO(body))


def test_csv_round_trip(tmp_path):
    ds = gen_toy(200, 100, 50, seed=3)
    p = tmp_path / "toy.csv"
    write_csv(ds, p)
    back = load_csv(p)
    assert back.equals(ds)


def test_csv_empty_body_keeps_dimension():
    ds = parse_csv(io.StringIO("f0,f1,f2,role\n"))
    assert len(ds) == 0 and ds.dim == 3
    assert dataset_to_csv(ds) == "f0,f1,f2,role\n"


def test_minmax_linear_map():
    train = Dataset(np.array([[0.0], [10.0]]), [1, 1], [0, 0])
    sc = minmax_fit(train)
    test = Dataset(np.array([[5.0], [12.0], [-1.0]]), [1, 1, 1], [0, 0, 0])
    np.testing.assert_allclose(minmax_apply(sc, test).x.ravel(), [0.5, 1.2, -0.1])


def test_minmax_fit_set_in_unit_interval():
    ds = gen_toy(100, 100, 100, seed=0)
    out = minmax_apply(minmax_fit(ds), ds).x
    assert out.min() == 0.0 and out.max() == 1.0


def test_minmax_constant_dimension_maps_to_zero():
    ds = Dataset(np.array([[1.0, 3.0], [2.0, 3.0]]), [1, 1], [0, 0])
    out = minmax_apply(minmax_fit(ds), ds).x
    np.testing.assert_array_equal(out[:, 1], 0.0)


@pytest.fixture(scope="module")
def pool():
    return gen_toy(20000, 20000, 10000, seed=0)


def _check_split(split, pool):
    assert not set(split.train_index) & set(split.test_index)
    for part in (split.train, split.test):
        normal = part.role == Role.NORMAL
        assert np.all(part.y[normal] == 1)
        assert np.all(part.y[part.role == Role.KNOWN] == 0)


def test_setting1(pool):
    sp = assemble_setting(pool, 1, seed=0)
    _check_split(sp, pool)
    assert sp.train.count(Role.UNKNOWN) == 0
    assert sp.test.count(Role.UNKNOWN) == 10000
    for part in (sp.train, sp.test):
        assert part.count(Role.NORMAL) == 10000 and part.count(Role.KNOWN) == 10000


def test_setting2_contaminants(pool):
    sp = assemble_setting(pool, 2, SettingParams(contaminants=100), seed=0)
    _check_split(sp, pool)
    cont = sp.train.role == Role.UNKNOWN
    assert cont.sum() == 100 and np.all(sp.train.y[cont] == 1)
    assert sp.test.count(Role.UNKNOWN) == 9900
    assert np.all(sp.test.y[sp.test.role == Role.UNKNOWN] == 0)
    # the source dataset is not modified
    assert np.all(pool.y[pool.role == Role.UNKNOWN] == 0)


def test_setting3_cap(pool):
    sp = assemble_setting(pool, 3, SettingParams(known_cap=50), seed=0)
    _check_split(sp, pool)
    assert sp.train.count(Role.KNOWN) == 50
    assert sp.test.count(Role.KNOWN) == 10000


def test_setting_errors(pool):
    with pytest.raises(ConfigError):
        assemble_setting(pool, 2, SettingParams(contaminants=10001), seed=0)
    with pytest.raises(ConfigError):
        assemble_setting(pool, 3, SettingParams(known_cap=10001), seed=0)
    with pytest.raises(ConfigError):
        assemble_setting(pool, 4, seed=0)


def test_setting_deterministic(pool):
    a = assemble_setting(pool, 2, seed=9)
    b = assemble_setting(pool, 2, seed=9)
    assert a.manifest_json() == b.manifest_json()
    m = a.manifest()
    assert len(m["contaminant_index"]) == 100
    assert sorted(m["train_index"] + m["test_index"]) == sorted(set(m["train_index"] + m["test_index"]))
