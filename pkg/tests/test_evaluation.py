import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats as sps

from abcad.config import ExperimentConfig
from abcad.errors import ConfigError, EvaluationError
from abcad.evaluation import (aggregate, auroc, default_bbox, evaluate_split, heatmap,
                              run_experiment)
from abcad.data import Role, gen_toy
from abcad.models import ModelConfig
from abcad.nn import AutoencoderParams, NetworkParams
from abcad.stats import betainc, welch_t_test
from abcad.training import TrainConfig, TrainedModel, TrainLog, train


def brute_auroc(scores, pos):
    a = [s for s, p in zip(scores, pos) if p]
    n = [s for s, p in zip(scores, pos) if not p]
    total = sum(1.0 if x > z else 0.5 if x == z else 0.0 for x in a for z in n)
    return total / (len(a) * len(n))


def test_auroc_perfect():
    assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_auroc_all_ties():
    assert auroc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5


def test_auroc_single_class_rejected():
    with pytest.raises(EvaluationError):
        auroc([0.1, 0.2], [1, 1])


@settings(max_examples=100)
@given(st.integers(2, 20).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 5), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n))))
def test_auroc_matches_bruteforce_with_ties(data):
    scores, pos = data
    if all(pos) or not any(pos):
        return
    assert auroc(np.array(scores, float), pos) == brute_auroc(scores, pos)


@given(st.lists(st.integers(-1000, 1000), min_size=4, max_size=40, unique=True), st.randoms())
def test_auroc_invariances(scores, rnd):
    pos = [rnd.random() < 0.5 for _ in scores]
    pos[0], pos[1] = True, False
    s = np.array(scores, float)
    a = auroc(s, pos)
    assert auroc(s ** 3 + 7 * s, pos) == a     # exact for these integers, strictly increasing
    assert auroc(s, [not p for p in pos]) == pytest.approx(1 - a, abs=1e-15)


def test_betainc_against_scipy():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a, b = rng.uniform(0.05, 40, size=2)
        x = rng.uniform()
        assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-9, abs=1e-14)


def test_welch_against_scipy():
    rng = np.random.default_rng(1)
    for _ in range(200):
        na, nb = rng.integers(2, 12, size=2)
        a = rng.normal(0, rng.uniform(0.1, 2), size=na)
        b = rng.normal(rng.uniform(-2, 2), rng.uniform(0.1, 2), size=nb)
        ref = sps.ttest_ind(a, b, equal_var=False).pvalue
        assert welch_t_test(a, b) == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_welch_identical_lists():
    assert welch_t_test([0.9, 0.91, 0.92], [0.9, 0.91, 0.92]) == 1.0
    assert welch_t_test([1, 1, 1], [1, 1, 1]) == 1.0
    assert welch_t_test([1, 1, 1], [2, 2, 2]) == 0.0


def test_welch_separated_and_symmetric():
    rng = np.random.default_rng(2)
    a = rng.normal(0, 1e-3, 5)
    b = 1 + rng.normal(0, 1e-3, 5)
    assert welch_t_test(a, b) < 1e-3
    c = rng.normal(size=6)
    assert welch_t_test(a, c) == welch_t_test(c, a)


def test_welch_needs_two_values():
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])


def _identity_model(kind="ABC-AE"):
    net = NetworkParams((2, 2), ("identity",), np.concatenate([np.eye(2).ravel(), np.zeros(2)]))
    return TrainedModel(kind, AutoencoderParams(net, net.copy()),
                        TrainConfig(model=ModelConfig(kind=kind)), TrainLog())


def _radius_model():
    # zero autoencoder: the error is |x|^2, so points far from the origin score higher
    net = NetworkParams((2, 2), ("identity",), np.zeros(6))
    return TrainedModel("AE", AutoencoderParams(net, net.copy()),
                        TrainConfig(model=ModelConfig(kind="AE")), TrainLog())


def test_evaluate_split_perfect_and_missing_role():
    from abcad.data import from_roles
    x = np.array([[0.0, 0.1], [0.1, 0.0], [3.0, 0.0], [0.0, 5.0]])
    test = from_roles(x, [Role.NORMAL, Role.NORMAL, Role.KNOWN, Role.UNKNOWN])
    assert evaluate_split(_radius_model(), test) == (1.0, 1.0)
    no_unknown = from_roles(x[:3], [Role.NORMAL, Role.NORMAL, Role.KNOWN])
    assert evaluate_split(_radius_model(), no_unknown) == (1.0, None)


def test_heatmap_identity_is_zero():
    g = heatmap(_identity_model(), (-1, 1, -1, 1), (20, 10))
    assert g.values.shape == (10, 20) and np.all(g.values == 0.0)


def test_heatmap_rows_and_centers():
    g = heatmap(_radius_model(), (0, 2, 0, 1), (200, 200))
    lines = g.to_csv().splitlines()
    assert lines[0] == "x,y,score" and len(lines) == 40001
    x, y, s = map(float, lines[1].split(","))
    assert (x, y) == (0.005, 0.0025) and s == pytest.approx(x * x + y * y, rel=1e-12)


def test_heatmap_rejects_non_2d():
    net = NetworkParams((3, 3), ("identity",), np.zeros(12))
    model = TrainedModel("AE", AutoencoderParams(net, net.copy()), TrainConfig(), TrainLog())
    with pytest.raises(ConfigError):
        heatmap(model, (0, 1, 0, 1))


def test_default_bbox_margin():
    ds = gen_toy(10, 10, 0, noise_std=0.0, seed=0)
    xmin, xmax, ymin, ymax = default_bbox(ds)
    lo, hi = ds.x.min(0), ds.x.max(0)
    assert xmin == pytest.approx(lo[0] - 0.2 * (hi[0] - lo[0]))
    assert ymax == pytest.approx(hi[1] + 0.2 * (hi[1] - lo[1]))


def test_aggregate_means_and_marks():
    per_run = [{"A": (0.90, 1.0), "B": (0.80, 0.5)},
               {"A": (0.92, 1.0), "B": (0.81, 0.4)},
               {"A": (0.91, 1.0), "B": (0.79, 0.6)}]
    rep = aggregate(["A", "B"], per_run, 1, 3, [])
    a = rep.cells["A"]["known"]
    assert a.mean == pytest.approx(np.mean([0.90, 0.92, 0.91]), abs=1e-12)
    assert a.std == pytest.approx(np.std([0.90, 0.92, 0.91]), abs=1e-12)
    assert a.best and a.tied_with_best and not rep.cells["B"]["known"].tied_with_best
    table = rep.to_table()
    assert "0.910(008)*" in table and "0.800(008)" in table


def test_aggregate_marks_indistinguishable():
    per_run = [{"A": (0.90, None), "B": (0.95, None)},
               {"A": (0.94, None), "B": (0.89, None)}]
    rep = aggregate(["A", "B"], per_run, 1, 2, [])
    assert rep.cells["A"]["known"].tied_with_best and rep.cells["B"]["known"].tied_with_best
    assert rep.cells["A"]["unknown"].mean is None


TINY = {"data": {"n_normal": 300, "n_known": 300, "n_unknown": 100},
        "model": {"kinds": ["ABC-AE", "DNN"]},
        "train": {"max_epochs": 3}, "experiment": {"runs": 2, "workers": 1}}


def test_run_experiment_deterministic():
    cfg = ExperimentConfig.from_dict(TINY)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.to_json() == b.to_json()
    assert len(a.cells["ABC-AE"]["known"].runs) == 2


def test_run_experiment_single_run_std_zero():
    cfg = ExperimentConfig.from_dict({**TINY, "experiment": {"runs": 1, "workers": 1}})
    rep = run_experiment(cfg)
    assert rep.cells["DNN"]["known"].std == 0.0


def test_run_experiment_records_failures(monkeypatch):
    import abcad.evaluation as ev
    real = ev.train

    def flaky(ds, tc):
        if tc.model.kind.value == "DNN" and tc.seed == 1:
            raise ArithmeticError("boom")
        return real(ds, tc)

    monkeypatch.setattr(ev, "train", flaky)
    rep = run_experiment(ExperimentConfig.from_dict(TINY))
    assert rep.failures == [{"run": 1, "model": "DNN", "error": "boom"}]
    assert len(rep.cells["DNN"]["known"].runs) == 1
    assert len(rep.cells["ABC-AE"]["known"].runs) == 2


def test_parallel_workers_match_serial():
    serial = run_experiment(ExperimentConfig.from_dict(TINY))
    par = run_experiment(ExperimentConfig.from_dict({**TINY, "experiment": {"runs": 2, "workers": 2}}))
    assert serial.to_dict()["auroc"] == par.to_dict()["auroc"]


def test_heatmap_applies_scaler_to_raw_grid():
    from abcad.data import MinMaxScaler
    sc = MinMaxScaler(np.array([0.0, 0.0]), np.array([2.0, 4.0]))
    raw = heatmap(_radius_model(), (0, 2, 0, 4), (4, 4), scaler=sc)
    unit = heatmap(_radius_model(), (0, 1, 0, 1), (4, 4))
    np.testing.assert_allclose(raw.values, unit.values, rtol=1e-15)
    assert raw.bbox == (0.0, 2.0, 0.0, 4.0)
