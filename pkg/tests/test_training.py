import logging

import numpy as np
import pytest

import abcad.training as training
from abcad.data import Dataset, Role, from_roles, gen_toy
from abcad.errors import ConfigError, NumericalError
from abcad.models import ModelConfig, reconstruction_error
from abcad.nn import AutoencoderParams, NetworkParams
from abcad.training import TrainConfig, evaluate_epoch_metrics, split_validation, train


def small_toy(n=300, seed=0, noise=0.1):
    return gen_toy(n, n, 0, noise_std=noise, seed=seed)


def cfg(kind="ABC-AE", **kw):
    kw.setdefault("max_epochs", 5)
    return TrainConfig(model=ModelConfig(kind=kind), **kw)


def test_split_sizes_and_cover():
    ds = from_roles(np.arange(200.0).reshape(100, 2), [0] * 100)
    tr, va = split_validation(ds, 0.2, seed=0)
    assert (len(tr), len(va)) == (80, 20)
    rows = np.vstack([tr.x, va.x])
    assert sorted(rows[:, 0].tolist()) == ds.x[:, 0].tolist()


def test_split_is_stratified():
    ds = from_roles(np.arange(200.0).reshape(100, 2), [0] * 50 + [1] * 50)
    _, va = split_validation(ds, 0.2, seed=0)
    assert (va.y == 1).sum() == 10 and (va.y == 0).sum() == 10


def test_split_deterministic():
    ds = small_toy()
    a, b = split_validation(ds, 0.2, seed=3), split_validation(ds, 0.2, seed=3)
    assert a[0].equals(b[0]) and a[1].equals(b[1])


def test_split_falls_back_when_class_tiny(caplog):
    ds = from_roles(np.arange(20.0).reshape(10, 2), [0] * 9 + [1])
    with caplog.at_level(logging.WARNING):
        tr, va = split_validation(ds, 0.2, seed=0)
    assert "unstratified" in caplog.text
    assert len(tr) + len(va) == 10


def test_zero_epochs_returns_initial_params():
    m = train(small_toy(), cfg(max_epochs=0))
    assert m.log.records == [] and m.log.best_epoch is None
    again = train(small_toy(), cfg(max_epochs=0))
    assert m.params.flat.tobytes() == again.params.flat.tobytes()


def test_training_is_deterministic():
    a = train(small_toy(), cfg("ABC-DAE"))
    b = train(small_toy(), cfg("ABC-DAE"))
    assert a.params.flat.tobytes() == b.params.flat.tobytes()
    assert a.log.to_csv() == b.log.to_csv()


def test_abc_matches_ae_on_all_normal_data():
    ds = gen_toy(300, 0, 0, seed=1)
    a = train(ds, cfg("AE", max_epochs=8))
    b = train(ds, cfg("ABC-AE", max_epochs=8))
    assert a.log.column("train_loss") == b.log.column("train_loss")
    assert a.params.flat.tobytes() == b.params.flat.tobytes()


def test_unsupervised_kinds_train_on_normals_only(monkeypatch):
    seen = []
    real = training.model_loss_and_grads

    def spy(kind, params, x, y, *a, **kw):
        seen.append(np.asarray(y).copy())
        return real(kind, params, x, y, *a, **kw)

    monkeypatch.setattr(training, "model_loss_and_grads", spy)
    train(small_toy(), cfg("AE", max_epochs=1))
    assert np.all(np.concatenate(seen) == 1)


def test_every_point_visited_once_per_epoch(monkeypatch):
    ds = small_toy(n=137)
    batches = []
    real = training.model_loss_and_grads

    def spy(kind, params, x, y, *a, **kw):
        batches.append(np.asarray(x).copy())
        return real(kind, params, x, y, *a, **kw)

    monkeypatch.setattr(training, "model_loss_and_grads", spy)
    config = cfg(max_epochs=2, batch_size=32)
    train(ds, config)
    tr, _ = split_validation(ds, 0.2, np.random.default_rng(np.random.SeedSequence(0).spawn(4)[1]))
    n = len(tr)
    per_epoch = -(-n // 32)
    assert len(batches) == 2 * per_epoch
    assert len(batches[per_epoch - 1]) == n - 32 * (per_epoch - 1)   # short last batch kept
    key = sorted(map(tuple, tr.x.tolist()))
    for e in range(2):
        rows = np.vstack(batches[e * per_epoch:(e + 1) * per_epoch])
        assert sorted(map(tuple, rows.tolist())) == key


def test_best_epoch_has_minimum_validation_loss():
    m = train(small_toy(), cfg("ABC-AE", max_epochs=40, patience=3))
    val = m.log.column("val_loss")
    assert m.log.records[m.log.best_epoch - 1].val_loss == min(val)
    # stopped by patience or ran to the cap
    assert len(val) == 40 or len(val) == m.log.best_epoch + 3


def test_early_stopped_params_are_the_best_epoch():
    ds = small_toy()
    m = train(ds, cfg("AE", max_epochs=30, patience=2))
    rerun = train(ds, cfg("AE", max_epochs=m.log.best_epoch, patience=1000))
    assert rerun.params.flat.tobytes() == m.params.flat.tobytes()


def test_ae_fits_toy_normals():
    # regression baseline: this configuration reaches ~0.010 mean error
    ds = gen_toy(2000, 0, 0, noise_std=0.1, seed=0)
    m = train(ds, cfg("AE", max_epochs=300))
    err = reconstruction_error(m.params, ds.x).mean()
    assert err < 0.05


def test_nonfinite_loss_aborts(monkeypatch):
    monkeypatch.setattr(training, "model_loss_and_grads",
                        lambda *a, **k: (float("nan"), None))
    with pytest.raises(NumericalError, match="epoch 1, batch 0"):
        train(small_toy(), cfg())


def test_empty_training_set_rejected():
    ds = gen_toy(0, 50, 0, seed=0)
    with pytest.raises(ConfigError):
        train(ds, cfg("AE"))


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(validation_fraction=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)


def _identity_ae():
    net = NetworkParams((2, 2), ("identity",), np.concatenate([np.eye(2).ravel(), np.zeros(2)]))
    return AutoencoderParams(net, net.copy())


def test_epoch_metrics_identity():
    assert evaluate_epoch_metrics(_identity_ae(), "ABC-AE", small_toy()) == (0.0, 0.0)


def test_epoch_metrics_absent_anomalies():
    ds = gen_toy(20, 0, 0, seed=0)
    normal, anomaly = evaluate_epoch_metrics(_identity_ae(), "AE", ds)
    assert normal == 0.0 and anomaly is None


def test_epoch_metrics_match_per_point_mean():
    m = train(small_toy(), cfg(max_epochs=2))
    ds = small_toy(seed=5)
    normal, anomaly = evaluate_epoch_metrics(m.params, "ABC-AE", ds)
    per_point = [reconstruction_error(m.params, p.features) for p in ds]
    assert normal == pytest.approx(np.mean([e for e, p in zip(per_point, ds) if p.role == Role.NORMAL]),
                                   rel=1e-12)
    assert anomaly == pytest.approx(np.mean([e for e, p in zip(per_point, ds) if p.y == 0]), rel=1e-12)


def test_epoch_metrics_reject_dnn():
    with pytest.raises(ConfigError):
        evaluate_epoch_metrics(_identity_ae(), "DNN", small_toy())


def test_log_csv_layout():
    m = train(gen_toy(100, 0, 0, seed=0), cfg("AE", max_epochs=2))
    lines = m.log.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,normal_recon,anomaly_recon"
    assert len(lines) == 3 and lines[1].startswith("1,") and lines[1].endswith(",")
