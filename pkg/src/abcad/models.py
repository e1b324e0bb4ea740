"""Reconstruction-based objectives (AE, DAE, LRC, ABC) and the DNN baseline.

Labels follow the convention y=1 normal, y=0 anomaly. Every score returned
here is oriented so that larger means more anomalous.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import (AutoencoderParams, NetworkParams, Params, as_rng, backward, forward,
                 init_autoencoder, init_network)

DISTANCES = ("squared-l2", "l2")


class ModelKind(str, Enum):
    AE = "AE"
    DAE = "DAE"
    LRC = "LRC"
    ABC_AE = "ABC-AE"
    ABC_DAE = "ABC-DAE"
    DNN = "DNN"

    @property
    def supervised(self) -> bool:
        return self not in (ModelKind.AE, ModelKind.DAE)

    @property
    def noisy(self) -> bool:
        return self in (ModelKind.DAE, ModelKind.ABC_DAE)

    @property
    def reconstruction_based(self) -> bool:
        return self is not ModelKind.DNN

    @property
    def is_abc(self) -> bool:
        return self in (ModelKind.ABC_AE, ModelKind.ABC_DAE)

    @property
    def calibrated(self) -> bool:
        """Scores are probabilities with a natural 0.5 decision threshold."""
        return self.is_abc or self is ModelKind.DNN


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind = ModelKind.ABC_AE
    hidden: tuple[int, ...] = (10, 10)
    latent: int = 1
    distance: str = "squared-l2"
    noise_std: float = 0.2
    clamp: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.distance not in DISTANCES:
            raise ConfigError(f"distance must be one of {DISTANCES}, got {self.distance!r}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if not self.clamp > 0:
            raise ConfigError(f"clamp must be > 0, got {self.clamp}")
        if self.latent < 1 or not self.hidden or min(self.hidden) < 1:
            raise ConfigError("network widths must be positive")


def build_params(config: ModelConfig, in_dim: int, seed=0) -> Params:
    """Fresh parameters for ``config.kind``.

    The DNN reuses the autoencoder's hidden widths: in -> hidden... -> 1 logit.
    """
    if config.kind is ModelKind.DNN:
        sizes = [in_dim, *config.hidden, 1]
        acts = ["tanh"] * len(config.hidden) + ["identity"]
        return init_network(sizes, acts, seed)
    return init_autoencoder(in_dim, config.hidden, config.latent, seed)


def check_params(kind: ModelKind, params: Params) -> None:
    if ModelKind(kind).reconstruction_based:
        if not isinstance(params, AutoencoderParams):
            raise ConfigError(f"{ModelKind(kind).value} needs autoencoder parameters")
    elif not isinstance(params, NetworkParams) or params.out_dim != 1:
        raise ConfigError("DNN needs a network with a single output logit")


def _as_batch(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != dim:
        raise ShapeError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x2, single


def reconstruct(ae: AutoencoderParams, x) -> np.ndarray:
    return forward(ae.decoder, forward(ae.encoder, x).output).output


def _distance(residual: np.ndarray, distance: str) -> np.ndarray:
    sq = np.einsum("ij,ij->i", residual, residual)
    if distance == "squared-l2":
        return sq
    if distance == "l2":
        return np.sqrt(sq)
    raise ConfigError(f"unknown distance {distance!r}")


def _unbatch(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


def reconstruction_error(ae: AutoencoderParams, x, distance: str = "squared-l2"):
    """||x - D(E(x))|| per point; a float for one point, an array for a batch."""
    xb, single = _as_batch(x, ae.in_dim)
    return _unbatch(_distance(xb - reconstruct(ae, xb), distance), single)


def dae_reconstruction_error(ae: AutoencoderParams, x, noise_std: float, rng=None,
                             distance: str = "squared-l2"):
    """||x - D(E(x + eps))|| with eps ~ N(0, noise_std^2 I) drawn from ``rng``."""
    xb, single = _as_batch(x, ae.in_dim)
    rng = as_rng(rng)
    noisy = xb + noise_std * rng.standard_normal(xb.shape)
    return _unbatch(_distance(xb - reconstruct(ae, noisy), distance), single)


def eta_from_error(err):
    """Regression function p(y=1|x) = exp(-L)."""
    return np.exp(-np.asarray(err, dtype=np.float64))


def abc_score_from_error(err):
    """p(y=0|x) = 1 - exp(-L), without cancellation for small L."""
    return -np.expm1(-np.asarray(err, dtype=np.float64))


_LN2 = float(np.log(2.0))


def abc_loss_from_error(err, y, clamp: float = 1e-10):
    """Negative log-likelihood of the Bernoulli model with eta = exp(-L).

    y=1 gives L itself; y=0 gives -log(1 - exp(-max(L, clamp))).
    """
    err = np.asarray(err, dtype=np.float64)
    y = _check_labels(y)
    L = np.maximum(err, clamp)
    # log(1 - e^-L): expm1 form for small L, log1p form for large L (stays ~e^-L, not 0)
    with np.errstate(over="ignore", divide="ignore"):
        anomaly_term = np.where(L > _LN2, -np.log1p(-np.exp(-L)), -np.log(-np.expm1(-L)))
    out = np.where(y == 1, err, anomaly_term)
    return float(out) if out.ndim == 0 else out


def _abc_error_grad(err: np.ndarray, y: np.ndarray, clamp: float) -> np.ndarray:
    # d/dL of -log(1 - e^-L) = -1/(e^L - 1); zero below the clamp
    with np.errstate(over="ignore", divide="ignore"):
        anomaly = np.where(err > clamp, -1.0 / np.expm1(np.maximum(err, clamp)), 0.0)
    return np.where(y == 1, 1.0, anomaly)


def lrc_loss_from_error(err, y):
    err = np.asarray(err, dtype=np.float64)
    y = _check_labels(y)
    out = np.where(y == 1, err, -err)
    return float(out) if out.ndim == 0 else out


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 (anomaly) or 1 (normal)")
    return y


def eta(ae: AutoencoderParams, x, distance: str = "squared-l2"):
    return eta_from_error(reconstruction_error(ae, x, distance))


def abc_anomaly_score(ae: AutoencoderParams, x, distance: str = "squared-l2"):
    return abc_score_from_error(reconstruction_error(ae, x, distance))


def abc_loss(ae: AutoencoderParams, x, y, distance: str = "squared-l2", clamp: float = 1e-10):
    return abc_loss_from_error(reconstruction_error(ae, x, distance), y, clamp)


def lrc_loss(ae: AutoencoderParams, x, y, distance: str = "squared-l2"):
    return lrc_loss_from_error(reconstruction_error(ae, x, distance), y)


def dnn_logits(net: NetworkParams, x) -> np.ndarray:
    xb, single = _as_batch(x, net.in_dim)
    return _unbatch(forward(net, xb).output[:, 0], single)


def dnn_loss_from_logit(logit, y):
    """Sigmoid cross-entropy with target 1 = normal."""
    y = _check_labels(y)
    sign = np.where(y == 1, 1.0, -1.0)
    out = np.logaddexp(0.0, -sign * np.asarray(logit, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def dnn_score_from_logit(logit):
    """1 - sigmoid(logit), evaluated as sigmoid(-logit) to keep tail precision."""
    logit = np.asarray(logit, dtype=np.float64)
    out = np.exp(-np.logaddexp(0.0, logit))
    return float(out) if out.ndim == 0 else out


def dnn_loss(net: NetworkParams, x, y):
    return dnn_loss_from_logit(dnn_logits(net, x), y)


def dnn_score(net: NetworkParams, x):
    return dnn_score_from_logit(dnn_logits(net, x))


def anomaly_scores(kind: ModelKind, params: Params, x, distance: str = "squared-l2"):
    """Model-appropriate anomaly score (clean inputs, higher = more anomalous)."""
    kind = ModelKind(kind)
    check_params(kind, params)
    if kind is ModelKind.DNN:
        return dnn_score(params, x)
    err = reconstruction_error(params, x, distance)
    return abc_score_from_error(err) if kind.is_abc else err


def per_point_loss(kind: ModelKind, params: Params, x, y, config: ModelConfig,
                   noise: np.ndarray | None = None) -> np.ndarray:
    """Per-point objective values; ``noise`` is added to the encoder input if given."""
    loss, _ = _loss_and_grads(ModelKind(kind), params, x, y, config, noise, want_grads=False)
    return loss


def model_loss_and_grads(kind: ModelKind, params: Params, x, y, config: ModelConfig,
                         rng=None, noise: np.ndarray | None = None) -> tuple[float, Params]:
    """Mean objective over a batch and its gradient w.r.t. all parameters.

    For DAE kinds the encoder input is corrupted with ``noise`` if provided,
    otherwise with fresh Gaussian noise of std ``config.noise_std`` from ``rng``.
    """
    kind = ModelKind(kind)
    xb = np.asarray(x, dtype=np.float64)
    if xb.ndim == 1:
        xb = xb[None, :]
    if len(xb) == 0:
        raise ConfigError("empty batch")
    if kind.noisy and noise is None:
        if rng is None:
            raise ConfigError(f"{kind.value} needs an rng or explicit noise")
        noise = config.noise_std * as_rng(rng).standard_normal(xb.shape)
    losses, grads = _loss_and_grads(kind, params, xb, y, config, noise, want_grads=True)
    return float(np.sum(losses) / len(losses)), grads


def _loss_and_grads(kind, params, x, y, config, noise, want_grads):
    check_params(kind, params)
    y = _check_labels(np.atleast_1d(y))
    if kind is ModelKind.DNN:
        xb, _ = _as_batch(x, params.in_dim)
        if len(y) != len(xb):
            raise ShapeError(f"{len(xb)} points but {len(y)} labels")
        trace = forward(params, xb)
        logits = trace.output[:, 0]
        losses = dnn_loss_from_logit(logits, y)
        losses = np.atleast_1d(losses)
        if not want_grads:
            return losses, None
        # d/dlogit of softplus(-s*logit) = sigmoid(logit) - y
        p = np.exp(-np.logaddexp(0.0, -logits))
        g = ((p - y) / len(xb))[:, None]
        grads, _ = backward(params, trace, g)
        return losses, grads

    ae: AutoencoderParams = params
    xb, _ = _as_batch(x, ae.in_dim)
    if len(y) != len(xb):
        raise ShapeError(f"{len(xb)} points but {len(y)} labels")
    enc_in = xb if noise is None else xb + noise
    tr_e = forward(ae.encoder, enc_in)
    tr_d = forward(ae.decoder, tr_e.output)
    resid = tr_d.output - xb
    err = _distance(resid, config.distance)

    if kind in (ModelKind.AE, ModelKind.DAE):
        losses = err
        coef = np.ones_like(err)
    elif kind is ModelKind.LRC:
        losses = np.where(y == 1, err, -err)
        coef = np.where(y == 1, 1.0, -1.0)
    else:
        losses = np.atleast_1d(abc_loss_from_error(err, y, config.clamp))
        coef = _abc_error_grad(err, y, config.clamp)
    if not want_grads:
        return losses, None

    if config.distance == "squared-l2":
        d_err = 2.0 * resid
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            d_err = np.where(err[:, None] > 0, resid / err[:, None], 0.0)
    g_out = d_err * (coef / len(xb))[:, None]
    grads = ae.zeros_like()
    _, g_z = backward(ae.decoder, tr_d, g_out, out=grads.decoder)
    backward(ae.encoder, tr_e, g_z, out=grads.encoder)
    return losses, grads

