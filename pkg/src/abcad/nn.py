"""Dense feed-forward networks with hand-written backprop and Adam.

Parameters of a network live in one flat float64 vector; per-layer weight
matrices (``out x in``) and bias vectors are views into it. That keeps the
optimizer, gradient checks and serialization a matter of handling one array.

All randomness goes through ``numpy.random.Generator`` backed by PCG64
(``numpy.random.default_rng``), whose bit stream is platform independent.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError

ACTIVATIONS = ("tanh", "identity", "sigmoid")
FORMAT_NAME = "abcad-model"
FORMAT_VERSION = 1


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@functools.lru_cache(maxsize=None)
def _layout(sizes: tuple[int, ...], activations: tuple[str, ...]):
    """Validated (weight slice, bias slice, weight shape) per layer."""
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ConfigError(f"layer sizes must be >= 2 positive integers, got {sizes}")
    if len(activations) != len(sizes) - 1:
        raise ConfigError(
            f"{len(sizes) - 1} layers need {len(sizes) - 1} activations, got {len(activations)}"
        )
    for a in activations:
        if a not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {a!r}")
    out = []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = slice(pos, pos + n_in * n_out)
        pos += n_in * n_out
        b = slice(pos, pos + n_out)
        pos += n_out
        out.append((w, b, (n_out, n_in)))
    return tuple(out), pos


def n_params(sizes: Sequence[int]) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Weights and biases of a dense network, backed by ``flat``.

    The same class doubles as the gradient container: a gradient is a
    ``NetworkParams`` whose ``flat`` holds d(loss)/d(parameter).
    """

    sizes: tuple[int, ...]
    activations: tuple[str, ...]
    flat: np.ndarray
    weights: list[np.ndarray] = field(init=False, repr=False)
    biases: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        acts = tuple(self.activations)
        layout, total = _layout(sizes, acts)
        flat = np.asarray(self.flat, dtype=np.float64)
        if flat.shape != (total,):
            raise ShapeError(f"flat parameter vector has shape {flat.shape}, expected ({total},)")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "weights", [flat[w].reshape(shape) for w, _, shape in layout])
        object.__setattr__(self, "biases", [flat[b] for _, b, _ in layout])

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def with_flat(self, flat: np.ndarray) -> "NetworkParams":
        return NetworkParams(self.sizes, self.activations, flat)

    def zeros_like(self) -> "NetworkParams":
        return self.with_flat(np.zeros_like(self.flat))

    def copy(self) -> "NetworkParams":
        return self.with_flat(self.flat.copy())

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        sizes = tuple(d["sizes"])
        parts = []
        for w, b in zip(d["weights"], d["biases"]):
            parts.append(np.asarray(w, dtype=np.float64))
            parts.append(np.asarray(b, dtype=np.float64))
        flat = np.concatenate(parts) if parts else np.zeros(0)
        return cls(sizes, tuple(d["activations"]), flat)


@dataclass(frozen=True, eq=False)
class AutoencoderParams:
    """Encoder and decoder sharing one flat buffer (encoder first)."""

    encoder: NetworkParams
    decoder: NetworkParams
    flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        enc, dec = self.encoder, self.decoder
        if enc.flat.base is not None and enc.flat.base is dec.flat.base \
                and enc.flat.base.size == enc.flat.size + dec.flat.size:
            object.__setattr__(self, "flat", enc.flat.base)
            return
        if enc.out_dim != dec.in_dim:
            raise ShapeError(f"encoder emits {enc.out_dim} latents, decoder expects {dec.in_dim}")
        if dec.out_dim != enc.in_dim:
            raise ShapeError(f"decoder emits {dec.out_dim} values, data dimension is {enc.in_dim}")
        flat = np.concatenate([enc.flat, dec.flat])
        n = enc.flat.size
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "encoder", enc.with_flat(flat[:n]))
        object.__setattr__(self, "decoder", dec.with_flat(flat[n:]))

    @property
    def in_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim

    def with_flat(self, flat: np.ndarray) -> "AutoencoderParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.flat.shape:
            raise ShapeError(f"flat parameter vector has shape {flat.shape}, expected {self.flat.shape}")
        n = self.encoder.flat.size
        if flat.base is not None:
            flat = flat.copy()
        return AutoencoderParams(self.encoder.with_flat(flat[:n]), self.decoder.with_flat(flat[n:]))

    def zeros_like(self) -> "AutoencoderParams":
        return self.with_flat(np.zeros_like(self.flat))

    def copy(self) -> "AutoencoderParams":
        return self.with_flat(self.flat.copy())

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(), "decoder": self.decoder.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderParams":
        return cls(NetworkParams.from_dict(d["encoder"]), NetworkParams.from_dict(d["decoder"]))


Params = NetworkParams | AutoencoderParams


def init_network(layer_sizes: Sequence[int], activations: Sequence[str], seed=0) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ConfigError(f"layer sizes must be >= 2 positive integers, got {sizes}")
    if len(activations) != len(sizes) - 1:
        raise ConfigError(f"{len(sizes) - 1} layers need {len(sizes) - 1} activations, "
                          f"got {len(activations)}")
    rng = as_rng(seed)
    parts = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-limit, limit, size=n_in * n_out))
        parts.append(np.zeros(n_out))
    return NetworkParams(sizes, tuple(activations), np.concatenate(parts))


def init_autoencoder(in_dim: int, hidden: Sequence[int], latent: int, seed=0,
                     activation: str = "tanh") -> AutoencoderParams:
    """Mirror-image autoencoder: in -> hidden... -> latent -> reversed(hidden) -> in.

    Hidden layers use ``activation``; the latent code and the reconstruction
    are linear.
    """
    rng = as_rng(seed)
    hidden = list(hidden)
    enc_sizes = [in_dim, *hidden, latent]
    dec_sizes = [latent, *reversed(hidden), in_dim]
    acts = [activation] * len(hidden) + ["identity"]
    enc = init_network(enc_sizes, acts, rng)
    dec = init_network(dec_sizes, acts, rng)
    return AutoencoderParams(enc, dec)


class ForwardTrace(NamedTuple):
    inputs: list[np.ndarray]       # input to each layer
    pre: list[np.ndarray]          # affine outputs
    post: list[np.ndarray]         # activations
    output: np.ndarray


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    # sigmoid, stable for large |z|
    return np.exp(-np.logaddexp(0.0, -z))


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray | None:
    if name == "tanh":
        return 1.0 - a * a
    if name == "identity":
        return None
    return a * (1.0 - a)


def forward(params: NetworkParams, x: np.ndarray) -> ForwardTrace:
    """Evaluate the network on one vector ``(in,)`` or a batch ``(n, in)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (params.in_dim,) or x.ndim > 2:
        raise ShapeError(f"network expects inputs of dimension {params.in_dim}, got shape {x.shape}")
    inputs, pre, post = [], [], []
    a = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        inputs.append(a)
        z = a @ w.T + b
        a = _activate(act, z)
        pre.append(z)
        post.append(a)
    return ForwardTrace(inputs, pre, post, a)


def predict(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    return forward(params, x).output


def backward(params: NetworkParams, trace: ForwardTrace, output_grad: np.ndarray,
             out: NetworkParams | None = None) -> tuple[NetworkParams, np.ndarray]:
    """Reverse-mode pass. Returns (parameter gradients, input gradient).

    For batched traces the parameter gradients are summed over rows; scale
    ``output_grad`` beforehand to get a mean. Gradients are written into
    ``out`` when given.
    """
    if len(trace.pre) != params.n_layers:
        raise ShapeError(f"trace has {len(trace.pre)} layers, network has {params.n_layers}")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise ShapeError(f"output gradient shape {g.shape} != output shape {trace.output.shape}")
    grads = params.zeros_like() if out is None else out
    for i in range(params.n_layers - 1, -1, -1):
        if trace.pre[i].shape[-1] != params.sizes[i + 1]:
            raise ShapeError(f"trace layer {i} does not match network")
        d = _activation_grad(params.activations[i], trace.pre[i], trace.post[i])
        dz = g if d is None else g * d
        a_in = trace.inputs[i]
        if dz.ndim == 1:
            grads.weights[i][...] = np.outer(dz, a_in)
            grads.biases[i][...] = dz
        else:
            grads.weights[i][...] = dz.T @ a_in
            grads.biases[i][...] = dz.sum(axis=0)
        g = dz @ params.weights[i]
    return grads, g


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def create(cls, params: Params, lr: float = 1e-3, beta1: float = 0.9,
               beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        if lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        n = params.flat.size
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, epsilon)


def _offending_layer(params: Params, bad: np.ndarray) -> str:
    idx = int(np.flatnonzero(bad)[0])
    nets = ([("encoder", params.encoder), ("decoder", params.decoder)]
            if isinstance(params, AutoencoderParams) else [("network", params)])
    offset = 0
    for name, net in nets:
        for layer, (w, b, _) in enumerate(_layout(net.sizes, net.activations)[0]):
            if offset + w.start <= idx < offset + b.stop:
                part = "weight" if idx < offset + w.stop else "bias"
                return f"{name} layer {layer} {part}"
        offset += net.flat.size
    return f"flat index {idx}"


def adam_step(state: AdamState, params: Params, grads: Params) -> tuple[Params, AdamState]:
    g = grads.flat
    if g.shape != params.flat.shape or state.m.shape != params.flat.shape:
        raise ShapeError("Adam state, parameters and gradients disagree in size")
    bad = ~np.isfinite(g)
    if bad.any():
        raise NumericalError(f"non-finite gradient in {_offending_layer(params, bad)}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    flat = params.flat - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.epsilon)
    return params.with_flat(flat), new_state


class GradCheckReport(NamedTuple):
    max_rel_error: float
    passed: bool
    n_checked: int
    worst_index: int


def gradient_check(loss_fn: Callable[[Params], tuple[float, Params]], params: Params,
                   tolerance: float = 1e-4, h: float = 1e-5, n_samples: int | None = None,
                   seed=0, floor: float = 1e-7, scale_floor: float = 0.0,
                   analytic: Params | None = None) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    ``loss_fn(params)`` returns ``(loss, grads)``. Relative error per component is
    ``|a - n| / max(|a|, |n|, floor, scale_floor * max|a|)``. The floors keep
    components far below the difference quotient's own rounding error (about
    eps * |loss| / h) from dominating; ``scale_floor`` ties that cut-off to the
    size of the gradient. ``analytic`` overrides the gradient returned by
    ``loss_fn`` at ``params`` (useful for negative controls).
    """
    base = params.flat
    if analytic is None:
        _, analytic = loss_fn(params)
    a = analytic.flat
    floor = max(floor, scale_floor * float(np.abs(a).max(initial=0.0)))
    n = base.size
    if n_samples is None or n_samples >= n:
        idx = np.arange(n)
    else:
        idx = np.sort(as_rng(seed).choice(n, size=n_samples, replace=False))
    worst, worst_i = 0.0, -1
    for i in idx:
        plus = base.copy()
        plus[i] += h
        minus = base.copy()
        minus[i] -= h
        lp, _ = loss_fn(params.with_flat(plus))
        lm, _ = loss_fn(params.with_flat(minus))
        num = (lp - lm) / (2.0 * h)
        err = abs(a[i] - num) / max(abs(a[i]), abs(num), floor)
        if not np.isfinite(err):
            err = np.inf
        if err > worst or worst_i < 0:
            worst, worst_i = float(err), int(i)
    return GradCheckReport(worst, worst <= tolerance, len(idx), worst_i)


def params_to_json(params: Params, **meta) -> str:
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION, **meta}
    if isinstance(params, AutoencoderParams):
        doc["architecture"] = "autoencoder"
        doc["networks"] = params.to_dict()
    else:
        doc["architecture"] = "network"
        doc["networks"] = {"network": params.to_dict()}
    return json.dumps(doc, indent=1)


def params_from_json(text: str) -> tuple[Params, dict]:
    """Inverse of :func:`params_to_json`; returns (params, remaining metadata)."""
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise ConfigError(f"not a {FORMAT_NAME} document")
    if doc.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format version {doc.get('version')}")
    nets = doc.pop("networks")
    arch = doc.pop("architecture")
    if arch == "autoencoder":
        params: Params = AutoencoderParams.from_dict(nets)
    else:
        params = NetworkParams.from_dict(nets["network"])
    meta = {k: v for k, v in doc.items() if k not in ("format", "version")}
    return params, meta
