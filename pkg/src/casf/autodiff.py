"""Small tanh MLP with hand-rolled reverse-mode gradients and Adam.

This is the shared learner for the velocity-field policy and the learned
distance fields. Hidden layers use tanh, the output layer is linear, so the
input Jacobian has a closed form and parameter gradients need a single
backward sweep. Inputs may be a single vector or a (batch, dim) matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, TrainingDivergenceError

DEFAULT_HIDDEN = (64, 64, 64)


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple
    output_dim: int

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise InvalidInputError("input_dim and output_dim must be >= 1")
        if len(self.hidden_dims) < 1 or any(h < 1 for h in self.hidden_dims):
            raise InvalidInputError("need at least one hidden layer of width >= 1")

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)


@dataclass(frozen=True)
class MlpParams:
    spec: MlpSpec
    weights: tuple  # W_l with shape (out_l, in_l)
    biases: tuple   # b_l with shape (out_l,)


def init_params(spec, rng):
    """Glorot-uniform weights, zero biases."""
    dims = spec.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(spec, tuple(weights), tuple(biases))


def zeros_like_params(params):
    return MlpParams(params.spec,
                     tuple(np.zeros_like(w) for w in params.weights),
                     tuple(np.zeros_like(b) for b in params.biases))


def _as_batch(x, input_dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise InvalidInputError(f"expected input of width {input_dim}, got shape {x.shape}")
    return x, single


def _forward_cached(params, x):
    """Returns (output, activations) with activations[l] the input to layer l."""
    acts = [x]
    h = x
    n_layers = len(params.weights)
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if l < n_layers - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def forward(params, x):
    """Deterministic forward pass; accepts a vector or a (batch, dim) matrix."""
    xb, single = _as_batch(x, params.spec.input_dim)
    out, _ = _forward_cached(params, xb)
    return out[0] if single else out


def backward_params(params, x, upstream):
    """Gradient of upstream . forward(x) w.r.t. every parameter.

    For batched inputs the gradients are summed over rows, so per-sample loss
    scaling belongs in `upstream`.
    """
    xb, single = _as_batch(x, params.spec.input_dim)
    ub, u_single = _as_batch(upstream, params.spec.output_dim)
    if single != u_single or xb.shape[0] != ub.shape[0]:
        raise InvalidInputError("input and upstream batch shapes disagree")
    _, acts = _forward_cached(params, xb)
    n_layers = len(params.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    delta = ub
    for l in range(n_layers - 1, -1, -1):
        grad_w[l] = delta.T @ acts[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * (1.0 - acts[l] ** 2)
    return MlpParams(params.spec, tuple(grad_w), tuple(grad_b))


def input_gradient(params, x):
    """Exact (output_dim, input_dim) Jacobian of the network at `x`."""
    xb, single = _as_batch(x, params.spec.input_dim)
    if not single:
        raise InvalidInputError("input_gradient expects a single input vector")
    _, acts = _forward_cached(params, xb)
    n_layers = len(params.weights)
    jac = params.weights[0].copy()
    for l in range(1, n_layers):
        jac = params.weights[l] @ ((1.0 - acts[l][0] ** 2)[:, None] * jac)
    return jac


@dataclass(frozen=True)
class OptimizerState:
    m: MlpParams
    v: MlpParams
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    return OptimizerState(zeros_like_params(params), zeros_like_params(params),
                          0, lr, beta1, beta2, eps)


def adam_step(params, grads, state):
    """One Adam update with bias correction; returns (new_params, new_state)."""
    for g in (*grads.weights, *grads.biases):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError("non-finite gradient entries in adam_step")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    scale = state.lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)

    def upd(p, g, m, v):
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * g * g
        p2 = p - scale * m2 / (np.sqrt(v2) + state.eps)
        return p2, m2, v2

    new_w, new_b, m_w, m_b, v_w, v_b = [], [], [], [], [], []
    for p, g, m, v in zip(params.weights, grads.weights, state.m.weights, state.v.weights):
        p2, m2, v2 = upd(p, g, m, v)
        new_w.append(p2), m_w.append(m2), v_w.append(v2)
    for p, g, m, v in zip(params.biases, grads.biases, state.m.biases, state.v.biases):
        p2, m2, v2 = upd(p, g, m, v)
        new_b.append(p2), m_b.append(m2), v_b.append(v2)

    new_params = MlpParams(params.spec, tuple(new_w), tuple(new_b))
    new_state = replace(state,
                        m=MlpParams(params.spec, tuple(m_w), tuple(m_b)),
                        v=MlpParams(params.spec, tuple(v_w), tuple(v_b)),
                        step=t)
    return new_params, new_state


def params_to_dict(params):
    return {
        "spec": {"input_dim": params.spec.input_dim,
                 "hidden_dims": list(params.spec.hidden_dims),
                 "output_dim": params.spec.output_dim},
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(payload):
    spec = MlpSpec(int(payload["spec"]["input_dim"]),
                   tuple(int(h) for h in payload["spec"]["hidden_dims"]),
                   int(payload["spec"]["output_dim"]))
    weights = tuple(np.asarray(w, dtype=float) for w in payload["weights"])
    biases = tuple(np.asarray(b, dtype=float) for b in payload["biases"])
    dims = spec.layer_dims
    for w, b, fan_in, fan_out in zip(weights, biases, dims[:-1], dims[1:]):
        if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
            raise InvalidInputError("stored parameter shapes disagree with spec")
    return MlpParams(spec, weights, biases)


def save_model(params, path):
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh)


def load_model(path):
    with open(path) as fh:
        return params_from_dict(json.load(fh))
