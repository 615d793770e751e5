"""Neural distance fields trained with an Eikonal-regularized regression.

The loss fits the network to unsigned ground-truth distances |s_i| and
penalizes deviation of the input-gradient norm from 1. The gradient norm is
estimated with a central finite-difference stencil so parameter gradients
only ever need first-order backprop (no gradient-of-gradient).

Trained fields are unsigned: interior sign is not recovered, so penetration
scoring stays with the analytic fields that generated the training data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff
from .autodiff import MlpSpec
from .errors import InvalidInputError, TrainingDivergenceError
from .geometry import DEGENERATE_GRAD_NORM, DistanceSample

_GRAD_FLOOR = 1e-12  # guards the eikonal term against a zero stencil gradient


@dataclass(frozen=True)
class SdfTrainSet:
    points: np.ndarray     # (N, n)
    distances: np.ndarray  # (N,) signed

    def __post_init__(self):
        if self.points.shape[0] != self.distances.shape[0] or self.points.shape[0] < 1:
            raise InvalidInputError("points and distances must have equal length >= 1")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.distances))):
            raise InvalidInputError("training set contains non-finite entries")


@dataclass(frozen=True)
class SdfTrainConfig:
    lam_mse: float = 1.0
    lam_eik: float = 0.1
    epochs: int = 500
    batch_size: int = 256
    fd_step: float = 1e-3
    seed: int = 0
    n_surface: int = 2000
    n_volume: int = 2000
    bounds: tuple = ((-2.0, -2.0), (2.0, 2.0))
    hidden_dims: tuple = autodiff.DEFAULT_HIDDEN
    lr: float = 1e-3

    def __post_init__(self):
        if self.lam_mse <= 0 or self.lam_eik < 0:
            raise InvalidInputError("lam_mse must be > 0 and lam_eik >= 0")
        if not (0.0 < self.fd_step <= 1e-2):
            raise InvalidInputError("fd_step must lie in (0, 1e-2]")


def sample_training_set(shape, n_surface, n_volume, bounds, seed):
    """Labeled points: uniform volume samples plus boundary-perturbed samples.

    Surface samples are uniform draws projected to the zero level set along
    the exact gradient, then offset along the local normal by a Gaussian of
    std 0.05 x bounds diagonal. Every point is labeled with the exact signed
    distance.
    """
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if not np.all(hi > lo):
        raise InvalidInputError("degenerate bounds")
    if n_surface + n_volume < 1:
        raise InvalidInputError("need at least one sample")
    dim = lo.shape[0]
    sigma = 0.05 * float(np.linalg.norm(hi - lo))
    rng = np.random.default_rng(seed)

    points = []
    for _ in range(n_volume):
        points.append(rng.uniform(lo, hi))
    drawn = 0
    while drawn < n_surface:
        p = rng.uniform(lo, hi)
        s = shape.evaluate(p)
        if not s.gradient_norm_ok:
            continue
        on_surface = p - s.value * s.gradient
        s2 = shape.evaluate(on_surface)
        if not s2.gradient_norm_ok:
            continue
        points.append(on_surface + rng.normal(0.0, sigma) * s2.gradient)
        drawn += 1

    points = np.asarray(points).reshape(n_volume + n_surface, dim)
    distances = np.array([shape.evaluate(p).value for p in points])
    return SdfTrainSet(points, distances)


def sdf_loss(params, points, distances, cfg):
    """Mean batch loss and its parameter gradients.

    loss_i = lam_mse * (phi(a_i) - |s_i|)^2 + lam_eik * (||g_fd(a_i)|| - 1)^2
    with g_fd the central finite-difference input gradient at step fd_step.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    s = np.abs(np.asarray(distances, dtype=float))
    if x.shape[0] == 0:
        raise InvalidInputError("empty batch")
    n_batch, dim = x.shape
    h = cfg.fd_step

    phi = autodiff.forward(params, x)[:, 0]
    residual = phi - s
    loss = cfg.lam_mse * float(np.mean(residual ** 2))

    grads = autodiff.backward_params(
        params, x, (2.0 * cfg.lam_mse / n_batch * residual)[:, None])
    grads_w = [w.copy() for w in grads.weights]
    grads_b = [b.copy() for b in grads.biases]

    if cfg.lam_eik > 0:
        plus = np.empty((dim, n_batch))
        minus = np.empty((dim, n_batch))
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            plus[j] = autodiff.forward(params, x + e)[:, 0]
            minus[j] = autodiff.forward(params, x - e)[:, 0]
        g_fd = (plus - minus).T / (2.0 * h)  # (n_batch, dim)
        norms = np.maximum(np.linalg.norm(g_fd, axis=1), _GRAD_FLOOR)
        loss += cfg.lam_eik * float(np.mean((norms - 1.0) ** 2))
        # d loss / d g_fd_j, then chain through the stencil's forward passes
        dgrad = (2.0 * cfg.lam_eik / n_batch) * ((norms - 1.0) / norms)[:, None] * g_fd
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            up = (dgrad[:, j] / (2.0 * h))[:, None]
            for gp in (autodiff.backward_params(params, x + e, up),
                       autodiff.backward_params(params, x - e, -up)):
                for acc, g in zip(grads_w, gp.weights):
                    acc += g
                for acc, g in zip(grads_b, gp.biases):
                    acc += g

    if not np.isfinite(loss):
        raise TrainingDivergenceError("non-finite distance-field loss")
    return loss, autodiff.MlpParams(params.spec, tuple(grads_w), tuple(grads_b))


@dataclass(frozen=True)
class LearnedField:
    """DistanceField adapter around a trained (or untrained) network."""

    params: autodiff.MlpParams
    config: SdfTrainConfig
    shape_desc: dict | None = None
    final_loss: float | None = None

    #: learned fields regress |s| and cannot report interior sign
    signed = False

    @property
    def dim(self):
        return self.params.spec.input_dim

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise InvalidInputError(f"expected a {self.dim}-dimensional point")
        value = float(autodiff.forward(self.params, p)[0])
        raw = autodiff.input_gradient(self.params, p)[0]
        norm = float(np.linalg.norm(raw))
        if norm < DEGENERATE_GRAD_NORM:
            return DistanceSample(value, np.zeros(self.dim), False)
        return DistanceSample(value, raw / norm, True)


def train_sdf(shape, cfg):
    """Train a distance field for `shape`; returns the LearnedField wrapper."""
    data = sample_training_set(shape, cfg.n_surface, cfg.n_volume, cfg.bounds, cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    spec = MlpSpec(data.points.shape[1], cfg.hidden_dims, 1)
    params = autodiff.init_params(spec, rng)
    state = autodiff.init_adam(params, lr=cfg.lr)

    n = data.points.shape[0]
    loss = None
    last_finite = None
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = sdf_loss(params, data.points[idx], data.distances[idx], cfg)
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(
                    f"distance-field training diverged (last finite loss {last_finite})"
                ) from exc
            last_finite = loss
            params, state = autodiff.adam_step(params, grads, state)

    return LearnedField(params, cfg, shape.to_dict(), loss)


def learned_field_eval(fld, p):
    return fld.evaluate(p)


def save_learned_field(fld, path):
    import json

    payload = autodiff.params_to_dict(fld.params)
    payload["provenance"] = {
        "shape": fld.shape_desc,
        "config": {
            "lam_mse": fld.config.lam_mse, "lam_eik": fld.config.lam_eik,
            "epochs": fld.config.epochs, "batch_size": fld.config.batch_size,
            "fd_step": fld.config.fd_step, "seed": fld.config.seed,
            "n_surface": fld.config.n_surface, "n_volume": fld.config.n_volume,
            "bounds": [list(b) for b in fld.config.bounds],
            "hidden_dims": list(fld.config.hidden_dims), "lr": fld.config.lr,
        },
        "final_loss": fld.final_loss,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_learned_field(path):
    import json

    with open(path) as fh:
        payload = json.load(fh)
    params = autodiff.params_from_dict(payload)
    prov = payload.get("provenance", {})
    cfg_d = prov.get("config", {})
    cfg = SdfTrainConfig(
        lam_mse=cfg_d.get("lam_mse", 1.0), lam_eik=cfg_d.get("lam_eik", 0.1),
        epochs=cfg_d.get("epochs", 500), batch_size=cfg_d.get("batch_size", 256),
        fd_step=cfg_d.get("fd_step", 1e-3), seed=cfg_d.get("seed", 0),
        n_surface=cfg_d.get("n_surface", 2000), n_volume=cfg_d.get("n_volume", 2000),
        bounds=tuple(tuple(b) for b in cfg_d.get("bounds", ((-2.0, -2.0), (2.0, 2.0)))),
        hidden_dims=tuple(cfg_d.get("hidden_dims", autodiff.DEFAULT_HIDDEN)),
        lr=cfg_d.get("lr", 1e-3))
    return LearnedField(params, cfg, prov.get("shape"), prov.get("final_loss"))
