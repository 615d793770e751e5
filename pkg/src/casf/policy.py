"""Streaming flow policies: stabilizing conditional flows and their training.

A demonstration xi(t) on unit flow time induces the analytic target field
v(a, t) = xi_dot(t) - k (a - xi(t)), whose marginals are Gaussian tubes of
std sigma0 * exp(-k t) around the demonstration. The policy network regresses
these targets over sampled (t, a) pairs and is executed by integrating the
learned field from a(0) ~ N(a_prev, sigma0^2 I).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff
from .autodiff import MlpSpec
from .errors import (InvalidInputError, IntegrationDivergenceError,
                     TrainingDivergenceError)


@dataclass(frozen=True)
class Demonstration:
    times: np.ndarray      # strictly increasing, times[0]=0, times[-1]=1
    waypoints: np.ndarray  # (T, n)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        w = np.asarray(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[0] != t.shape[0] or w.shape[0] < 2:
            raise InvalidInputError("need >= 2 waypoints with matching times")
        if not (np.all(np.diff(t) > 0) and t[0] == 0.0 and t[-1] == 1.0):
            raise InvalidInputError("times must increase strictly from 0 to 1")

    @property
    def dim(self):
        return self.waypoints.shape[1]

    @classmethod
    def from_waypoints(cls, waypoints, times=None):
        """Builds a demo, normalizing times (uniform spacing if omitted)."""
        w = np.asarray(waypoints, dtype=float)
        if times is None:
            t = np.linspace(0.0, 1.0, w.shape[0])
        else:
            t = np.asarray(times, dtype=float)
            span = t[-1] - t[0]
            if span <= 0:
                raise InvalidInputError("times must span a positive interval")
            t = (t - t[0]) / span
            t[0], t[-1] = 0.0, 1.0
        return cls(t, w)


@dataclass(frozen=True)
class PolicyConfig:
    k_gain: float = 5.0
    sigma0: float = 0.02
    epochs: int = 2000
    batch_size: int = 256
    seed: int = 0
    hidden_dims: tuple = autodiff.DEFAULT_HIDDEN
    lr: float = 1e-3

    def __post_init__(self):
        if self.k_gain <= 0 or self.sigma0 < 0:
            raise InvalidInputError("k_gain must be > 0 and sigma0 >= 0")


def interpolate_demo(demo, t):
    """Piecewise-linear position and segment-slope velocity at flow time t."""
    if not (0.0 <= t <= 1.0):
        raise InvalidInputError(f"flow time {t} outside [0, 1]")
    times, pts = demo.times, demo.waypoints
    seg = int(np.searchsorted(times, t, side="right")) - 1
    seg = min(max(seg, 0), len(times) - 2)
    dt = times[seg + 1] - times[seg]
    slope = (pts[seg + 1] - pts[seg]) / dt
    return pts[seg] + (t - times[seg]) * slope, slope


def conditional_target(demo, t, a, k):
    """Stabilizing conditional flow: xi_dot(t) - k (a - xi(t))."""
    xi, xi_dot = interpolate_demo(demo, t)
    return xi_dot - k * (np.asarray(a, dtype=float) - xi)


def tube_std(sigma0, k, t):
    """Marginal tube std induced by the stabilizing flow: sigma0 e^{-k t}."""
    return sigma0 * np.exp(-k * np.asarray(t, dtype=float))


def sample_tube(demo, t, sigma0, k, rng):
    """Draws xi(t) + eps with eps ~ N(0, (sigma0 e^{-k t})^2 I)."""
    xi, _ = interpolate_demo(demo, t)
    return xi + tube_std(sigma0, k, t) * rng.standard_normal(demo.dim)


@dataclass(frozen=True)
class StreamingPolicy:
    """Trained velocity-field network over inputs (a, t, h)."""

    net: autodiff.MlpParams
    config: PolicyConfig
    action_dim: int
    final_loss: float | None = None

    def velocity(self, a, t, h):
        x = np.concatenate([np.asarray(a, dtype=float), [t],
                            np.asarray(h, dtype=float)])
        return autodiff.forward(self.net, x)

    def field(self, h):
        """Velocity-field callable (a, t) -> v for a fixed history state."""
        h = np.asarray(h, dtype=float)
        return lambda a, t: self.velocity(a, t, h)


def train_policy(demos, cfg):
    """Conditional flow matching over tube-sampled states of all demos.

    Each training step draws a fresh batch of (demo, t, a) triples — t uniform
    on [0, 1], a from the demo's Gaussian tube — and regresses the network
    onto the analytic conditional targets with one Adam update. The history
    input h is the demo's start waypoint.
    """
    if len(demos) == 0:
        raise InvalidInputError("need at least one demonstration")
    dim = demos[0].dim
    if any(d.dim != dim for d in demos):
        raise InvalidInputError("demonstrations disagree in dimension")

    rng = np.random.default_rng(cfg.seed)
    spec = MlpSpec(2 * dim + 1, cfg.hidden_dims, dim)
    params = autodiff.init_params(spec, rng)
    state = autodiff.init_adam(params, lr=cfg.lr)

    starts = [d.waypoints[0] for d in demos]
    loss = None
    for _ in range(cfg.epochs):
        which = rng.integers(len(demos), size=cfg.batch_size)
        ts = rng.uniform(0.0, 1.0, size=cfg.batch_size)
        x = np.empty((cfg.batch_size, 2 * dim + 1))
        target = np.empty((cfg.batch_size, dim))
        for row, (di, t) in enumerate(zip(which, ts)):
            demo = demos[di]
            a = sample_tube(demo, t, cfg.sigma0, cfg.k_gain, rng)
            x[row, :dim] = a
            x[row, dim] = t
            x[row, dim + 1:] = starts[di]
            target[row] = conditional_target(demo, t, a, cfg.k_gain)
        pred = autodiff.forward(params, x)
        residual = pred - target
        loss = float(np.mean(np.sum(residual ** 2, axis=1)))
        if not np.isfinite(loss):
            raise TrainingDivergenceError("policy training loss became non-finite")
        grads = autodiff.backward_params(params, x, 2.0 / cfg.batch_size * residual)
        params, state = autodiff.adam_step(params, grads, state)

    return StreamingPolicy(params, cfg, dim, loss)


@dataclass(frozen=True)
class Rollout:
    times: np.ndarray   # (steps + 1,) uniform over [0, 1]
    states: np.ndarray  # (steps + 1, n)
    dt: float


def integrate_stream(fld, a_prev, sigma0, steps, method="euler", rng=None,
                     post_step=None):
    """Integrates da/dt = fld(a, t) over flow time [0, 1] with fixed steps.

    a(0) is drawn from N(a_prev, sigma0^2 I). `post_step` (used by the hard
    projection baseline) may correct the state between steps.
    """
    if steps < 1:
        raise InvalidInputError("steps must be >= 1")
    if method not in ("euler", "rk4"):
        raise InvalidInputError(f"unknown integration method {method!r}")
    a_prev = np.asarray(a_prev, dtype=float)
    a = a_prev.copy()
    if sigma0 > 0:
        if rng is None:
            rng = np.random.default_rng()
        a = a + sigma0 * rng.standard_normal(a.shape[0])

    dt = 1.0 / steps
    times = np.linspace(0.0, 1.0, steps + 1)
    states = [a.copy()]
    for i in range(steps):
        t = times[i]
        if method == "euler":
            a = a + dt * np.asarray(fld(a, t), dtype=float)
        else:
            k1 = np.asarray(fld(a, t), dtype=float)
            k2 = np.asarray(fld(a + 0.5 * dt * k1, t + 0.5 * dt), dtype=float)
            k3 = np.asarray(fld(a + 0.5 * dt * k2, t + 0.5 * dt), dtype=float)
            k4 = np.asarray(fld(a + dt * k3, min(t + dt, 1.0)), dtype=float)
            a = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if post_step is not None:
            a = post_step(a)
        if not np.all(np.isfinite(a)):
            raise IntegrationDivergenceError(f"non-finite state at step {i + 1}")
        states.append(a.copy())
    return Rollout(times, np.asarray(states), dt)
