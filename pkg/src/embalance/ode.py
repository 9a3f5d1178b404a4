"""Initial value problems on uniform output grids.

Two integrators are provided: an adaptive Dormand-Prince 5(4) pair whose
steps are interpolated onto the output grid with cubic Hermite polynomials,
and a classical fixed-step RK4 used mainly for convergence checks.  Both
integrate forward or backward in time (``t1 < t0``).
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NonFiniteState, StepLimitExceeded
from .io import write_csv

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "impulse_response",
    "mean_value",
]

_EPS = np.finfo(float).eps

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45-adaptive"
    rtol: float = 1e-8
    atol: float = 1e-10
    step: float = 1e-3
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.method not in ("rk45-adaptive", "rk4-fixed"):
            raise ConfigError(f"unknown integrator method {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0 and self.step > 0):
            raise ConfigError("integrator tolerances and step must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")

    def scaled(self, factor):
        """Copy with ``atol`` multiplied by ``abs(factor)``.

        Used for simulations started at amplitude ``factor``, whose results
        are later divided by that amplitude.
        """
        return IntegratorConfig(self.method, self.rtol, self.atol * abs(factor), self.step, self.max_steps)


@dataclass(frozen=True)
class Trajectory:
    """States (and optionally outputs) sampled on a uniform grid."""

    grid: np.ndarray
    states: np.ndarray
    outputs: np.ndarray = None

    @property
    def t0(self):
        return float(self.grid[0])

    @property
    def t1(self):
        return float(self.grid[-1])

    def __len__(self):
        return len(self.grid)

    def to_csv(self, path):
        n = self.states.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)]
        cols = [self.grid[:, None], self.states]
        if self.outputs is not None:
            header += [f"y{j + 1}" for j in range(self.outputs.shape[1])]
            cols.append(self.outputs)
        write_csv(path, header, np.hstack(cols))


def _input_fn(model, u):
    if u is None or model.p == 0:
        return lambda t, x: model.drift(t, x)
    if callable(u):
        return lambda t, x: model.drift(t, x) + model.input_map(t) @ np.atleast_1d(u(t))
    raise ConfigError("u must be a callable t -> input vector, or None")


def _initial_step(f, t0, y0, f0, direction, rtol, atol):
    # Hairer, Norsett & Wanner, algorithm II.4
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = f(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def _hermite(ta, tb, ya, yb, fa, fb, t):
    h = tb - ta
    s = (t - ta) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * ya + h10 * h * fa + h01 * yb + h11 * h * fb


def _dopri(f, grid, y0, cfg):
    t0, t1 = grid[0], grid[-1]
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    out = np.empty((len(grid), len(y0)))
    out[0] = y0
    nxt = 1

    t, y = t0, y0
    fy = f(t, y)
    if not np.all(np.isfinite(fy)):
        raise NonFiniteState(f"non-finite derivative at t={t}", time=t)
    h = _initial_step(f, t, y, fy, direction, cfg.rtol, cfg.atol)
    h = min(h, span)
    steps = 0
    k = [None] * 7
    while nxt < len(grid):
        if steps >= cfg.max_steps:
            raise StepLimitExceeded(f"max_steps={cfg.max_steps} reached at t={t}")
        steps += 1
        remaining = abs(t1 - t)
        if h >= remaining:
            h = remaining
        hmin = 16 * _EPS * max(abs(t), span)
        if h < hmin:
            raise NonFiniteState(f"step size collapsed at t={t} (finite-time blow-up?)", time=t)
        hs = direction * h
        k[0] = fy
        for i in range(1, 7):
            yi = y + hs * sum(a * kj for a, kj in zip(_A[i], k) if a)
            k[i] = f(t + _C[i] * hs, yi)
        ynew = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
        fnew = k[6]
        err_vec = hs * sum(e * kj for e, kj in zip(_E, k) if e)
        if not (np.all(np.isfinite(ynew)) and np.all(np.isfinite(fnew)) and np.all(np.isfinite(err_vec))):
            h *= 0.2
            continue
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        if err > 1.0:
            h *= max(0.2, 0.9 * err**-0.2)
            continue
        tnew = t1 if h == remaining else t + hs
        while nxt < len(grid) and (grid[nxt] - tnew) * direction <= 0:
            tg = grid[nxt]
            out[nxt] = ynew if tg == tnew else _hermite(t, tnew, y, ynew, fy, fnew, tg)
            nxt += 1
        t, y, fy = tnew, ynew, fnew
        h *= min(5.0, 0.9 * err**-0.2) if err > 0 else 5.0
    return out


def _rk4(f, grid, y0, cfg):
    out = np.empty((len(grid), len(y0)))
    out[0] = y0
    y = y0
    steps = 0
    for j in range(1, len(grid)):
        ta, tb = grid[j - 1], grid[j]
        m = max(1, math.ceil(abs(tb - ta) / cfg.step - 1e-9))
        h = (tb - ta) / m
        for i in range(m):
            steps += 1
            if steps > cfg.max_steps:
                raise StepLimitExceeded(f"max_steps={cfg.max_steps} reached at t={ta + i * h}")
            t = ta + i * h
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t={tb}", time=tb)
        out[j] = y
    return out


def integrate(model, x0, u=None, t0=0.0, t1=1.0, N=100, cfg=None):
    """Simulate ``model`` from ``x0`` and sample on ``N + 1`` uniform points.

    ``t1 < t0`` integrates backward.  ``u`` is a callable ``t -> input`` or
    None for zero input.

    Raises
    ------
    NonFiniteState
        The state became non-finite or the step size collapsed.
    StepLimitExceeded
        More than ``cfg.max_steps`` steps were needed.
    """
    cfg = cfg or IntegratorConfig()
    if t1 == t0:
        raise ConfigError("t1 must differ from t0")
    if N < 1:
        raise ConfigError("N must be >= 1")
    x0 = np.array(x0, dtype=float).reshape(model.n)
    grid = np.linspace(t0, t1, N + 1)
    f = _input_fn(model, u)
    with np.errstate(over="ignore", invalid="ignore"):
        if cfg.method == "rk4-fixed":
            states = _rk4(f, grid, x0, cfg)
        else:
            states = _dopri(f, grid, x0, cfg)
    if not np.all(np.isfinite(states)):
        raise NonFiniteState("non-finite state in trajectory")
    outputs = np.array([model.output(t, x) for t, x in zip(grid, states)])
    return Trajectory(grid=grid, states=states, outputs=outputs)


def impulse_response(model, scale, direction, t1=1.0, N=100, cfg=None, space="input"):
    """Response to the impulse ``u = scale * direction * delta(t)``.

    For input-affine models the impulse is exactly a jump of the state to
    ``equilibrium + B(0) @ (scale * direction)`` followed by free evolution.
    With ``space="state"`` the jump is ``scale * direction`` directly.
    """
    direction = np.asarray(direction, float)
    if space == "input":
        jump = model.input_map(0.0) @ (scale * direction)
    elif space == "state":
        jump = scale * direction
    else:
        raise ConfigError(f"space must be 'input' or 'state', got {space!r}")
    return integrate(model, model.equilibrium + jump, None, 0.0, t1, N, cfg)


def mean_value(traj):
    """Time average of the state over the trajectory span (trapezoid rule)."""
    span = traj.t1 - traj.t0
    return np.trapezoid(traj.states, traj.grid, axis=0) / span
