"""System models: input-affine nonlinear, linear time-varying and bilinear.

All models are frozen dataclasses holding pure callables, so they can be
shared between threads and reused across simulations.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import ConfigError, NilpotencyError, PotentialOverflow

__all__ = [
    "NonlinearModel",
    "LTVModel",
    "BilinearModel",
    "PerturbationSets",
    "build_rc_ladder",
    "potential",
    "potential_gradient",
    "diode_current",
    "random_stable_lti",
    "preset",
    "DIODE_GAIN",
    "EXPONENT_LIMIT",
]

DIODE_GAIN = 40.0
EXPONENT_LIMIT = 700.0


@dataclass(frozen=True)
class NonlinearModel:
    """Input-affine system ``x' = drift(t, x) + input_map(t) u``, ``y = output_map(t, x)``.

    ``name`` and ``params`` identify presets; they let later stages pick
    analytic shortcuts (e.g. exact Taylor coefficients of the RC ladder).
    """

    n: int
    p: int
    q: int
    drift: Callable
    input_map: Callable
    output_map: Callable
    equilibrium: np.ndarray = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1 or self.p < 0 or self.q < 1:
            raise ConfigError(f"bad dimensions n={self.n}, p={self.p}, q={self.q}")
        eq = np.zeros(self.n) if self.equilibrium is None else np.asarray(self.equilibrium, float)
        if eq.shape != (self.n,):
            raise ConfigError(f"equilibrium must have shape ({self.n},)")
        object.__setattr__(self, "equilibrium", eq)

    def rhs(self, t, x, u=None):
        """Right-hand side with input value ``u`` (a p-vector or None)."""
        dx = self.drift(t, x)
        if u is not None and self.p:
            dx = dx + self.input_map(t) @ np.atleast_1d(u)
        return dx

    def output(self, t, x):
        return np.atleast_1d(self.output_map(t, x))


@dataclass(frozen=True)
class LTVModel:
    """Linear time-varying system ``x' = A(t) x + B(t) u``, ``y = C(t) x``."""

    A: Callable
    B: Callable
    C: Callable
    n: int
    p: int = 1
    q: int = 1
    name: str = "ltv"
    # set for time-invariant models so callers can reach the raw matrices
    constant: tuple = None

    @classmethod
    def from_matrices(cls, A, B, C, name="lti"):
        A = np.atleast_2d(np.asarray(A, float))
        B = np.asarray(B, float)
        C = np.asarray(C, float)
        n = A.shape[0]
        B = B.reshape(n, -1)
        C = C.reshape(-1, n)
        if A.shape != (n, n):
            raise ConfigError("A must be square")
        for arr in (A, B, C):
            arr.setflags(write=False)
        return cls(
            A=lambda t: A,
            B=lambda t: B,
            C=lambda t: C,
            n=n,
            p=B.shape[1],
            q=C.shape[0],
            name=name,
            constant=(A, B, C),
        )

    @property
    def is_constant(self):
        return self.constant is not None

    def to_nonlinear(self):
        A, B, C = self.A, self.B, self.C
        return NonlinearModel(
            n=self.n,
            p=self.p,
            q=self.q,
            drift=lambda t, x: A(t) @ x,
            input_map=B,
            output_map=lambda t, x: C(t) @ x,
            name=self.name,
            params={"linear": True},
        )


@dataclass(frozen=True)
class BilinearModel:
    """Single-input bilinear system ``x' = A x + N x u + B u``, ``y = C x``."""

    Ahat: np.ndarray
    Nhat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    name: str = "bilinear"

    def __post_init__(self):
        A = np.asarray(self.Ahat, float)
        nb = A.shape[0]
        N = np.asarray(self.Nhat, float)
        B = np.asarray(self.Bhat, float).reshape(nb)
        C = np.asarray(self.Chat, float).reshape(nb)
        if A.shape != (nb, nb) or N.shape != (nb, nb):
            raise ConfigError("Ahat and Nhat must be square and of equal size")
        for name, arr in (("Ahat", A), ("Nhat", N), ("Bhat", B), ("Chat", C)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nb(self):
        return self.Ahat.shape[0]

    def nilpotency_index(self, atol=1e-12):
        """Smallest ``k`` with ``Nhat**k`` zero to ``atol`` (relative); raises if none up to ``nb``."""
        scale = max(np.abs(self.Nhat).max(), 1.0)
        power = np.eye(self.nb)
        for k in range(1, self.nb + 1):
            power = self.Nhat @ power
            if np.abs(power).max() <= atol * scale**k:
                return k
        raise NilpotencyError(f"Nhat is not nilpotent (checked powers up to {self.nb})")

    def impulse_jump(self, c):
        """State right after the impulse ``u = c delta(t)`` from rest.

        ``sum_k (c/2)^k Nhat^k Bhat c``, finite because ``Nhat`` is nilpotent.
        """
        k = self.nilpotency_index()
        term = c * self.Bhat
        x = term.copy()
        for _ in range(1, k):
            term = (c / 2.0) * (self.Nhat @ term)
            x = x + term
        return x

    def with_input(self, u):
        """Autonomous view of the system driven by the scalar signal ``u(t)``."""
        A, N, B, C = self.Ahat, self.Nhat, self.Bhat, self.Chat

        def drift(t, x):
            ut = u(t)
            return A @ x + ut * (N @ x) + ut * B

        return NonlinearModel(
            n=self.nb,
            p=0,
            q=1,
            drift=drift,
            input_map=lambda t: np.zeros((self.nb, 0)),
            output_map=lambda t, x: np.atleast_1d(C @ x),
            name=self.name,
        )

    def as_nonlinear(self):
        """Zero-input drift with ``Bhat`` as input map (exact only when ``Nhat = 0``)."""
        A, B, C = self.Ahat, self.Bhat[:, None], self.Chat
        return NonlinearModel(
            n=self.nb,
            p=1,
            q=1,
            drift=lambda t, x: A @ x,
            input_map=lambda t: B,
            output_map=lambda t, x: np.atleast_1d(C @ x),
            name=self.name,
        )


@dataclass(frozen=True)
class PerturbationSets:
    """Scales ``M`` and rotations ``T`` used to probe a system.

    Scales may be negative; only zero is rejected.
    """

    M: tuple
    T: tuple

    def __post_init__(self):
        M = tuple(float(c) for c in np.atleast_1d(self.M))
        if not M:
            raise ConfigError("M must contain at least one scale")
        if any(c == 0.0 or not np.isfinite(c) for c in M):
            raise ConfigError(f"scales must be finite and nonzero, got {M}")
        T = tuple(np.array(t, dtype=float) for t in self.T)
        if not T:
            raise ConfigError("T must contain at least one matrix")
        n = T[0].shape[0]
        for t in T:
            if t.shape != (n, n):
                raise ConfigError("all T matrices must be square and of equal size")
            if np.abs(t.T @ t - np.eye(n)).max() > 1e-12:
                raise ConfigError("T matrices must be orthogonal")
            t.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "T", T)

    @classmethod
    def standard(cls, M, n):
        return cls(M=M, T=(np.eye(n),))

    @property
    def n(self):
        return self.T[0].shape[0]

    @property
    def r(self):
        return len(self.T)

    @property
    def s(self):
        return len(self.M)

    def summary(self):
        rot = "identity" if self.r == 1 and np.array_equal(self.T[0], np.eye(self.n)) else f"{self.r} rotations"
        return f"M={list(self.M)}; T={rot}"


# --------------------------------------------------------------------------
# RC ladder


def diode_current(v):
    """Nonlinear resistor law ``i(v) = (exp(40 v) - 1) + v``."""
    return np.expm1(DIODE_GAIN * v) + v


def _branch_voltages(x):
    # branch 0 connects node 1 to ground; branch k joins nodes k and k+1
    x = np.asarray(x, float)
    w = np.empty_like(x)
    w[0] = x[0]
    w[1:] = x[:-1] - x[1:]
    return w


def _ladder_drift(x):
    # branch k > 0 carries current from node k-1 into node k; branch 0 drains
    # node 0 to ground
    i = diode_current(_branch_voltages(x))
    dx = i.copy()
    dx[0] = -i[0]
    dx[:-1] -= i[1:]
    return dx


def potential(x):
    """Ladder potential whose negative gradient is the zero-input drift.

    Raises :class:`PotentialOverflow` if any branch exponent exceeds 700.
    """
    w = _branch_voltages(x)
    if np.any(DIODE_GAIN * w > EXPONENT_LIMIT):
        raise PotentialOverflow(f"branch exponent {DIODE_GAIN * w.max():.1f} exceeds {EXPONENT_LIMIT}")
    return float(np.sum(np.exp(DIODE_GAIN * w) / DIODE_GAIN - w + 0.5 * w**2))


def potential_gradient(x):
    return -_ladder_drift(x)


def build_rc_ladder(n=30):
    """Nonlinear RC ladder with ``n`` nodes, current input and output at node 1."""
    if int(n) != n or n < 2:
        raise ConfigError(f"RC ladder needs n >= 2 nodes, got {n}")
    n = int(n)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    B.setflags(write=False)
    return NonlinearModel(
        n=n,
        p=1,
        q=1,
        drift=lambda t, x: _ladder_drift(x),
        input_map=lambda t: B,
        output_map=lambda t, x: np.atleast_1d(x[0]),
        name="rc-ladder",
        params={"n": n},
    )


# --------------------------------------------------------------------------
# test fixtures


def random_stable_lti(n, seed=0, p=1, q=1):
    """Random stable LTI system, deterministic per ``seed``.

    ``A = Q (D + S) Q'`` with ``Q`` orthogonal, so ``A`` is normal.  Real
    parts of the spectrum lie in ``[-1.5, -1] * scale`` with ``scale`` drawn
    from ``[0.2, 2]``; the narrow spread keeps backward fundamental
    solutions well conditioned over long horizons.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    scale = rng.uniform(0.2, 2.0)
    blocks = np.zeros((n, n))
    k = 0
    while k < n:
        re = -rng.uniform(1.0, 1.5)
        if k + 1 < n and rng.random() < 0.5:
            im = rng.uniform(0.0, 1.0)
            blocks[k : k + 2, k : k + 2] = [[re, im], [-im, re]]
            k += 2
        else:
            blocks[k, k] = re
            k += 1
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = scale * (Q @ blocks @ Q.T)
    B = rng.standard_normal((n, p))
    C = rng.standard_normal((q, n))
    return LTVModel.from_matrices(A, B, C, name="random-lti")


def preset(name, **params):
    """Look up a model preset by its CLI name."""
    if name == "rc-ladder":
        return build_rc_ladder(params.get("n", 30))
    if name == "random-lti":
        return random_stable_lti(params.get("n", 4), seed=params.get("seed", 0))
    raise ConfigError(f"unknown model preset {name!r}")
