"""Square-root balancing and Petrov-Galerkin projection."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NonFiniteState, RankDeficient, StepLimitExceeded
from .io import write_csv
from .linalg import psd_factor, svd
from .models import BilinearModel, LTVModel, NonlinearModel
from .ode import IntegratorConfig, integrate

__all__ = [
    "ReductionBasis",
    "ReducedModel",
    "StabilityReport",
    "balance",
    "project_nonlinear",
    "project_bilinear",
    "project_linear",
    "stability_check",
]

SV_RTOL = 1e-12


@dataclass(frozen=True)
class ReductionBasis:
    """Trial basis ``V`` and test basis ``W`` with ``W' V = I``."""

    V: np.ndarray
    W: np.ndarray
    hankel: np.ndarray
    discarded_tail: float = 0.0

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def k(self):
        return self.V.shape[1]

    def to_csv(self, path):
        """``V`` and ``W`` side by side; Hankel values go in the header."""
        hsv = " ".join(format(s, ".17g") for s in self.hankel)
        header = [f"V{j + 1}" for j in range(self.k)] + [f"W{j + 1}" for j in range(self.k)]
        write_csv(path, header, np.hstack([self.V, self.W]), comment=f"hankel = {hsv}")

    @classmethod
    def identity(cls, n):
        return cls(V=np.eye(n), W=np.eye(n), hankel=np.ones(n))


def balance(P, Q, k):
    """Square-root balanced truncation basis of order ``k``.

    With ``P = R R'``, ``Q = L L'`` and ``L' R = U S V'``, returns
    ``V_k = R V S^-1/2`` and ``W_k = L U S^-1/2``; then ``W_k' P W_k`` and
    ``V_k' Q V_k`` both equal ``diag(S[:k])``.
    """
    R = psd_factor(P)
    L = psd_factor(Q)
    if R.shape[0] != L.shape[0]:
        raise ConfigError("gramians have different dimensions")
    if k < 1:
        raise ConfigError("reduced order must be >= 1")
    U, s, Vs = svd(L.T @ R)
    rank = int(np.sum(s > SV_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < k:
        raise RankDeficient(f"only {rank} Hankel singular values are nonzero, order {k} requested")
    # reproducible signs: largest-magnitude entry of each U column is positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    Vs = Vs * signs
    scale = 1.0 / np.sqrt(s[:k])
    V = R @ Vs[:, :k] * scale
    W = L @ U[:, :k] * scale
    tail = float(s[k]) if s.size > k else 0.0
    return ReductionBasis(V=V, W=W, hankel=s[:k].copy(), discarded_tail=tail)


@dataclass(frozen=True)
class ReducedModel:
    model: object
    basis: ReductionBasis
    provenance: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.basis.k


def project_nonlinear(model, basis, provenance=""):
    """Galerkin-type reduction ``z' = W' f(t, V z) + W' B(t) u``, ``y = h(t, V z)``."""
    if basis.n != model.n:
        raise ConfigError(f"basis dimension {basis.n} does not match model dimension {model.n}")
    V, W = basis.V, basis.W
    f, Bm, h = model.drift, model.input_map, model.output_map
    eq = model.equilibrium
    reduced = NonlinearModel(
        n=basis.k,
        p=model.p,
        q=model.q,
        drift=lambda t, z: W.T @ f(t, eq + V @ z),
        input_map=lambda t: W.T @ Bm(t),
        output_map=lambda t, z: h(t, eq + V @ z),
        name=f"{model.name}-reduced",
    )
    return ReducedModel(reduced, basis, provenance, {"kind": "nonlinear"})


def project_bilinear(model, basis, provenance=""):
    """``(W' A V, W' N V, W' B, C V)``; the reduced ``N`` need not stay nilpotent."""
    if basis.n != model.nb:
        raise ConfigError(f"basis dimension {basis.n} does not match model dimension {model.nb}")
    V, W = basis.V, basis.W
    reduced = BilinearModel(
        Ahat=W.T @ model.Ahat @ V,
        Nhat=W.T @ model.Nhat @ V,
        Bhat=W.T @ model.Bhat,
        Chat=model.Chat @ V,
        name=f"{model.name}-reduced",
    )
    try:
        index = reduced.nilpotency_index(atol=1e-12)
    except Exception:
        index = None
    return ReducedModel(reduced, basis, provenance, {"kind": "bilinear", "nilpotency_index": index})


def project_linear(model, basis, provenance=""):
    if not model.is_constant:
        raise ConfigError("project_linear needs a time-invariant model")
    A, B, C = model.constant
    V, W = basis.V, basis.W
    reduced = LTVModel.from_matrices(W.T @ A @ V, W.T @ B, C @ V, name=f"{model.name}-reduced")
    return ReducedModel(reduced, basis, provenance, {"kind": "linear"})


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    test: str
    detail: float

    def __str__(self):
        verdict = "stable" if self.stable else "unstable"
        return f"{verdict} ({self.test}: {self.detail:.6g})"


def stability_check(reduced, horizon=1.0, samples=5, amplitude=1e-3, seed=0, cfg=None):
    """Spectral test for linear/bilinear models, simulation test otherwise.

    The simulation test starts ``samples`` zero-input runs from random
    states of norm ``amplitude`` and flags growth beyond 1000x.
    """
    model = reduced.model if isinstance(reduced, ReducedModel) else reduced
    if isinstance(model, BilinearModel):
        lam = np.linalg.eigvals(model.Ahat).real.max()
        return StabilityReport(bool(lam < 0), "max Re eig", float(lam))
    if isinstance(model, LTVModel) and model.is_constant:
        lam = np.linalg.eigvals(model.constant[0]).real.max()
        return StabilityReport(bool(lam < 0), "max Re eig", float(lam))
    rng = np.random.default_rng(seed)
    cfg = cfg or IntegratorConfig()
    worst = 0.0
    for _ in range(samples):
        z0 = rng.standard_normal(model.n)
        z0 *= amplitude / np.linalg.norm(z0)
        try:
            traj = integrate(model, model.equilibrium + z0, None, 0.0, horizon, 100, cfg)
        except (NonFiniteState, StepLimitExceeded):
            return StabilityReport(False, "max growth", float("inf"))
        growth = np.linalg.norm(traj.states - model.equilibrium, axis=1).max() / amplitude
        worst = max(worst, growth)
    return StabilityReport(bool(worst <= 1e3), "max growth", float(worst))
