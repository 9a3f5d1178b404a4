"""Dense kernels: Lyapunov solves, PSD factors, guarded inversion, SVD."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .exceptions import IllConditioned, LyapunovResidualError, UnstableMatrix
from .io import dump_flat_toml, write_csv

__all__ = [
    "Gramian",
    "solve_lyapunov",
    "psd_factor",
    "conditioned_inverse",
    "svd",
    "CLIP_RTOL",
    "COND_LIMIT",
]

logger = logging.getLogger(__name__)

CLIP_RTOL = 1e-12
COND_LIMIT = 1e12

METHODS = {
    "lall-P", "lall-Q", "ltv-P", "ltv-Q", "bilinear-P", "bilinear-Q",
    "nonlinear-P", "nonlinear-Q", "lti-P", "lti-Q",
}


@dataclass(frozen=True)
class Gramian:
    """Symmetric positive semidefinite matrix plus how it was obtained."""

    matrix: np.ndarray
    method: str
    horizon: float = float("inf")
    quadrature: str = "exact"
    set_summary: str = ""
    clipped_mass: float = 0.0
    # per-node traces (integrand norms, condition numbers); not serialized
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_matrix(cls, matrix, method, **meta):
        """Symmetrize ``matrix`` and clip eigenvalues below ``1e-12 * max``.

        Quadrature turns analytically PSD integrals into matrices that may
        dip slightly negative; the removed spectral mass is recorded.
        """
        if method not in METHODS:
            raise ValueError(f"unknown gramian method {method!r}")
        X = np.asarray(matrix, float)
        X = 0.5 * (X + X.T)
        w, U = np.linalg.eigh(X)
        top = max(w.max(initial=0.0), 0.0)
        low = w < -CLIP_RTOL * top
        mass = float(np.abs(w[low]).sum())
        if mass > 0:
            logger.info("%s: clipped %d negative eigenvalues, mass %.3e", method, int(low.sum()), mass)
            w = np.where(low, 0.0, w)
            X = (U * w) @ U.T
            X = 0.5 * (X + X.T)
        X.setflags(write=False)
        return cls(matrix=X, method=method, clipped_mass=mass, **meta)

    @property
    def n(self):
        return self.matrix.shape[0]

    def metadata(self):
        return {
            "method": self.method,
            "horizon": self.horizon if np.isfinite(self.horizon) else "inf",
            "quadrature": self.quadrature,
            "set_summary": self.set_summary,
            "clipped_mass": self.clipped_mass,
        }

    def to_csv(self, path):
        """Dense row-major CSV plus a ``<path>.meta.toml`` sidecar."""
        path = Path(path)
        write_csv(path, [f"c{j + 1}" for j in range(self.n)], self.matrix)
        Path(str(path) + ".meta.toml").write_text(dump_flat_toml(self.metadata()), newline="\n")


def solve_lyapunov(A, M, check=True):
    """Solve ``A X + X A' + M = 0`` by the Bartels-Stewart method.

    Raises :class:`UnstableMatrix` if ``A`` has an eigenvalue with
    nonnegative real part, and :class:`LyapunovResidualError` if the
    relative Frobenius residual exceeds 1e-10.
    """
    A = np.asarray(A, float)
    M = np.asarray(M, float)
    lam = np.linalg.eigvals(A)
    if np.any(lam.real >= 0):
        raise UnstableMatrix(f"A has eigenvalue with real part {lam.real.max():.3e} >= 0")
    X = sla.solve_continuous_lyapunov(A, -M)
    X = 0.5 * (X + X.T)
    if check:
        res = np.linalg.norm(A @ X + X @ A.T + M)
        ref = np.linalg.norm(M)
        if res > 1e-10 * max(ref, np.finfo(float).tiny):
            raise LyapunovResidualError(f"relative residual {res / ref:.3e} exceeds 1e-10")
    return X


def psd_factor(G, rtol=CLIP_RTOL):
    """Factor ``R`` with ``G ~= R R'``, dropping eigenvalues below ``rtol * max``."""
    X = G.matrix if isinstance(G, Gramian) else np.asarray(G, float)
    w, U = np.linalg.eigh(0.5 * (X + X.T))
    top = w.max(initial=0.0)
    keep = w > rtol * top if top > 0 else np.zeros_like(w, dtype=bool)
    # eigh sorts ascending; keep the factor columns in descending order
    keep_idx = np.flatnonzero(keep)[::-1]
    return U[:, keep_idx] * np.sqrt(w[keep_idx])


def conditioned_inverse(M, cond_limit=COND_LIMIT, time=None):
    """Inverse of a square matrix via SVD, refusing condition numbers above ``cond_limit``."""
    M = np.asarray(M, float)
    if not np.all(np.isfinite(M)):
        raise IllConditioned("matrix has non-finite entries", cond=np.inf, time=time)
    U, s, Vt = np.linalg.svd(M)
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    if cond > cond_limit:
        where = "" if time is None else f" at t={time:g}"
        raise IllConditioned(f"condition number {cond:.3e} exceeds {cond_limit:.1e}{where}", cond=cond, time=time)
    return (Vt.T / s) @ U.T


def svd(M):
    """Thin SVD ``M = U diag(s) V'`` with non-increasing ``s``."""
    U, s, Vt = np.linalg.svd(np.asarray(M, float), full_matrices=False)
    return U, s, Vt.T
