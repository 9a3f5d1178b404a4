"""Order-2 Carleman bilinearization of input-affine systems."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NumericalError
from .models import DIODE_GAIN, BilinearModel

__all__ = ["PolynomialDrift", "taylor_drift", "output_jacobian", "carleman_lift", "bilinearize"]

FD_STEP = 1e-5


@dataclass(frozen=True)
class PolynomialDrift:
    """``f(x) ~= A1 x + A2 (x kron x)`` about the equilibrium.

    ``A2`` is stored with symmetric columns, i.e. column ``j*n + k`` equals
    column ``k*n + j``.
    """

    A1: np.ndarray
    A2: np.ndarray

    @property
    def n(self):
        return self.A1.shape[0]

    def __call__(self, x):
        x = np.asarray(x, float)
        return self.A1 @ x + self.A2 @ np.kron(x, x)


def _ladder_taylor(n, order):
    # branch voltages w = D x: w_0 = x_0, w_k = x_{k-1} - x_k
    D = np.eye(n, k=-1) - np.eye(n)
    D[0, 0] = 1.0
    g1, g2 = DIODE_GAIN + 1.0, DIODE_GAIN**2
    A1 = -g1 * D.T @ D
    A2 = np.zeros((n, n * n))
    if order == 2:
        rows = np.stack([np.kron(d, d) for d in D])
        A2 = -(g2 / 2.0) * D.T @ rows
    return PolynomialDrift(A1, A2)


def _finite_difference_taylor(model, order, h):
    n = model.n
    x0 = model.equilibrium
    f = lambda x: model.drift(0.0, x)
    E = np.eye(n) * h
    A1 = np.column_stack([(f(x0 + E[j]) - f(x0 - E[j])) / (2 * h) for j in range(n)])
    A2 = np.zeros((n, n * n))
    if order == 2:
        for j in range(n):
            for k in range(j, n):
                hjk = (
                    f(x0 + E[j] + E[k]) - f(x0 + E[j] - E[k]) - f(x0 - E[j] + E[k]) + f(x0 - E[j] - E[k])
                ) / (4 * h * h)
                A2[:, j * n + k] = 0.5 * hjk
                A2[:, k * n + j] = 0.5 * hjk
    if not (np.all(np.isfinite(A1)) and np.all(np.isfinite(A2))):
        raise NumericalError("finite-difference Taylor coefficients are not finite")
    return PolynomialDrift(A1, A2)


def taylor_drift(model, order=2, analytic=True, step=FD_STEP):
    """First- or second-order Taylor expansion of the drift at the equilibrium.

    The RC ladder preset uses its exact derivatives; any other model is
    differentiated by central differences with step ``step``.
    """
    if order not in (1, 2):
        raise ConfigError("order must be 1 or 2")
    if analytic and model.name == "rc-ladder":
        return _ladder_taylor(model.n, order)
    return _finite_difference_taylor(model, order, step)


def output_jacobian(model, step=FD_STEP):
    """``dh/dx`` at the equilibrium by central differences, shape ``(q, n)``."""
    x0 = model.equilibrium
    E = np.eye(model.n) * step
    return np.column_stack([(model.output(0.0, x0 + e) - model.output(0.0, x0 - e)) / (2 * step) for e in E])


def carleman_lift(pd, B, C):
    """Bilinear model on the lifted state ``[x, x kron x]``.

    The lifted coupling matrix is strictly block lower triangular, so its
    square vanishes.
    """
    n = pd.n
    B = np.asarray(B, float).reshape(n)
    C = np.asarray(C, float).reshape(n)
    I = np.eye(n)
    nb = n + n * n
    A = np.zeros((nb, nb))
    A[:n, :n] = pd.A1
    A[:n, n:] = pd.A2
    A[n:, n:] = np.kron(pd.A1, I) + np.kron(I, pd.A1)
    N = np.zeros((nb, nb))
    N[n:, :n] = np.kron(B[:, None], I) + np.kron(I, B[:, None])
    Bh = np.concatenate([B, np.zeros(n * n)])
    Ch = np.concatenate([C, np.zeros(n * n)])
    return BilinearModel(Ahat=A, Nhat=N, Bhat=Bh, Chat=Ch, name=f"carleman-{n}")


def bilinearize(model, order=2):
    """Carleman lift of a single-input, single-output model with linear output."""
    if model.p != 1 or model.q != 1:
        raise ConfigError("bilinearization supports p = q = 1 only")
    pd = taylor_drift(model, order)
    B = model.input_map(0.0)[:, 0]
    return carleman_lift(pd, B, output_jacobian(model)[0])
