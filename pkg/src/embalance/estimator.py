"""scikit-learn style front end for balanced truncation.

:class:`BalancedTruncation` is fitted on a *model* rather than a data matrix:
``fit`` computes the gramian pair selected by ``method``, balances it and
stores the reduced model.  ``transform`` maps full states to reduced
coordinates and ``inverse_transform`` lifts them back, so the estimator can
sit inside a :class:`sklearn.pipeline.Pipeline` that post-processes
simulated state snapshots.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .balancing import balance, project_bilinear, project_linear, project_nonlinear
from .carleman import output_jacobian, taylor_drift
from .exceptions import ConfigError
from .gramians import (
    QuadratureConfig,
    bilinear_gramians,
    lall_controllability,
    lall_observability,
    linear_part_gramians,
    lti_gramians,
    ltv_gramians,
    nonlinear_controllability,
    nonlinear_observability,
)
from .linalg import COND_LIMIT
from .models import BilinearModel, LTVModel, NonlinearModel, PerturbationSets
from .ode import IntegratorConfig

__all__ = ["BalancedTruncation", "METHODS"]

DEFAULT_SCALES = (-5.0, -0.5, -1.0, -0.1, 0.1, 0.5, 1.0, 5.0)

METHODS = ("nonlinear", "lall", "linear-part", "ltv", "lti")


class BalancedTruncation(TransformerMixin, BaseEstimator):
    """Balanced truncation of a state-space model to ``order`` states.

    Parameters
    ----------
    order : int
        Reduced state dimension.
    method : {"nonlinear", "lall", "linear-part", "ltv", "lti"}
        Gramian construction.  ``"nonlinear"`` uses the averaged
        fundamental solution; ``"lall"`` uses impulse/initial-state
        responses (closed form for a :class:`BilinearModel`);
        ``"linear-part"`` uses the Jacobian or the bilinear ``(A, B, C)``;
        ``"ltv"`` and ``"lti"`` need an :class:`LTVModel`.
    M : sequence of float
        Perturbation scales (nonzero, sign allowed).
    T : sequence of arrays or None
        Orthogonal rotations; None means the identity only.
    quadrature : QuadratureConfig or None
        Quadrature on ``[0, horizon]`` for forward-time integrals.
    backward_quadrature : QuadratureConfig or None
        Quadrature for the backward-time controllability integrals of the
        ``"nonlinear"`` and ``"ltv"`` methods; defaults to ``quadrature``.
    integrator : IntegratorConfig or None
    normalize : bool
        Divide the bilinear impulse term by ``len(M)``.
    mean : {"equilibrium", "time-average"}
        Centring of the ``"lall"`` trajectories.
    cond_limit : float
        Largest condition number accepted when inverting fundamental
        matrices.

    Attributes
    ----------
    gramians_ : tuple of Gramian
    basis_ : ReductionBasis
    hankel_singular_values_ : ndarray of shape (order,)
    reduced_ : ReducedModel
    n_features_in_ : int
    """

    def __init__(
        self,
        order=3,
        method="nonlinear",
        M=DEFAULT_SCALES,
        T=None,
        quadrature=None,
        backward_quadrature=None,
        integrator=None,
        normalize=True,
        mean="equilibrium",
        cond_limit=COND_LIMIT,
    ):
        self.order = order
        self.method = method
        self.M = M
        self.T = T
        self.quadrature = quadrature
        self.backward_quadrature = backward_quadrature
        self.integrator = integrator
        self.normalize = normalize
        self.mean = mean
        self.cond_limit = cond_limit

    def _sets(self, n):
        T = (np.eye(n),) if self.T is None else tuple(self.T)
        return PerturbationSets(M=tuple(self.M), T=T)

    def _gramians(self, model):
        quad = self.quadrature or QuadratureConfig()
        bquad = self.backward_quadrature or quad
        cfg = self.integrator or IntegratorConfig()
        method = self.method
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")

        if isinstance(model, BilinearModel):
            if method == "lall":
                return bilinear_gramians(model, self.M, self.normalize)
            if method == "linear-part":
                return linear_part_gramians(model)
            raise ConfigError(f"method {method!r} is not available for bilinear models")

        if isinstance(model, LTVModel):
            if method == "ltv":
                return ltv_gramians(model, quad, cfg, self.cond_limit, bquad)
            if method in ("lti", "linear-part"):
                if not model.is_constant:
                    raise ConfigError("lti gramians need a time-invariant model")
                return lti_gramians(*model.constant)
            model = model.to_nonlinear()

        if method == "nonlinear":
            sets = self._sets(model.n)
            P = nonlinear_controllability(model, sets, bquad, cfg, self.cond_limit)
            Q = nonlinear_observability(model, sets, quad, cfg)
            return P, Q
        if method == "lall":
            sets = self._sets(model.n)
            P = lall_controllability(model, sets, quad, cfg, self.mean)
            Q = lall_observability(model, sets, quad, cfg, self.mean)
            return P, Q
        if method in ("linear-part", "lti"):
            A1 = taylor_drift(model, order=1).A1
            return lti_gramians(A1, model.input_map(0.0), output_jacobian(model))
        if method == "ltv":
            raise ConfigError("ltv gramians need an LTVModel")
        raise ConfigError(f"method {method!r} not supported for {type(model).__name__}")

    def fit(self, model, y=None, gramians=None):
        """Compute gramians, balance them and project ``model``.

        ``gramians`` may supply a precomputed ``(P, Q)`` pair, in which case
        ``method`` only labels the result.
        """
        if not isinstance(model, (NonlinearModel, LTVModel, BilinearModel)):
            raise TypeError(f"fit expects a model, got {type(model).__name__}")
        P, Q = self._gramians(model) if gramians is None else gramians
        basis = balance(P, Q, self.order)
        provenance = f"{P.method}/{Q.method}"
        if isinstance(model, BilinearModel):
            reduced = project_bilinear(model, basis, provenance)
            eq = np.zeros(model.nb)
        elif isinstance(model, LTVModel):
            reduced = project_linear(model, basis, provenance)
            eq = np.zeros(model.n)
        else:
            reduced = project_nonlinear(model, basis, provenance)
            eq = model.equilibrium
        self.gramians_ = (P, Q)
        self.basis_ = basis
        self.hankel_singular_values_ = basis.hankel
        self.reduced_ = reduced
        self.equilibrium_ = eq
        self.n_features_in_ = basis.n
        return self

    def transform(self, X):
        """Reduced coordinates ``z = W' (x - x_eq)`` of state snapshots (rows)."""
        check_is_fitted(self, "basis_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return (X - self.equilibrium_) @ self.basis_.W

    def inverse_transform(self, Z):
        """Full states ``x_eq + V z``."""
        check_is_fitted(self, "basis_")
        Z = check_array(Z, dtype=float)
        if Z.shape[1] != self.basis_.k:
            raise ValueError(f"Z has {Z.shape[1]} columns, expected {self.basis_.k}")
        return self.equilibrium_ + Z @ self.basis_.V.T
