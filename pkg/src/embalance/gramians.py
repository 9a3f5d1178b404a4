"""Controllability and observability gramians.

Four families are available:

* Lall-style empirical gramians built from impulse and initial-state
  responses (:func:`lall_controllability`, :func:`lall_observability`);
* gramians of linear time-varying systems from the fundamental matrix
  (:func:`ltv_gramians`);
* closed-form gramians of bilinear systems driven by scaled impulses
  (:func:`bilinear_gramians`, :func:`linear_part_gramians`);
* gramians built on the ensemble-averaged fundamental solution of a
  nonlinear system (:func:`averaged_fundamental`,
  :func:`nonlinear_controllability`, :func:`nonlinear_observability`).

For linear systems every family reduces to the usual Lyapunov gramians.
Improper integrals over ``[0, inf)`` are truncated at
``QuadratureConfig.horizon``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ._parallel import ordered_map
from .exceptions import ConfigError, DegenerateGramian, IllConditioned, NonFiniteState
from .linalg import COND_LIMIT, Gramian, conditioned_inverse, solve_lyapunov
from .models import BilinearModel, PerturbationSets
from .ode import IntegratorConfig, integrate, mean_value

__all__ = [
    "QuadratureConfig",
    "AveragedFundamental",
    "quadrature_weights",
    "lall_controllability",
    "lall_observability",
    "ltv_gramians",
    "averaged_fundamental",
    "nonlinear_controllability",
    "nonlinear_observability",
    "bilinear_input_term",
    "bilinear_controllability",
    "bilinear_gramians",
    "linear_part_gramians",
    "lti_gramians",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureConfig:
    """Uniform quadrature on ``[0, horizon]``."""

    horizon: float = 1.0
    nodes: int = 101
    rule: str = "simpson"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError("quadrature horizon must be positive")
        if self.nodes < 3:
            raise ConfigError("quadrature needs at least 3 nodes")
        if self.rule not in ("simpson", "trapezoid"):
            raise ConfigError(f"unknown quadrature rule {self.rule!r}")
        if self.rule == "simpson" and self.nodes % 2 == 0:
            raise ConfigError("simpson rule needs an odd node count")

    @property
    def grid(self):
        return np.linspace(0.0, self.horizon, self.nodes)

    @property
    def tag(self):
        return f"{self.rule}-{self.nodes}"


def quadrature_weights(quad):
    h = quad.horizon / (quad.nodes - 1)
    w = np.ones(quad.nodes)
    if quad.rule == "simpson":
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * h / 3.0
    w[0] = w[-1] = 0.5
    return w * h


def _integrate_nodes(values, quad):
    """Apply the quadrature rule along the first axis of ``values``."""
    return np.tensordot(quadrature_weights(quad), values, axes=1)


def _node_norms(values):
    return np.linalg.norm(values.reshape(len(values), -1), axis=1)


@dataclass(frozen=True)
class AveragedFundamental:
    """Ensemble-averaged fundamental solution at quadrature nodes.

    ``times`` are the signed simulation times (negative for the backward
    direction); ``values[j]`` is the ``n x n`` average at ``times[j]``.
    """

    times: np.ndarray
    values: np.ndarray
    sets: PerturbationSets

    def __getitem__(self, j):
        return self.values[j]


# --------------------------------------------------------------------------
# member simulations


def _members(sets, dim):
    """``(i, l, m)`` triples in fixed lexicographic order."""
    return [(i, l, m) for i in range(dim) for l in range(sets.r) for m in range(sets.s)]


def _simulate_members(model, sets, x0_of, t_end, quad, cfg):
    """Zero-input runs from ``x0_of(i, l, m)``; returns ``{(i,l,m): Trajectory}``."""
    dim = sets.n
    triples = _members(sets, dim)

    def run(triple):
        i, l, m = triple
        c = sets.M[m]
        try:
            return integrate(model, x0_of(i, l, m), None, 0.0, t_end, quad.nodes - 1, cfg.scaled(c))
        except NonFiniteState as exc:
            raise NonFiniteState(
                f"member (i={i + 1}, l={l + 1}, c={c:g}): {exc}", time=exc.time, member=(i, l, m)
            ) from exc

    return dict(zip(triples, ordered_map(run, triples)))


def _input_sets(model, sets):
    """Perturbation sets acting in input space (``T`` of size ``p``)."""
    if sets.n == model.p:
        return sets
    if all(np.array_equal(t, np.eye(sets.n)) for t in sets.T):
        return PerturbationSets(M=sets.M, T=(np.eye(model.p),) * sets.r)
    raise ConfigError(f"input perturbation rotations must be {model.p}x{model.p}")


def _check_state_sets(model, sets):
    if sets.n != model.n:
        raise ConfigError(f"state perturbation rotations must be {model.n}x{model.n}, got {sets.n}")


# --------------------------------------------------------------------------
# Lall et al. empirical gramians


def lall_controllability(model, sets, quad=None, cfg=None, mean="equilibrium"):
    """Empirical controllability gramian from scaled impulse responses.

    Each member is the response to ``u = c_m T_l e_i delta(t)``, realized as
    a state jump; for a :class:`BilinearModel` the jump is the exact one of
    :meth:`BilinearModel.impulse_jump`.  ``mean`` selects the centring:
    ``"equilibrium"`` (the limit of the time average for asymptotically
    stable responses) or ``"time-average"`` (the finite-horizon average of
    each trajectory).
    """
    quad = quad or QuadratureConfig()
    cfg = cfg or IntegratorConfig()
    if isinstance(model, BilinearModel):
        bilinear, model = model, model.as_nonlinear()
        isets = _input_sets(model, sets)

        def x0_of(i, l, m):
            return bilinear.impulse_jump(isets.M[m] * isets.T[l][0, i])

    else:
        isets = _input_sets(model, sets)
        B0 = model.input_map(0.0)

        def x0_of(i, l, m):
            return model.equilibrium + B0 @ (isets.M[m] * isets.T[l][:, i])

    eq = model.equilibrium

    runs = _simulate_members(model, isets, x0_of, quad.horizon, quad, cfg)
    P = np.zeros((model.n, model.n))
    norms = np.zeros(quad.nodes)
    for (i, l, m), traj in runs.items():
        c = isets.M[m]
        center = mean_value(traj) if mean == "time-average" else eq
        dx = traj.states - center
        integrand = np.einsum("ta,tb->tab", dx, dx) / (isets.r * isets.s * c * c)
        norms += _node_norms(integrand)
        P += _integrate_nodes(integrand, quad)
    if not np.any(P):
        raise DegenerateGramian("empirical controllability gramian is identically zero")
    return Gramian.from_matrix(
        P,
        "lall-P",
        horizon=quad.horizon,
        quadrature=quad.tag,
        set_summary=isets.summary(),
        diagnostics={"times": quad.grid, "integrand_norm": norms},
    )


def lall_observability(model, sets, quad=None, cfg=None, mean="equilibrium"):
    """Empirical observability gramian from scaled initial-state responses."""
    quad = quad or QuadratureConfig()
    cfg = cfg or IntegratorConfig()
    if isinstance(model, BilinearModel):
        # zero-input responses of a bilinear system are linear
        model = model.as_nonlinear()
    _check_state_sets(model, sets)
    eq = model.equilibrium

    def x0_of(i, l, m):
        return eq + sets.M[m] * sets.T[l][:, i]

    runs = _simulate_members(model, sets, x0_of, quad.horizon, quad, cfg)
    y_eq = model.output(0.0, eq)
    n = model.n
    Q = np.zeros((n, n))
    norms = np.zeros(quad.nodes)
    for l in range(sets.r):
        Tl = sets.T[l]
        for m in range(sets.s):
            c = sets.M[m]
            # Y[t, :, i] is the centred output of member i
            cols = []
            for i in range(n):
                traj = runs[(i, l, m)]
                center = y_eq
                if mean == "time-average":
                    center = np.trapezoid(traj.outputs, traj.grid, axis=0) / (traj.t1 - traj.t0)
                cols.append(traj.outputs - center)
            Y = np.stack(cols, axis=2)
            psi = np.einsum("tqi,tqj->tij", Y, Y)
            integrand = Tl @ psi @ Tl.T / (sets.r * sets.s * c * c)
            norms += _node_norms(integrand)
            Q += _integrate_nodes(integrand, quad)
    if not np.any(Q):
        raise DegenerateGramian("empirical observability gramian is identically zero")
    return Gramian.from_matrix(
        Q,
        "lall-Q",
        horizon=quad.horizon,
        quadrature=quad.tag,
        set_summary=sets.summary(),
        diagnostics={"times": quad.grid, "integrand_norm": norms},
    )


# --------------------------------------------------------------------------
# linear time-varying systems


def _fundamental(model, t_end, quad, cfg):
    """Fundamental matrix at the quadrature nodes of ``[0, t_end]`` (signed)."""
    n = model.n
    cols = ordered_map(
        lambda i: integrate(model, np.eye(n)[i], None, 0.0, t_end, quad.nodes - 1, cfg).states,
        range(n),
    )
    return np.stack(cols, axis=2)


def ltv_gramians(model, quad=None, cfg=None, cond_limit=COND_LIMIT, backward_quad=None):
    """Constant gramians of ``x' = A(t) x + B(t) u``, ``y = C(t) x``.

    The fundamental matrix is integrated column by column backward over
    ``backward_quad`` (default ``quad``) for the controllability gramian and
    forward over ``quad`` for the observability gramian.
    """
    quad = quad or QuadratureConfig()
    bquad = backward_quad or quad
    cfg = cfg or IntegratorConfig()
    nl = model.to_nonlinear()
    back = _fundamental(nl, -bquad.horizon, bquad, cfg)
    fwd = _fundamental(nl, quad.horizon, quad, cfg)
    p_int = np.empty((bquad.nodes, model.n, model.n))
    conds = np.empty(bquad.nodes)
    for j, t in enumerate(bquad.grid):
        inv = conditioned_inverse(back[j], cond_limit, time=-t)
        conds[j] = np.linalg.cond(back[j])
        GB = inv @ model.B(-t)
        p_int[j] = GB @ GB.T
    q_int = np.empty((quad.nodes, model.n, model.n))
    for j, t in enumerate(quad.grid):
        CT = model.C(t) @ fwd[j]
        q_int[j] = CT.T @ CT
    P = Gramian.from_matrix(
        _integrate_nodes(p_int, bquad), "ltv-P", horizon=bquad.horizon, quadrature=bquad.tag,
        diagnostics={"times": bquad.grid, "integrand_norm": _node_norms(p_int), "cond": conds},
    )
    Q = Gramian.from_matrix(
        _integrate_nodes(q_int, quad), "ltv-Q", horizon=quad.horizon, quadrature=quad.tag,
        diagnostics={"times": quad.grid, "integrand_norm": _node_norms(q_int)},
    )
    return P, Q


# --------------------------------------------------------------------------
# averaged fundamental solution


def _average(runs, sets, n, nodes, value_of):
    """``1/(rs) sum_{i,l,m} value_of(traj)/c_m  (T_l e_i)'`` at every node."""
    out = None
    for l in range(sets.r):
        Tl = sets.T[l]
        for m in range(sets.s):
            c = sets.M[m]
            X = np.stack([value_of(runs[(i, l, m)]) / c for i in range(n)], axis=2)
            term = X @ Tl.T
            out = term if out is None else out + term
    return out / (sets.r * sets.s)


def _state_runs(model, sets, direction, quad, cfg):
    _check_state_sets(model, sets)
    if direction not in ("forward", "backward"):
        raise ConfigError("direction must be 'forward' or 'backward'")
    eq = model.equilibrium
    t_end = quad.horizon if direction == "forward" else -quad.horizon

    def x0_of(i, l, m):
        return eq + sets.M[m] * sets.T[l][:, i]

    return _simulate_members(model, sets, x0_of, t_end, quad, cfg)


def averaged_fundamental(model, sets, direction="forward", quad=None, cfg=None):
    """Ensemble average of scaled zero-input trajectories.

    Member ``(i, l, m)`` starts at ``c_m T_l e_i`` (relative to the
    equilibrium) and contributes ``x(t)/c_m (T_l e_i)'``.  For linear
    systems this is exactly the fundamental matrix.

    Raises
    ------
    NonFiniteState
        A member left the region of attraction or blew up in finite time;
        ``exc.member`` holds the offending ``(i, l, m)`` indices.
    """
    quad = quad or QuadratureConfig()
    cfg = cfg or IntegratorConfig()
    runs = _state_runs(model, sets, direction, quad, cfg)
    eq = model.equilibrium
    values = _average(runs, sets, model.n, quad.nodes, lambda tr: tr.states - eq)
    sign = 1.0 if direction == "forward" else -1.0
    return AveragedFundamental(times=sign * quad.grid, values=values, sets=sets)


def nonlinear_controllability(model, sets, quad=None, cfg=None, cond_limit=COND_LIMIT):
    """Controllability gramian from the backward averaged fundamental solution.

    Integrates ``<Theta(-tau)>^-1 B(-tau) B(-tau)' <Theta(-tau)>^-T`` over
    ``[0, horizon]``.

    Raises
    ------
    IllConditioned
        ``<Theta(-tau)>`` is not safely invertible at some node.
    NonFiniteState
        A backward member solution does not exist on ``[-horizon, 0]``.
    """
    quad = quad or QuadratureConfig()
    avg = averaged_fundamental(model, sets, "backward", quad, cfg)
    n = model.n
    integrand = np.empty((quad.nodes, n, n))
    conds = np.empty(quad.nodes)
    for j, t in enumerate(avg.times):
        try:
            inv = conditioned_inverse(avg.values[j], cond_limit, time=t)
        except IllConditioned as exc:
            raise IllConditioned(
                f"averaged fundamental solution not invertible at tau={-t:g}: {exc}", cond=exc.cond, time=-t
            ) from exc
        conds[j] = np.linalg.cond(avg.values[j])
        GB = inv @ model.input_map(t)
        integrand[j] = GB @ GB.T
    return Gramian.from_matrix(
        _integrate_nodes(integrand, quad),
        "nonlinear-P",
        horizon=quad.horizon,
        quadrature=quad.tag,
        set_summary=sets.summary(),
        diagnostics={"times": quad.grid, "integrand_norm": _node_norms(integrand), "cond": conds},
    )


def nonlinear_observability(model, sets, quad=None, cfg=None):
    """Observability gramian ``int z(t)' z(t) dt`` with ``z`` the averaged output response."""
    quad = quad or QuadratureConfig()
    cfg = cfg or IntegratorConfig()
    runs = _state_runs(model, sets, "forward", quad, cfg)
    y_eq = model.output(0.0, model.equilibrium)
    z = _average(runs, sets, model.n, quad.nodes, lambda tr: tr.outputs - y_eq)
    integrand = np.einsum("tqi,tqj->tij", z, z)
    return Gramian.from_matrix(
        _integrate_nodes(integrand, quad),
        "nonlinear-Q",
        horizon=quad.horizon,
        quadrature=quad.tag,
        set_summary=sets.summary(),
        diagnostics={"times": quad.grid, "integrand_norm": _node_norms(integrand)},
    )


# --------------------------------------------------------------------------
# bilinear and linear closed forms


def bilinear_input_term(model, M, normalize=True):
    """``sum_m v_m v_m'`` with ``v_m = sum_k (c_m/2)^k N^k B``.

    The series stops at the nilpotency index of ``N``.  ``normalize``
    divides by ``s = len(M)``, matching the ``1/(s c^2)`` weighting of the
    impulse-response gramian (the ``c^2`` already cancels).
    """
    M = [float(c) for c in np.atleast_1d(M)]
    BB = np.zeros((model.nb, model.nb))
    for c in M:
        v = model.impulse_jump(c) / c
        BB += np.outer(v, v)
    return BB / len(M) if normalize else BB


def _bilinear_summary(M, normalize):
    return f"M={[float(c) for c in np.atleast_1d(M)]}; normalize={bool(normalize)}"


def bilinear_controllability(model, M, normalize=True):
    """Controllability gramian of a bilinear system under impulses of sizes ``M``."""
    P = solve_lyapunov(model.Ahat, bilinear_input_term(model, M, normalize))
    return Gramian.from_matrix(P, "bilinear-P", set_summary=_bilinear_summary(M, normalize))


def bilinear_gramians(model, M, normalize=True):
    """Gramians of a bilinear system under impulses of sizes ``M``.

    Both solve Lyapunov equations; the observability gramian ignores ``N``
    since zero-input responses are linear.
    """
    P = bilinear_controllability(model, M, normalize)
    Q = solve_lyapunov(model.Ahat.T, np.outer(model.Chat, model.Chat))
    return P, Gramian.from_matrix(Q, "bilinear-Q", set_summary=_bilinear_summary(M, normalize))


def linear_part_gramians(model):
    """Lyapunov gramians of ``(Ahat, Bhat, Chat)`` alone."""
    P = solve_lyapunov(model.Ahat, np.outer(model.Bhat, model.Bhat))
    Q = solve_lyapunov(model.Ahat.T, np.outer(model.Chat, model.Chat))
    return Gramian.from_matrix(P, "lti-P"), Gramian.from_matrix(Q, "lti-Q")


def lti_gramians(A, B, C):
    A = np.asarray(A, float)
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    C = np.asarray(C, float).reshape(-1, A.shape[0])
    return (
        Gramian.from_matrix(solve_lyapunov(A, B @ B.T), "lti-P"),
        Gramian.from_matrix(solve_lyapunov(A.T, C.T @ C), "lti-Q"),
    )
