"""Reduction experiments: configuration, pipelines and RMS comparisons."""

import dataclasses
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .balancing import stability_check
from .carleman import bilinearize, output_jacobian, taylor_drift
from .estimator import BalancedTruncation
from .exceptions import ConfigError, EmbalanceError, GridMismatch, NumericalError
from .gramians import QuadratureConfig, bilinear_controllability, linear_part_gramians
from .io import dump_flat_toml, flatten, load_lti, read_toml, write_csv
from .models import BilinearModel, LTVModel, preset
from .ode import IntegratorConfig, integrate

__all__ = [
    "ExperimentConfig",
    "RmsReport",
    "PipelineResult",
    "rms_error",
    "run_pipeline",
    "compare_all",
    "PIPELINES",
    "COMPARED",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERICAL",
    "EXIT_UNSTABLE",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_UNSTABLE = 4

PIPELINES = ("full-nonlinear", "bilinear-full", "linear-part", "lall", "nonlinear-gramians", "ltv")
# curves of the comparison figure, after the nonlinear reference
COMPARED = ("bilinear-full", "linear-part", "lall", "nonlinear-gramians")
# reference each pipeline is judged against when reference = "default"
DEFAULT_REFERENCE = {
    "full-nonlinear": "bilinear",
    "bilinear-full": "nonlinear",
    "linear-part": "bilinear",
    "lall": "bilinear",
    "nonlinear-gramians": "nonlinear",
    "ltv": "nonlinear",
}


@dataclass
class ExperimentConfig:
    """Every knob of an experiment.  Round-trips through flat TOML keys."""

    model_preset: str = "rc-ladder"
    model_n: int = 30
    model_seed: int = 0
    model_file: str = ""
    pipeline: str = "nonlinear-gramians"
    order: int = 3
    horizon: float = 1.0
    samples: int = 1001
    input_amplitude: float = 1.0
    input_rate: float = 1.0
    sets_M: list = field(default_factory=lambda: [-5.0, -0.5, -1.0, -0.1, 0.1, 0.5, 1.0, 5.0])
    # "identity" or a list of orthogonal n x n matrices
    sets_T: object = "identity"
    nonlinear_M: list = field(
        default_factory=lambda: [-5e-14, -5e-15, -1e-14, -1e-15, 1e-15, 5e-15, 1e-14, 5e-14]
    )
    quadrature_horizon: float = 1.0
    quadrature_nodes: int = 1001
    quadrature_rule: str = "simpson"
    quadrature_backward_horizon: float = 0.16
    quadrature_backward_nodes: int = 161
    integrator_method: str = "rk45-adaptive"
    integrator_rtol: float = 1e-8
    integrator_atol: float = 1e-10
    integrator_step: float = 1e-3
    integrator_max_steps: int = 1_000_000
    bilinear_normalize: bool = True
    lall_route: str = "bilinear"
    lall_mean: str = "equilibrium"
    stability_samples: int = 5
    stability_amplitude: float = 1e-3
    stability_seed: int = 0
    cond_limit: float = 1e12
    reference: str = "default"
    write_gramians: bool = True
    out: str = "embalance-out"

    # ---- structured text --------------------------------------------------

    _SECTIONS = ("model", "sets", "nonlinear", "quadrature", "integrator", "bilinear", "lall", "input", "stability")

    @classmethod
    def _key_of(cls, name):
        head, _, tail = name.partition("_")
        return f"{head}.{tail}" if head in cls._SECTIONS and tail else name

    def to_flat(self):
        return {self._key_of(f.name): getattr(self, f.name) for f in dataclasses.fields(self)}

    def dumps(self):
        return dump_flat_toml(self.to_flat())

    def save(self, path):
        Path(path).write_text(self.dumps(), newline="\n")

    @classmethod
    def from_flat(cls, flat):
        names = {cls._key_of(f.name): f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(flat) - set(names))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for key, v in flat.items():
            name = names[key]
            if kinds[name] is float and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            elif kinds[name] is list:
                v = [float(x) for x in v]
            values[name] = v
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        return cls.from_flat(flatten(read_toml(path)))

    @classmethod
    def default(cls):
        """The canonical RC-ladder benchmark shipped with the package."""
        ref = resources.files("embalance") / "data" / "rc_ladder.toml"
        with resources.as_file(ref) as path:
            return cls.load(path)

    def replace(self, **changes):
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if self.reference not in ("default", "nonlinear", "bilinear"):
            raise ConfigError("reference must be 'default', 'nonlinear' or 'bilinear'")
        if self.lall_route not in ("bilinear", "empirical"):
            raise ConfigError("lall.route must be 'bilinear' or 'empirical'")
        if self.lall_mean not in ("equilibrium", "time-average"):
            raise ConfigError("lall.mean must be 'equilibrium' or 'time-average'")
        if self.order < 1 or self.samples < 2 or not self.horizon > 0:
            raise ConfigError("order >= 1, samples >= 2 and horizon > 0 are required")
        if not isinstance(self.sets_T, str):
            self.rotations()
        elif self.sets_T != "identity":
            raise ConfigError("sets.T must be 'identity' or a list of matrices")
        # constructing these validates them
        self.quadrature()
        self.backward_quadrature()
        self.integrator()
        return self

    # ---- derived objects --------------------------------------------------

    def quadrature(self):
        return QuadratureConfig(self.quadrature_horizon, self.quadrature_nodes, self.quadrature_rule)

    def backward_quadrature(self):
        return QuadratureConfig(
            self.quadrature_backward_horizon, self.quadrature_backward_nodes, self.quadrature_rule
        )

    def integrator(self):
        return IntegratorConfig(
            self.integrator_method,
            self.integrator_rtol,
            self.integrator_atol,
            self.integrator_step,
            self.integrator_max_steps,
        )

    def rotations(self):
        """``sets.T`` as a tuple of arrays, or None for the identity."""
        if isinstance(self.sets_T, str):
            return None
        try:
            return tuple(np.array(t, dtype=float) for t in self.sets_T)
        except ValueError as exc:
            raise ConfigError("sets.T entries must be square matrices") from exc

    def input_signal(self):
        a, r = self.input_amplitude, self.input_rate
        return lambda t: a * np.exp(-r * t)

    def build_model(self):
        if self.model_file:
            return load_lti(self.model_file)
        return preset(self.model_preset, n=self.model_n, seed=self.model_seed)


@dataclass(frozen=True)
class RmsReport:
    pipeline: str
    reference: str
    rms: float
    sample_count: int
    horizon: float

    def __post_init__(self):
        if not self.rms >= 0:
            raise ValueError("rms must be nonnegative")


def rms_error(ref, test, ref_grid=None, test_grid=None):
    """Root mean square of ``ref - test`` over all samples.

    If grids are given they must coincide.
    """
    if ref_grid is not None or test_grid is not None:
        if ref_grid is None or test_grid is None or len(ref_grid) != len(test_grid) or not np.allclose(
            ref_grid, test_grid, rtol=0, atol=1e-12
        ):
            raise GridMismatch("outputs are sampled on different grids")
    ref = np.asarray(ref, float)
    test = np.asarray(test, float)
    if ref.shape != test.shape:
        raise GridMismatch(f"output shapes differ: {ref.shape} vs {test.shape}")
    return float(np.sqrt(np.mean((ref - test) ** 2)))


# --------------------------------------------------------------------------
# pipelines


@dataclass
class PipelineResult:
    pipeline: str
    grid: np.ndarray = None
    output: np.ndarray = None
    reports: dict = field(default_factory=dict)
    stability: object = None
    hankel: np.ndarray = None
    error: str = ""
    error_kind: str = ""
    seconds: float = 0.0

    @property
    def ok(self):
        return not self.error

    @property
    def report(self):
        """The report against the pipeline's own reference."""
        return self.reports.get("primary")


class _Workspace:
    """Lazily computed objects shared between pipelines of one experiment."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.icfg = cfg.integrator()
        self.u = cfg.input_signal()
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def model(self):
        return self._get("model", self.cfg.build_model)

    @property
    def nonlinear_model(self):
        m = self.model
        return m.to_nonlinear() if isinstance(m, LTVModel) else m

    @property
    def bilinear(self):
        return self._get("bilinear", lambda: bilinearize(self.nonlinear_model, order=2))

    @property
    def linear_part(self):
        """Lyapunov gramians of the lifted ``(A, B, C)``, shared by two pipelines."""
        return self._get("linear_part", lambda: linear_part_gramians(self.bilinear))

    def simulate(self, model):
        N = self.cfg.samples - 1
        if isinstance(model, BilinearModel):
            return integrate(model.with_input(self.u), np.zeros(model.nb), None, 0.0, self.cfg.horizon, N, self.icfg)
        u = self.u
        return integrate(
            model, model.equilibrium, lambda t: np.full(model.p, u(t)), 0.0, self.cfg.horizon, N, self.icfg
        )

    def reference(self, name):
        if name == "nonlinear":
            return self._get("y_nonlinear", lambda: self.simulate(self.nonlinear_model))
        return self._get("y_bilinear", lambda: self.simulate(self.bilinear))


def _estimator(cfg, method, M=None):
    return BalancedTruncation(
        order=cfg.order,
        method=method,
        M=tuple(cfg.sets_M if M is None else M),
        T=cfg.rotations(),
        quadrature=cfg.quadrature(),
        backward_quadrature=cfg.backward_quadrature(),
        integrator=cfg.integrator(),
        normalize=cfg.bilinear_normalize,
        mean=cfg.lall_mean,
        cond_limit=cfg.cond_limit,
    )


def pipeline_gramians(ws, name):
    """Gramian pair of a reducing pipeline and the model it projects.

    Returns ``(estimator, model, (P, Q))``.
    """
    cfg = ws.cfg
    if name == "linear-part":
        return _estimator(cfg, "linear-part"), ws.bilinear, ws.linear_part
    if name == "lall" and cfg.lall_route == "bilinear":
        # N does not enter the observability gramian, so Q is the linear-part one
        P = bilinear_controllability(ws.bilinear, cfg.sets_M, cfg.bilinear_normalize)
        return _estimator(cfg, "lall"), ws.bilinear, (P, ws.linear_part[1])
    if name == "lall":
        est = _estimator(cfg, "lall", M=cfg.nonlinear_M)
        return est, ws.nonlinear_model, est._gramians(ws.nonlinear_model)
    if name == "nonlinear-gramians":
        est = _estimator(cfg, "nonlinear", M=cfg.nonlinear_M)
        return est, ws.nonlinear_model, est._gramians(ws.nonlinear_model)
    if name == "ltv":
        nl = ws.nonlinear_model
        lin = LTVModel.from_matrices(
            taylor_drift(nl, order=1).A1, nl.input_map(0.0), output_jacobian(nl), name=f"{nl.name}-linearized"
        )
        est = _estimator(cfg, "ltv")
        return est, nl, est._gramians(lin)
    raise ConfigError(f"pipeline {name!r} computes no gramians")


@dataclass
class PipelineResult:
    pipeline: str
    grid: np.ndarray = None
    output: np.ndarray = None
    reports: dict = field(default_factory=dict)
    stability: object = None
    hankel: np.ndarray = None
    stage: str = ""
    error: str = ""
    error_kind: str = ""
    seconds: float = 0.0

    @property
    def ok(self):
        return not self.error_kind

    @property
    def report(self):
        """The report against the pipeline's own reference."""
        return self.reports.get("primary")

    @property
    def exit_code(self):
        return {"": EXIT_OK, "config": EXIT_CONFIG, "numerical": EXIT_NUMERICAL, "unstable": EXIT_UNSTABLE}[
            self.error_kind
        ]


@contextmanager
def _stage(result, name):
    result.stage = name
    yield


def _error_kind(exc):
    if isinstance(exc, (ConfigError, GridMismatch)):
        return "config"
    if isinstance(exc, (NumericalError, FloatingPointError, np.linalg.LinAlgError)):
        return "numerical"
    return "numerical" if isinstance(exc, EmbalanceError) else ""


def _reference_of(cfg, name):
    return DEFAULT_REFERENCE[name] if cfg.reference == "default" else cfg.reference


def _write_gramian(gram, path):
    gram.to_csv(path.with_suffix(".csv"))
    d = gram.diagnostics
    if "integrand_norm" in d:
        cols = [d["times"], d["integrand_norm"]] + ([d["cond"]] if "cond" in d else [])
        header = ["t", "integrand_norm"] + (["cond"] if "cond" in d else [])
        write_csv(path.with_name(path.name + "_trace.csv"), header, np.column_stack(cols))


def _write_report(result, path):
    flat = {"pipeline": result.pipeline, "status": "ok" if result.ok else result.error_kind}
    if result.error:
        flat["stage"] = result.stage
        flat["error"] = result.error
    for key, rep in result.reports.items():
        flat[f"rms.{key}.reference"] = rep.reference
        flat[f"rms.{key}.value"] = rep.rms
        flat[f"rms.{key}.samples"] = rep.sample_count
        flat[f"rms.{key}.horizon"] = rep.horizon
    if result.hankel is not None:
        flat["hankel"] = [float(v) for v in result.hankel]
    if result.stability is not None:
        flat["stability.stable"] = result.stability.stable
        flat["stability.test"] = result.stability.test
        if np.isfinite(result.stability.detail):
            flat["stability.detail"] = result.stability.detail
    path.write_text(dump_flat_toml(flat), newline="\n")


def _execute(ws, name, result, outdir):
    cfg = ws.cfg
    with _stage(result, "model"):
        ws.model
    est = None
    if name in ("full-nonlinear", "bilinear-full"):
        with _stage(result, "simulate"):
            traj = ws.reference("nonlinear" if name == "full-nonlinear" else "bilinear")
    else:
        with _stage(result, "gramians"):
            est, model, (P, Q) = pipeline_gramians(ws, name)
        with _stage(result, "balance"):
            est.fit(model, gramians=(P, Q))
        result.hankel = est.hankel_singular_values_
        if outdir is not None:
            with _stage(result, "write"):
                if cfg.write_gramians:
                    _write_gramian(P, outdir / "P")
                    _write_gramian(Q, outdir / "Q")
                est.basis_.to_csv(outdir / "basis.csv")
        with _stage(result, "stability"):
            result.stability = stability_check(
                est.reduced_,
                horizon=cfg.horizon,
                samples=cfg.stability_samples,
                amplitude=cfg.stability_amplitude,
                seed=cfg.stability_seed,
                cfg=ws.icfg,
            )
        with _stage(result, "simulate"):
            traj = ws.simulate(est.reduced_.model)
    result.grid = traj.grid
    result.output = traj.outputs[:, 0]
    with _stage(result, "reference"):
        refs = {"primary": _reference_of(cfg, name), "nonlinear": "nonlinear"}
        ref_traj = {tag: ws.reference(tag) for tag in set(refs.values())}
    with _stage(result, "rms"):
        for key, tag in refs.items():
            ref = ref_traj[tag]
            rms = rms_error(ref.outputs[:, 0], result.output, ref.grid, traj.grid)
            result.reports[key] = RmsReport(name, tag, rms, len(traj.grid), cfg.horizon)
    if outdir is not None:
        with _stage(result, "write"):
            write_csv(
                outdir / "output.csv",
                ["t", "y", "y_nonlinear", "y_bilinear"] if "bilinear" in ref_traj else ["t", "y", "y_nonlinear"],
                np.column_stack(
                    [traj.grid, result.output]
                    + [ref_traj[tag].outputs[:, 0] for tag in ("nonlinear", "bilinear") if tag in ref_traj]
                ),
            )
            if traj.states.shape[1] <= 100:
                traj.to_csv(outdir / "trajectory.csv")
    if result.stability is not None and not result.stability.stable:
        result.error_kind = "unstable"
        result.error = f"reduced model failed the stability test: {result.stability}"


def run_pipeline(cfg, workspace=None, write=True):
    """Run ``cfg.pipeline`` end to end and write its artifacts.

    Artifacts go to ``<cfg.out>/<pipeline>/``.  Errors are caught and
    recorded on the result together with the failing stage; inspect
    ``result.exit_code``.
    """
    ws = workspace or _Workspace(cfg)
    name = cfg.pipeline
    result = PipelineResult(name)
    outdir = None
    if write:
        outdir = Path(cfg.out) / name
        outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        _execute(ws, name, result, outdir)
    except Exception as exc:
        kind = _error_kind(exc)
        if not kind:
            raise
        result.error_kind = kind
        result.error = f"{type(exc).__name__}: {exc}"
        logger.error("%s failed at stage %s: %s", name, result.stage, result.error)
    result.seconds = time.perf_counter() - start
    logger.info("%s finished in %.1f s (%s)", name, result.seconds, result.error_kind or "ok")
    if outdir is not None:
        _write_report(result, outdir / "report.toml")
    return result


COLUMN = {
    "bilinear-full": "y_bilinear",
    "linear-part": "y_linear_part",
    "lall": "y_lall",
    "nonlinear-gramians": "y_nonlinear_gramians",
}


def compare_all(cfg, write=True):
    """Nonlinear reference plus the four compared curves on one grid.

    Writes ``comparison.csv`` (``t`` and one column per curve) and
    ``rms.csv`` (one row per compared pipeline) to ``cfg.out``.  Returns
    ``(results, exit_code)``; the exit code is that of the first failing
    pipeline in fixed order.
    """
    ws = _Workspace(cfg)
    results = {}
    for name in COMPARED:
        results[name] = run_pipeline(cfg.replace(pipeline=name), workspace=ws, write=write)
    grid = np.linspace(0.0, cfg.horizon, cfg.samples)
    try:
        y_ref = ws.reference("nonlinear").outputs[:, 0]
    except EmbalanceError as exc:
        logger.error("nonlinear reference failed: %s", exc)
        y_ref = np.full(cfg.samples, np.nan)
    cols = [grid, y_ref] + [
        results[n].output if results[n].output is not None else np.full(cfg.samples, np.nan) for n in COMPARED
    ]
    code = next((r.exit_code for r in results.values() if r.exit_code), EXIT_OK)
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "comparison.csv", ["t", "y_nonlinear"] + [COLUMN[n] for n in COMPARED], np.column_stack(cols))
        lines = ["pipeline,reference,rms,rms_vs_nonlinear,status"]
        for n in COMPARED:
            r = results[n]
            primary, nl = r.reports.get("primary"), r.reports.get("nonlinear")
            lines.append(
                ",".join(
                    [
                        n,
                        _reference_of(cfg, n),
                        format(primary.rms, ".17g") if primary else "nan",
                        format(nl.rms, ".17g") if nl else "nan",
                        "ok" if r.ok else f"failed:{r.error_kind}",
                    ]
                )
            )
        (out / "rms.csv").write_text("\n".join(lines) + "\n", newline="\n")
    return results, code
