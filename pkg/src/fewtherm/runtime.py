"""Command implementations behind the CLI: simulate, verify, thermo, sweep and schema.

Each command takes a validated RunConfig, writes its artifacts into
``cfg.output.directory`` and returns ``(exit_code, payload)``; the payload is
the JSON document the CLI prints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import integrate

from . import config as cfgmod
from .context import use_numerics
from .distribution import compare_histogram
from .distribution import liouville_rate
from .distribution import pushforward_invariance
from .dynamics import EnsembleResult
from .dynamics import Trajectory
from .dynamics import TrajectorySummary
from .dynamics import project_batch
from .dynamics import run_ensemble
from .dynamics import run_flow
from .errors import EXIT_NUMERICAL
from .errors import EXIT_OK
from .errors import EXIT_VERIFICATION
from .errors import ConfigError
from .errors import FewthermError
from .errors import TrajectoryError
from .forces import constraint_terms
from .io import atomic_path
from .io import write_csv
from .io import write_json
from .io import write_jsonl
from .io import write_schema
from .phase_model import PhaseState
from .thermo import internal_energy
from .thermo import thermo_sweep

logger = logging.getLogger(__name__)

TRAJECTORY_CSV = "trajectory.csv"
PARTIAL_CSV = "trajectory.partial.csv"
SUMMARY_JSON = "summary.json"
SUMMARIES_JSONL = "summaries.jsonl"
VERIFY_JSON = "verify.json"
THERMO_CSV = "thermo.csv"
THERMO_JSON = "thermo.json"
SWEEP_CSV = "sweep.csv"
SWEEP_JSON = "sweep.json"
CONFIG_YAML = "config.yaml"


def _out(cfg: cfgmod.RunConfig, name: str) -> Path:
    return Path(cfg.output.directory) / name


def _write_config(cfg: cfgmod.RunConfig) -> None:
    path = _out(cfg, CONFIG_YAML)
    with atomic_path(path) as tmp:
        tmp.write_text(cfgmod.serialize_config(cfg))


def _stream(seed: int, key: int) -> np.random.Generator:
    """Independent generator for one part of a run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


# simulate ----------------------------------------------------------------------


def trajectory_header(n_dof: int) -> list[str]:
    """Fixed column order of trajectory CSVs."""
    return ["traj", "t", *(f"q{i}" for i in range(n_dof)), *(f"p{i}" for i in range(n_dof)), "H", "f", "Omega", "P"]


def _trajectory_rows(index: int, traj: Trajectory):
    for s in traj:
        yield [index, s.t, *s.state.q.tolist(), *s.state.p.tolist(), s.H, s.f, s.omega, s.power]


def _write_trajectories(path: Path, n_dof: int, indexed: list[tuple[int, Trajectory]]) -> None:
    rows = (row for i, traj in indexed for row in _trajectory_rows(i, traj))
    write_csv(path, trajectory_header(n_dof), rows)


def _summary(ensemble: EnsembleResult) -> dict[str, Any]:
    trajs = ensemble.trajectories
    abs_f = np.concatenate([np.abs(t.f) for t in trajs])
    return {
        "n_traj": len(trajs),
        "n_samples": int(abs_f.size),
        "mean_H": float(np.mean(ensemble.pooled_H)),
        "final_abs_f": float(max(abs(t.f[-1]) for t in trajs)),
        "max_constraint_drift": float(abs_f.max()),
        "drift": {"mean_abs_f": float(abs_f.mean()), "max_abs_f": float(abs_f.max())},
        "trajectories": [asdict(s) for s in ensemble.summaries],
    }


def _simulate_single(cfg: cfgmod.RunConfig) -> EnsembleResult:
    flow = cfgmod.build_flow(cfg)
    init = cfg.ensemble.initial_state
    q = np.asarray(init.q, dtype=float)
    p = project_batch(flow, q, np.asarray(init.p, dtype=float))
    traj = run_flow(flow, PhaseState(q=q, p=p), cfgmod.build_spec(cfg))
    return EnsembleResult(
        summaries=[TrajectorySummary(0, float(np.mean(traj.H)), float(np.max(np.abs(traj.f))), len(traj))],
        trajectories=[traj],
    )


def simulate(cfg: cfgmod.RunConfig) -> tuple[int, dict]:
    """Integrate the configured ensemble and write trajectory CSV, summary JSON and JSON-lines summaries."""
    model = cfgmod.build_model(cfg)
    try:
        if cfg.ensemble.initial_state is not None and cfg.ensemble.n_traj == 1:
            ensemble = _simulate_single(cfg)
        else:
            ensemble = run_ensemble(
                model,
                cfgmod.build_force(cfg),
                cfgmod.build_family(cfg.beta),
                cfgmod.build_sampler(cfg, model),
                cfgmod.build_spec(cfg),
                n_traj=cfg.ensemble.n_traj,
                seed=cfg.ensemble.seed,
                workers=cfg.ensemble.workers,
            )
    except TrajectoryError as e:
        done = [(s.index, t) for s, t in zip(e.completed.summaries, e.completed.trajectories)] if e.completed else []
        done.append((-1 if e.index is None else e.index, e.partial))
        done.sort(key=lambda it: it[0])
        _write_trajectories(_out(cfg, PARTIAL_CSV), model.n_dof, done)
        logger.warning("Wrote %d recorded trajectories to %s", len(done), _out(cfg, PARTIAL_CSV))
        raise
    _write_config(cfg)
    pairs = [(s.index, t) for s, t in zip(ensemble.summaries, ensemble.trajectories)]
    _write_trajectories(_out(cfg, TRAJECTORY_CSV), model.n_dof, pairs)
    summary = _summary(ensemble)
    write_jsonl(_out(cfg, SUMMARIES_JSONL), summary["trajectories"])
    write_json(_out(cfg, SUMMARY_JSON), summary)
    return EXIT_OK, {k: v for k, v in summary.items() if k != "trajectories"}


# verify ------------------------------------------------------------------------


@dataclass
class CheckResult:
    """Outcome of one verification check."""

    name: str
    asserted: bool = True
    passed: bool | None = None
    value: float | None = None
    tolerance: float | None = None
    details: dict[str, Any] = field(default_factory=dict)
    error: dict[str, Any] | None = None

    @property
    def failed(self) -> bool:  # noqa: D102
        return self.asserted and self.passed is not True


def _on_surface_states(cfg, flow, dm, n: int, key: int):
    sampler = cfgmod.build_sampler(cfg, flow.model, dm)
    q, p = sampler.draw(flow, n, _stream(cfg.ensemble.seed, key))
    return q, project_batch(flow, q, p)


def check_closure(cfg, flow, dm) -> CheckResult:
    """|P·dp/dt + Q·dq/dt| relative to 1 + |P||dp/dt| + |Q||dq/dt| at random on-surface states."""
    v = cfg.verify
    q, p = _on_surface_states(cfg, flow, dm, v.n_states, key=1)
    t = constraint_terms(flow.model, flow.force, flow.family, q, p)
    dq, dp = flow.rate(q, p)
    df = np.sum(t.P * dp, axis=-1) + np.sum(t.Q * dq, axis=-1)
    norm = lambda x: np.linalg.norm(x, axis=-1)  # noqa: E731
    rel = np.abs(df) / (1.0 + norm(t.P) * norm(dp) + norm(t.Q) * norm(dq))
    worst = float(rel.max())
    return CheckResult(
        "closure",
        passed=worst < v.closure_tol,
        value=worst,
        tolerance=v.closure_tol,
        details={"n_states": int(rel.size), "max_abs_f": float(np.max(np.abs(t.f)))},
    )


def _fermi_bose_report(fam, pairs) -> dict[str, Any]:
    """Compare the implemented β with the form exp(+β₀(H-μ)) in the denominator."""

    def x(E):
        return fam.beta0 * (E - fam.mu)

    def plus_form(E):
        with np.errstate(over="ignore"):
            return float(fam.beta0 / (1.0 + fam.a * np.exp(x(E))))

    worst = 0.0
    for e0, e1 in pairs:
        val, _ = integrate.quad(plus_form, e0, e1, epsabs=0.0, epsrel=1e-12, limit=200)
        ref = float(fam.B(e1) - fam.B(e0))
        worst = max(worst, abs(val - ref) / max(1.0, abs(ref)))
    E = np.unique(pairs.reshape(-1))
    # exp(-B)·(exp(x) + a) - 1, evaluated without overflow
    xs = x(E)
    ratio = np.exp(xs - np.asarray(fam.B(E), dtype=float)) * (1.0 + fam.a * np.exp(-xs))
    mismatch = float(np.max(np.abs(ratio - 1.0)))
    return {
        "implemented": "beta0 / (1 + a*exp(-beta0*(H - mu)))",
        "target_density": "1 / (exp(beta0*(H - mu)) + a)",
        "target_density_mismatch": mismatch,
        "exp_plus_form_antiderivative_mismatch": worst,
        "exp_plus_form_consistent": worst < 1e-8,
    }


def check_antiderivative(cfg, flow, dm) -> CheckResult:
    """∫β dH against B(H₁) - B(H₀) at random energy pairs inside the density's range."""
    v = cfg.verify
    rng = _stream(cfg.ensemble.seed, 2)
    families = {"beta": flow.family}
    if cfg.density.family is not None:
        families["density"] = dm.family
    lo, hi = dm.range.lo, dm.range.hi
    worst, details = 0.0, {}
    for role, fam in families.items():
        a = lo
        if fam.lower_bound >= a:
            a = fam.lower_bound + 1e-6 * (1.0 + abs(fam.lower_bound))
        pairs = np.sort(rng.uniform(a, hi, (v.n_states, 2)), axis=-1)
        err = 0.0
        for e0, e1 in pairs:
            val, _ = integrate.quad(lambda E: float(fam.beta(E)), e0, e1, epsabs=0.0, epsrel=1e-12, limit=200)
            ref = float(fam.B(e1) - fam.B(e0))
            err = max(err, abs(val - ref) / max(1.0, abs(ref)))
        details[role] = {"family": fam.kind, "max_error": err, "range": [a, hi]}
        if fam.kind == "fermi_bose":
            details[role]["fermi_bose"] = _fermi_bose_report(fam, pairs)
        worst = max(worst, err)
    return CheckResult(
        "antiderivative", passed=worst < v.antiderivative_tol, value=worst, tolerance=v.antiderivative_tol, details=details
    )


def check_stationarity(cfg, flow, dm) -> CheckResult:
    """Normalized Liouville residual of the density under the flow at random on-surface states."""
    v = cfg.verify
    q, p = _on_surface_states(cfg, flow, dm, v.n_states, key=3)
    rate, scale = liouville_rate(dm, flow, q, p)
    normalized = np.abs(rate) / np.maximum(1.0, scale)
    worst = float(normalized.max())
    return CheckResult(
        "stationarity",
        passed=worst < v.stationarity_tol,
        value=worst,
        tolerance=v.stationarity_tol,
        details={"n_states": int(normalized.size), "median": float(np.median(normalized))},
    )


def check_pushforward(cfg, flow, dm) -> CheckResult:
    """Two-sample KS of H before and after evolving sampler draws."""
    v = cfg.verify
    spec = cfgmod.build_spec(cfg)
    sampler = cfgmod.build_sampler(cfg, flow.model, dm)
    seed = int(_stream(cfg.ensemble.seed, 4).integers(2**63))
    cmp = pushforward_invariance(dm, flow, sampler, spec, v.pushforward_samples, v.pushforward_steps * spec.dt, seed)
    return CheckResult(
        "pushforward", passed=cmp.passed, value=cmp.ks_two_sample, tolerance=cmp.critical_value, details=cmp.to_dict()
    )


def check_histogram(cfg, flow, dm) -> CheckResult:
    """Pooled ensemble energies against ρ; reported only."""
    ensemble = run_ensemble(
        flow.model,
        flow.force,
        flow.family,
        cfgmod.build_sampler(cfg, flow.model, dm),
        cfgmod.build_spec(cfg),
        n_traj=cfg.ensemble.n_traj,
        seed=cfg.ensemble.seed,
        workers=cfg.ensemble.workers,
    )
    cmp = compare_histogram(dm, ensemble.pooled_H, cfg.verify.histogram_bins)
    return CheckResult("histogram", asserted=False, passed=cmp.passed(), value=cmp.ks_statistic, details=cmp.to_dict())


CHECKS = {
    "closure": check_closure,
    "antiderivative": check_antiderivative,
    "stationarity": check_stationarity,
    "pushforward": check_pushforward,
    "histogram": check_histogram,
}


def verify(cfg: cfgmod.RunConfig) -> tuple[int, dict]:
    """Run the enabled checks; each failure or error is recorded and the others still run."""
    enabled = [name for name in CHECKS if getattr(cfg.verify, name)]
    results: list[CheckResult] = []
    if enabled:
        model = cfgmod.build_model(cfg)
        flow = cfgmod.build_flow(cfg, model)
        dm = cfgmod.build_density_model(cfg, model)
        for name in enabled:
            try:
                res = CHECKS[name](cfg, flow, dm)
            except FewthermError as e:
                logger.warning("Check %s raised %s: %s", name, type(e).__name__, e)
                res = CheckResult(name, asserted=name != "histogram", passed=False, error=e.to_json())
            if res.failed:
                logger.warning("Check %s failed: value %s, tolerance %s", name, res.value, res.tolerance)
            results.append(res)
    report = {"passed": not any(r.failed for r in results), "checks": [asdict(r) for r in results]}
    if enabled:
        write_json(_out(cfg, VERIFY_JSON), report)
    return (EXIT_OK if report["passed"] else EXIT_VERIFICATION), report


# thermo ------------------------------------------------------------------------


def _path(cfg: cfgmod.RunConfig) -> list[dict[str, float]]:
    path = cfg.thermo.path()
    if not path:
        msg = "A sweep needs thermo.points, thermo.sweep or thermo.fixed"
        raise ConfigError(msg, field="thermo")
    return path


def thermo(cfg: cfgmod.RunConfig) -> tuple[int, dict]:
    """Evaluate U, X, S, Z along the sweep path of the density family and the first-law residuals."""
    path = _path(cfg)
    model = cfgmod.build_model(cfg)
    report = thermo_sweep(
        model,
        cfgmod.build_family(cfg.density_family),
        path,
        window=cfg.density.energy_window,
        T=cfg.thermo.temperature,
        maxwell_at=path[0] if cfg.thermo.maxwell else None,
        workers=cfg.ensemble.workers,
    )
    rows = report.rows()
    header = list(rows[0])
    write_csv(_out(cfg, THERMO_CSV), header, ([r[k] for k in header] for r in rows))
    res = report.residuals
    payload = {
        "points": [asdict(p) for p in report.points],
        "residuals": None
        if res is None
        else {
            "first_law": res.first_law,
            "relative": res.relative,
            "maxwell_params": list(res.maxwell_params),
            "maxwell_asymmetry": None if res.maxwell_asymmetry is None else res.maxwell_asymmetry.tolist(),
        },
    }
    write_json(_out(cfg, THERMO_JSON), payload)
    failed = [p for p in report.points if not p.ok]
    return (EXIT_NUMERICAL if failed else EXIT_OK), payload


# sweep -------------------------------------------------------------------------


def _sweep_point(cfg: cfgmod.RunConfig, x: dict[str, float]) -> dict[str, Any]:
    point = cfgmod.apply_point(cfg, x)
    model = cfgmod.build_model(point)
    dm = cfgmod.build_density_model(point, model)
    ensemble = run_ensemble(
        model,
        cfgmod.build_force(point),
        cfgmod.build_family(point.beta),
        cfgmod.build_sampler(point, model, dm),
        cfgmod.build_spec(point),
        n_traj=point.ensemble.n_traj,
        seed=point.ensemble.seed,
        workers=point.ensemble.workers,
    )
    mean_H = float(np.mean(ensemble.pooled_H))  # noqa: N806
    U = internal_energy(dm)  # noqa: N806
    return {"mean_H": mean_H, "U": U, "difference": mean_H - U, "n_samples": int(ensemble.pooled_H.size)}


def sweep(cfg: cfgmod.RunConfig) -> tuple[int, dict]:
    """Short ensemble at every sweep point: time-averaged H against the analytic U."""
    path = _path(cfg)
    params = list(dict.fromkeys(k for x in path for k in x))
    rows = []
    for x in path:
        row: dict[str, Any] = {k: x.get(k, math.nan) for k in params}
        try:
            row.update(_sweep_point(cfg, x))
        except ConfigError:
            raise
        except FewthermError as e:
            logger.warning("Sweep point %s failed: %s", x, e)
            row.update({"mean_H": math.nan, "U": math.nan, "difference": math.nan, "n_samples": 0, "error": e.to_json()})
        rows.append(row)
    header = [*params, "mean_H", "U", "difference", "n_samples"]
    write_csv(_out(cfg, SWEEP_CSV), header, ([r[k] for k in header] for r in rows))
    payload = {"points": rows}
    write_json(_out(cfg, SWEEP_JSON), payload)
    return (EXIT_NUMERICAL if any("error" in r for r in rows) else EXIT_OK), payload


# schema ------------------------------------------------------------------------


def schema_for_config() -> tuple[dict, dict]:
    """JSON Schema of RunConfig and the default document."""
    return cfgmod.RunConfig.model_json_schema(), cfgmod.default_config_dict()


def export_schema(prefix: str | Path) -> list[Path]:
    """Write the RunConfig schema and defaults next to ``prefix``."""
    schema, defaults = schema_for_config()
    return write_schema(prefix, schema, defaults)


COMMANDS = {"simulate": simulate, "verify": verify, "thermo": thermo, "sweep": sweep}


def run_command(name: str, cfg: cfgmod.RunConfig) -> tuple[int, dict]:
    """Run a command with the configuration's numerical settings active."""
    with use_numerics(cfg.numerics):
        return COMMANDS[name](cfg)
