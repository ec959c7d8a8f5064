"""Experiment drivers: optimization runs, estimator accuracy profiles and ratio samples."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import estimators as est
from .config import PROBE_KINDS, RunConfig
from .continuation import ContinuationSchedule, StageRecord, continuation_run
from .fem import GroundMesh, assemble_and_factorize, cantilever_mesh
from .probing import ProbingSet, make_probes
from .problem import ScenarioProblem, solves_per_evaluation
from .scenarios import LoadScenarioSet, import_scenarios, sample_scenarios
from .simp import FilterMatrix, build_filter
from .stats import stats

__all__ = [
    "ComplianceReport",
    "RunSetup",
    "setup",
    "run",
    "accuracy_profile",
    "ratio_histograms",
    "write_pgm",
]

log = logging.getLogger(__name__)

DEFAULT_MEANS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass
class RunSetup:
    """Everything built from a config before optimization starts."""

    config: RunConfig
    mesh: GroundMesh
    filt: FilterMatrix
    scenarios: LoadScenarioSet
    probes: ProbingSet


def setup(config: RunConfig) -> RunSetup:
    mesh = cantilever_mesh(config.nx, config.ny, config.E, config.nu, config.thickness)
    filt = build_filter(mesh, config.filter_radius)
    if config.scenario_file:
        scen = import_scenarios(config.scenario_file)
        if scen.n_dofs != mesh.n_dofs:
            raise ValueError(f"scenario file has {scen.n_dofs} dofs, mesh has {mesh.n_dofs}")
    else:
        scen = sample_scenarios(mesh, config.R, config.L, seed=config.scenario_seed)
    probes = make_probes(config.probe_kind, scen.L, config.N, config.probe_seed)
    return RunSetup(config, mesh, filt, scen, probes)


@dataclass
class ComplianceReport:
    """Final-design statistics, solve audit and per-stage history of one run.

    ``exact`` always holds statistics from one exact evaluation of the final
    design. ``approx`` holds the estimator's own values at the final design
    (empty for the exact method); for ``diag_corrected`` it also carries the
    corrected values.
    """

    method: str
    objective: str
    m: float
    L: int
    N: int
    C: list[float]
    exact: dict[str, float]
    approx: dict[str, float | None]
    correction: dict[str, float] | None
    volume: float
    solves: dict[str, int]
    stages: list[dict[str, Any]]
    converged: bool
    wall_time: float
    config: dict[str, Any] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return _clean(asdict(self))

    def without_timing(self) -> dict[str, Any]:
        """Report contents with every wall-time field removed (for determinism checks)."""
        d = self.to_json_dict()
        d.pop("wall_time")
        for s in d["stages"]:
            s.pop("wall_time", None)
        return d

    def table_row(self) -> dict[str, Any]:
        """One row in the layout of a results table."""
        a = self.approx
        return {
            "method": self.method, "objective": self.objective, "L": self.L,
            "N": self.N if self.method != "exact" else "",
            "mu_exact": self.exact["mu"], "sigma_exact": self.exact["sigma"],
            "C_max": self.exact["C_max"], "C_min": self.exact["C_min"],
            "mu_approx": _blank(a.get("mu")), "sigma_approx": _blank(a.get("sigma")),
            "mu_corrected": _blank(a.get("mu_corrected")),
            "sigma_corrected": _blank(a.get("sigma_corrected")),
            "V": self.volume, "wall_time_s": self.wall_time, "solves": self.solves["total"],
        }


def _blank(v):
    return "" if v is None else v


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _schedule(config: RunConfig) -> ContinuationSchedule:
    return ContinuationSchedule.build(
        p_start=config.p_start, p_end=config.p_end, p_step=config.p_step,
        beta_start=config.beta_start, beta_end=config.beta_end, beta_step=config.beta_step,
        tol_start=config.tol_start, tol_end=config.tol_end)


def run(config: RunConfig, output_dir: str | Path | None = None,
        rs: RunSetup | None = None) -> ComplianceReport:
    """Continuation run for ``config``; writes artifacts when ``output_dir`` is given.

    Artifacts: ``report.json``, ``report.csv`` (one table row), ``history.csv``
    (one line per MMA iteration), ``density.csv`` and ``density.pgm`` (final
    pseudo-densities, ``ny`` rows with the top edge first).
    """
    t0 = time.perf_counter()
    rs = rs or setup(config)
    mesh, filt, F, probes = rs.mesh, rs.filt, rs.scenarios.F, rs.probes
    L, N = F.shape[1], probes.N
    problem = ScenarioProblem(mesh, filt, F, x_min=config.x_min,
                              volume_fraction=config.volume_fraction)

    corr = None
    correction_solves = 0
    refreshes = 0

    def measure_correction(x: np.ndarray, p: float, beta: float) -> None:
        nonlocal corr, correction_solves
        corr, csys = est.correction_factors(x, mesh, filt, F, probes, p, beta,
                                            x_min=config.x_min)
        correction_solves += csys.solve_counter

    if config.method == "diag_corrected":
        # reference design is the full ground mesh
        measure_correction(np.ones(mesh.n_elements), 1.0, 0.0)

    x0 = np.full(mesh.n_elements, config.x_init)
    current = {"x": x0, "stage": -1}

    def factory(p: float, beta: float):
        nonlocal refreshes
        current["stage"] += 1
        k = config.correction_refresh
        if corr is not None and k and current["stage"] and current["stage"] % k == 0:
            measure_correction(current["x"], p, beta)
            refreshes += 1

        def objective(x):
            current["x"] = x
            e = problem.evaluate(x, p, beta, config.objective, config.method, probes,
                                 config.m, corr)
            return e.value, e.grad
        return objective, [problem.volume_constraint]

    schedule = _schedule(config)
    x, records = continuation_run(factory, x0, schedule, config.mma_params(),
                                  solve_count=lambda: problem.solves)
    optimization_solves = problem.solves
    last = problem.last

    p_final, beta_final = schedule.stages[-1]
    before = problem.solves
    C, s = problem.exact_statistics(x, p_final, beta_final)
    report_solves = problem.solves - before

    approx: dict[str, float | None] = {}
    if config.method != "exact" and last is not None:
        approx = {"mu": last.mu, "sigma": last.sigma if math.isfinite(last.sigma) else None,
                  "objective": last.value}
        if corr is not None:
            approx["mu_corrected"] = corr.gamma_mean * last.mu
            approx["sigma_corrected"] = (corr.gamma_std * last.sigma
                                         if math.isfinite(last.sigma) else None)
    exact_value = s.mu + (config.m * s.sigma if config.objective == "mean_std" else 0.0)

    per_eval = solves_per_evaluation(config.method, config.objective, L, N)
    corrections = 1 + refreshes if config.method == "diag_corrected" else 0
    predicted = problem.evaluations * per_eval + L + corrections * (L + N)
    solves = {
        "optimization": optimization_solves,
        "evaluations": problem.evaluations,
        "per_evaluation": per_eval,
        "correction": correction_solves,
        "report": report_solves,
        "total": optimization_solves + correction_solves + report_solves,
        "predicted": predicted,
    }
    field_final = problem.field(x, p_final, beta_final)
    report = ComplianceReport(
        method=config.method, objective=config.objective, m=config.m, L=L, N=N,
        C=C.tolist(), exact={**s.as_dict(), "objective": exact_value},
        approx=approx,
        correction=None if corr is None else {"gamma_mean": corr.gamma_mean,
                                              "gamma_std": corr.gamma_std,
                                              "measurements": corrections},
        volume=problem.volume(x)[0], solves=solves,
        stages=[_stage_dict(r) for r in records],
        converged=all(r.converged for r in records),
        wall_time=time.perf_counter() - t0, config=config.to_dict())

    if output_dir is not None:
        _write_artifacts(Path(output_dir), report, records, field_final.rho, mesh)
    return report


def _stage_dict(r: StageRecord) -> dict[str, Any]:
    return {"p": r.p, "beta": r.beta, "tol": r.tol, "iterations": r.iterations,
            "evaluations": r.evaluations, "converged": r.converged, "kkt": r.kkt, "f": r.f,
            "solves": r.solves, "wall_time": r.wall_time}


def _density_grid(rho: np.ndarray, mesh: GroundMesh) -> np.ndarray:
    # element (i, j) sits at column i, row j counted from the bottom
    return rho.reshape(mesh.nx, mesh.ny).T[::-1]


def write_pgm(path: str | Path, grid: np.ndarray) -> None:
    """Plain (P2) grayscale image, 0 = void, 255 = solid."""
    levels = np.clip(np.rint(np.asarray(grid) * 255), 0, 255).astype(int)
    h, w = levels.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(map(str, row)) for row in levels]
    Path(path).write_text("\n".join(lines) + "\n")


def _write_artifacts(out: Path, report: ComplianceReport, records: Sequence[StageRecord],
                     rho: np.ndarray, mesh: GroundMesh) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
    row = report.table_row()
    _write_rows(out / "report.csv", list(row), [row])
    hist = []
    for k, r in enumerate(records):
        for h in r.history:
            hist.append({"stage": k, "p": r.p, "beta": r.beta, "iter": h["iter"], "f": h["f"],
                         "volume_gap": h["g"][0] if h["g"] else "", "kkt": h["kkt"],
                         "change": h["change"]})
    _write_rows(out / "history.csv",
                ["stage", "p", "beta", "iter", "f", "volume_gap", "kkt", "change"], hist)
    grid = _density_grid(rho, mesh)
    np.savetxt(out / "density.csv", grid, delimiter=",", fmt="%.17g")
    write_pgm(out / "density.pgm", grid)


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[dict[str, Any]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header))
        w.writeheader()
        for r in rows:
            w.writerow(r)


def accuracy_profile(config: RunConfig, N_list: Sequence[int],
                     kinds: Sequence[str] = PROBE_KINDS, output: str | Path | None = None,
                     rs: RunSetup | None = None) -> list[dict[str, Any]]:
    """Estimated mean and std against the exact values at the full ground mesh.

    One row per ``(kind, N)`` plus a row of kind ``exact``. Hadamard ``N``
    beyond the Sylvester order raises ``ValueError``.
    """
    rs = rs or setup(config)
    F = rs.scenarios.F
    L = F.shape[1]
    system = assemble_and_factorize(rs.mesh, np.ones(rs.mesh.n_elements))
    exact = stats(est.exact_compliances(F, system))
    rows = [{"kind": "exact", "N": L, "mu": exact.mu, "sigma": exact.sigma,
             "mu_exact": exact.mu, "sigma_exact": exact.sigma}]
    for kind in kinds:
        for N in N_list:
            probes = make_probes(kind, L, int(N), config.probe_seed)
            C_hat, _ = est.estimate_diag(F, system, probes)
            s = stats(C_hat)
            rows.append({"kind": kind, "N": int(N), "mu": s.mu, "sigma": s.sigma,
                         "mu_exact": exact.mu, "sigma_exact": exact.sigma})
    if output is not None:
        output = Path(output)
        output.parent.mkdir(parents=True, exist_ok=True)
        _write_rows(output, list(rows[0]), rows)
    return rows


def ratio_histograms(config: RunConfig, means: Sequence[float] = DEFAULT_MEANS,
                     n_designs: int = 100, sd: float = 0.2, output_dir: str | Path | None = None,
                     rs: RunSetup | None = None) -> dict[float, est.RatioSamples]:
    """Exact-to-estimated ratio samples at random designs, one CSV per mean density."""
    for mean in means:
        if not 0 < mean < 1:
            raise ValueError(f"mean density must lie in (0, 1), got {mean}")
    rs = rs or setup(config)
    out: dict[float, est.RatioSamples] = {}
    for k, mean in enumerate(means):
        out[mean] = est.sample_correcting_ratios(
            rs.mesh, rs.scenarios.F, rs.probes, n_designs, mean, sd=sd,
            seed=config.scenario_seed + k, x_min=config.x_min)
    if output_dir is not None:
        d = Path(output_dir)
        d.mkdir(parents=True, exist_ok=True)
        for mean, r in out.items():
            rows = [{"design": i, "mean_ratio": a, "std_ratio": b}
                    for i, (a, b) in enumerate(zip(r.mean, r.std))]
            _write_rows(d / f"ratios_mean_{mean:g}.csv", ["design", "mean_ratio", "std_ratio"],
                        rows)
    return out
