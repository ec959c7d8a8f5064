"""Objective and constraint callbacks for the stochastic compliance problems.

``ScenarioProblem`` binds a mesh, filter and load matrix and evaluates the
mean or mean-std objective with one of three methods:

=================  =====================  ==========================
method             mean                   mean_std
=================  =====================  ==========================
``exact``          L solves               L solves
``trace``          N solves               (not available)
``diag_corrected`` N solves               2N solves
=================  =====================  ==========================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimators as est
from .fem import GroundMesh, assemble_and_factorize
from .probing import ProbingSet
from .simp import DEFAULT_X_MIN, DensityField, FilterMatrix, forward_chain, volume_fraction
from .stats import ComplianceStats, mean_std_objective, stats

__all__ = ["METHODS", "OBJECTIVES", "Evaluation", "ScenarioProblem", "solves_per_evaluation"]

METHODS = ("exact", "trace", "diag_corrected")
OBJECTIVES = ("mean", "mean_std")


def solves_per_evaluation(method: str, objective: str, L: int, N: int) -> int:
    """Linear solves for one value-and-gradient evaluation."""
    if method == "exact":
        return L
    if method == "trace" or objective == "mean":
        return N
    return 2 * N


@dataclass
class Evaluation:
    value: float
    grad: np.ndarray
    mu: float
    sigma: float
    solves: int


class ScenarioProblem:
    def __init__(self, mesh: GroundMesh, filt: FilterMatrix, F: np.ndarray,
                 x_min: float = DEFAULT_X_MIN, volume_fraction: float = 0.4) -> None:
        if F.shape[0] != mesh.n_dofs:
            raise ValueError(f"load matrix has {F.shape[0]} rows, mesh has {mesh.n_dofs} dofs")
        self.mesh = mesh
        self.filt = filt
        self.F = F
        self.x_min = x_min
        self.volfrac = volume_fraction
        self.solves = 0
        self.evaluations = 0
        self.last: Evaluation | None = None

    @property
    def L(self) -> int:
        return self.F.shape[1]

    def field(self, x: np.ndarray, p: float, beta: float) -> DensityField:
        return forward_chain(x, self.filt, p, beta, self.x_min)

    def _system(self, field: DensityField):
        return assemble_and_factorize(self.mesh, field.rho)

    def evaluate(self, x: np.ndarray, p: float, beta: float, objective: str = "mean",
                 method: str = "exact", probes: ProbingSet | None = None, m: float = 2.0,
                 corr: est.CorrectionFactors | None = None) -> Evaluation:
        """Objective value and design gradient at ``x`` for stage ``(p, beta)``."""
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {objective!r}")
        if method != "exact" and probes is None:
            raise ValueError(f"method {method!r} needs probing vectors")
        if method == "trace" and objective == "mean_std":
            raise ValueError("the trace estimator only provides the mean; use diag_corrected")
        corr = corr or est.CorrectionFactors.identity()

        field = self.field(x, p, beta)
        system = self._system(field)
        F = self.F
        sigma = float("nan")
        if method == "exact":
            if objective == "mean":
                mu, grad = est.exact_mean_and_grad(F, system, field)
                value = mu
            else:
                U = est.exact_solutions(F, system)
                C = np.einsum("ij,ij->j", F, U)
                value, w = mean_std_objective(C, m)
                grad = est.exact_weighted_grad(w, U, self.mesh, field)
                s = stats(C)
                mu, sigma = s.mu, s.sigma
        elif objective == "mean":
            mu, grad, _ = est.estimate_mean_and_grad(F, system, probes, field)
            if method == "diag_corrected":
                value, grad = corr.gamma_mean * mu, corr.gamma_mean * grad
            else:
                value = mu
        else:
            C_hat, cache = est.estimate_diag(F, system, probes)
            value, w = mean_std_objective(C_hat, m, corr.gamma_mean, corr.gamma_std)
            grad = est.grad_weighted_compliances(w, cache, F, system, field)
            s = stats(C_hat)
            mu, sigma = s.mu, s.sigma

        self.solves += system.solve_counter
        self.evaluations += 1
        self.last = Evaluation(float(value), grad, float(mu), float(sigma), system.solve_counter)
        return self.last

    def volume(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return volume_fraction(x, self.filt)

    def volume_constraint(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """``V(x) - volume_fraction <= 0``."""
        v, dv = self.volume(x)
        return v - self.volfrac, dv

    def exact_statistics(self, x: np.ndarray, p: float, beta: float) -> tuple[np.ndarray, ComplianceStats]:
        """Exact per-scenario compliances and their statistics (L solves)."""
        system = self._system(self.field(x, p, beta))
        C = est.exact_compliances(self.F, system)
        self.solves += system.solve_counter
        return C, stats(C)
