"""Exact and randomized evaluation of ``A = F^T K^{-1} F``.

The exact paths solve one system per scenario. The estimators solve one
system per probing vector ``v_i``:

* trace:    ``tr(A) ~ 1/N sum_i v_i^T A v_i``
* diagonal: ``diag(A) ~ 1/N sum_i D_{v_i} A v_i``

Gradients are returned with respect to the densities ``rho``; pass a
``DensityField`` as ``chain`` to have them mapped back to the design ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .fem import GlobalSystem, GroundMesh, assemble_and_factorize, element_energies, solve_multi
from .probing import ProbingSet, make_probes, next_pow2
from .simp import DEFAULT_X_MIN, DensityField, FilterMatrix, backprop_chain, forward_chain
from .stats import stats

__all__ = [
    "StaleCacheError",
    "DegenerateCorrectionError",
    "SolveCache",
    "CorrectionFactors",
    "RatioSamples",
    "exact_solutions",
    "exact_compliances",
    "exact_mean_and_grad",
    "exact_weighted_grad",
    "compliance_matrix",
    "estimate_mean_and_grad",
    "estimate_diag",
    "grad_weighted_compliances",
    "centered_diag_estimate",
    "cluster_scenarios",
    "clustered_diag_estimate",
    "correction_factors",
    "sample_correcting_ratios",
]


class StaleCacheError(RuntimeError):
    """A solve cache was used with a system other than the one that filled it."""


class DegenerateCorrectionError(ZeroDivisionError):
    """An estimated statistic is zero, so no correcting ratio exists."""


@dataclass
class SolveCache:
    """Solutions ``r_i = K^{-1} F v_i`` kept from a value pass."""

    R: np.ndarray
    probes: ProbingSet
    stamp: int
    T: np.ndarray | None = None

    def check(self, system: GlobalSystem) -> None:
        if system.stamp != self.stamp:
            raise StaleCacheError("solve cache belongs to a different design; re-run the value pass")


def _to_design(g: np.ndarray, chain: DensityField | None) -> np.ndarray:
    return g if chain is None else backprop_chain(chain, g)


def _check_probes(F: np.ndarray, probes: ProbingSet) -> None:
    if probes.L != F.shape[1]:
        raise ValueError(f"probes have {probes.L} rows but F has {F.shape[1]} scenarios")


# exact paths ----------------------------------------------------------------

def exact_solutions(F: np.ndarray, system: GlobalSystem) -> np.ndarray:
    """Displacements ``u_i = K^{-1} f_i`` for every scenario (L solves)."""
    return solve_multi(system, F)


def exact_compliances(F: np.ndarray, system: GlobalSystem) -> np.ndarray:
    U = exact_solutions(F, system)
    return np.einsum("ij,ij->j", F, U)


def exact_mean_and_grad(F: np.ndarray, system: GlobalSystem,
                        chain: DensityField | None = None) -> tuple[float, np.ndarray]:
    L = F.shape[1]
    U = exact_solutions(F, system)
    mu = float(np.einsum("ij,ij->", F, U) / L)
    g = -element_energies(system.mesh, U) / L
    return mu, _to_design(g, chain)


def exact_weighted_grad(w: np.ndarray, U: np.ndarray, mesh: GroundMesh,
                        chain: DensityField | None = None) -> np.ndarray:
    """Gradient of ``C^T w`` from cached exact displacements (no solves)."""
    g = -element_energies(mesh, U * np.asarray(w)[None, :], U)
    return _to_design(g, chain)


def compliance_matrix(F: np.ndarray, system: GlobalSystem) -> np.ndarray:
    """Dense ``A = F^T K^{-1} F`` (L solves); for diagnostics on small cases."""
    U = exact_solutions(F, system)
    A = F.T @ U
    return 0.5 * (A + A.T)


# estimators ------------------------------------------------------------------

def estimate_mean_and_grad(F: np.ndarray, system: GlobalSystem, probes: ProbingSet,
                           chain: DensityField | None = None) -> tuple[float, np.ndarray, SolveCache]:
    """Trace estimate of the mean compliance and its gradient (N solves)."""
    _check_probes(F, probes)
    L, N = probes.L, probes.N
    B = F @ probes.V
    R = solve_multi(system, B)
    mu = float(np.einsum("ij,ij->", B, R) / (L * N))
    g = -element_energies(system.mesh, R) / (L * N)
    return mu, _to_design(g, chain), SolveCache(R, probes, system.stamp)


def estimate_diag(F: np.ndarray, system: GlobalSystem,
                  probes: ProbingSet) -> tuple[np.ndarray, SolveCache]:
    """Diagonal estimate of the per-scenario compliances (N solves)."""
    _check_probes(F, probes)
    R = solve_multi(system, F @ probes.V)
    C_hat = np.sum(probes.V * (F.T @ R), axis=1) / probes.N
    return C_hat, SolveCache(R, probes, system.stamp)


def grad_weighted_compliances(w: np.ndarray, cache: SolveCache, F: np.ndarray,
                              system: GlobalSystem,
                              chain: DensityField | None = None) -> np.ndarray:
    """Gradient of ``C_hat^T w`` by one extra solve per probe (N solves).

    ``t_i = K^{-1} F D_w v_i`` and ``d(C_hat^T w)/d rho_e = -1/N sum_i t_i^T K_e r_i``.
    """
    cache.check(system)
    w = np.asarray(w, dtype=float).ravel()
    V = cache.probes.V
    if w.shape != (V.shape[0],):
        raise ValueError(f"weights have shape {w.shape}, expected ({V.shape[0]},)")
    T = solve_multi(system, F @ (w[:, None] * V))
    cache.T = T
    g = -element_energies(system.mesh, cache.R, T) / V.shape[1]
    return _to_design(g, chain)


def centered_diag_estimate(F: np.ndarray, system: GlobalSystem, probes: ProbingSet) -> np.ndarray:
    """Diagonal estimate after centering the loads on their mean (N + 1 solves).

    ``C_i = f~_i^T K^-1 f~_i + 2 f~_i^T q + mu_f^T q`` with ``q = K^-1 mu_f``;
    only the first term is estimated.
    """
    if F.shape[1] < 2:
        raise ValueError("centering needs at least two scenarios")
    mu_f = F.mean(axis=1)
    Ft = F - mu_f[:, None]
    d_hat, _ = estimate_diag(Ft, system, probes)
    q = solve_multi(system, mu_f)
    return d_hat + 2.0 * (Ft.T @ q) + float(mu_f @ q)


def cluster_scenarios(F: np.ndarray, max_cluster_size: int) -> list[np.ndarray]:
    """Group scenarios by load norm into contiguous runs of at most ``max_cluster_size``."""
    if max_cluster_size < 1:
        raise ValueError("cluster size must be at least 1")
    order = np.argsort(np.linalg.norm(F, axis=0), kind="stable")
    return [order[i:i + max_cluster_size] for i in range(0, order.size, max_cluster_size)]


def clustered_diag_estimate(F: np.ndarray, system: GlobalSystem, clusters: list[np.ndarray],
                            n_probes: int, kind: str = "hadamard", seed: int | None = 0) -> np.ndarray:
    """Run the diagonal estimator per cluster and scatter back to scenario order.

    Each cluster uses ``min(n_probes, next_pow2(size))`` Hadamard probes (or
    ``n_probes`` Rademacher probes), so single-scenario clusters are exact.
    """
    C_hat = np.empty(F.shape[1])
    for idx in clusters:
        size = len(idx)
        n = n_probes
        if kind == "hadamard":
            n = min(n_probes, next_pow2(size))
        est, _ = estimate_diag(F[:, idx], system, make_probes(kind, size, n, seed))
        C_hat[idx] = est
    return C_hat


# bias correction -------------------------------------------------------------

@dataclass(frozen=True)
class CorrectionFactors:
    """Exact-to-estimated ratios of the mean and std at a reference design."""

    gamma_mean: float
    gamma_std: float
    x0: np.ndarray | None = None

    @classmethod
    def identity(cls) -> "CorrectionFactors":
        return cls(1.0, 1.0)

    def corrected(self, mu_hat: float, sigma_hat: float, m: float = 2.0) -> float:
        return self.gamma_mean * mu_hat + m * self.gamma_std * sigma_hat


def _ratios(C: np.ndarray, C_hat: np.ndarray) -> tuple[float, float]:
    exact, est = stats(C), stats(C_hat)
    # "zero" relative to the compliance scale; exact zeros do not survive rounding
    tiny = 1e-10 * max(np.abs(C).max(), np.abs(C_hat).max())
    if not abs(est.mu) > tiny:
        raise DegenerateCorrectionError("estimated mean compliance is zero")
    if not est.sigma > tiny:
        raise DegenerateCorrectionError("estimated compliance std is zero")
    return exact.mu / est.mu, exact.sigma / est.sigma


def correction_factors(x0: np.ndarray, mesh: GroundMesh, filt: FilterMatrix, F: np.ndarray,
                       probes: ProbingSet, p: float = 1.0, beta: float = 0.0,
                       x_min: float = DEFAULT_X_MIN) -> tuple[CorrectionFactors, GlobalSystem]:
    """Correcting ratios from one exact (L solves) and one estimated (N solves) pass at ``x0``.

    The assembled system is returned so callers can audit its solve count.
    """
    field = forward_chain(x0, filt, p, beta, x_min)
    system = assemble_and_factorize(mesh, field.rho)
    C = exact_compliances(F, system)
    C_hat, _ = estimate_diag(F, system, probes)
    gm, gs = _ratios(C, C_hat)
    return CorrectionFactors(gm, gs, np.array(x0, dtype=float)), system


@dataclass(frozen=True)
class RatioSamples:
    """Exact/estimated ratios of the mean and std over sampled designs."""

    mean: np.ndarray
    std: np.ndarray


def sample_correcting_ratios(mesh: GroundMesh, F: np.ndarray, probes: ProbingSet, n_designs: int,
                             mean: float, sd: float = 0.2, seed: int | None = 0,
                             x_min: float = DEFAULT_X_MIN) -> RatioSamples:
    """Correcting ratios at random density fields.

    Element densities are drawn from a normal(mean, sd) truncated to [0, 1]
    and floored at ``x_min``.
    """
    if not 0 < mean < 1:
        raise ValueError(f"mean density must lie in (0, 1), got {mean}")
    _check_probes(F, probes)
    rng = np.random.default_rng(seed)
    lo, hi = (0.0 - mean) / sd, (1.0 - mean) / sd
    mean_r, std_r = np.empty(n_designs), np.empty(n_designs)
    for k in range(n_designs):
        rho = scipy.stats.truncnorm.rvs(lo, hi, loc=mean, scale=sd, size=mesh.n_elements,
                                        random_state=rng)
        system = assemble_and_factorize(mesh, np.maximum(rho, x_min))
        C = exact_compliances(F, system)
        C_hat, _ = estimate_diag(F, system, probes)
        mean_r[k], std_r[k] = _ratios(C, C_hat)
    return RatioSamples(mean_r, std_r)
