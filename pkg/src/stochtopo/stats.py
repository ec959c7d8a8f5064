"""Statistics of the per-scenario compliance vector and their partials."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "DegenerateStatisticError",
    "ComplianceStats",
    "stats",
    "stat_partials",
    "mean_std_objective",
]


class DegenerateStatisticError(ValueError):
    """The standard deviation is zero, so its gradient does not exist."""


@dataclass(frozen=True)
class ComplianceStats:
    mu: float
    var: float
    sigma: float
    C_max: float
    C_min: float
    L: int

    def as_dict(self) -> dict:
        return asdict(self)


def stats(C: np.ndarray) -> ComplianceStats:
    """Mean, sample variance (``1/(L-1)``), sample std, max and min.

    For ``L == 1`` the variance and std are reported as NaN.
    """
    C = np.asarray(C, dtype=float).ravel()
    L = C.size
    if L == 0:
        raise ValueError("empty compliance vector")
    mu = float(C.mean())
    if L >= 2:
        var = float(np.sum((C - mu) ** 2) / (L - 1))
        sigma = float(np.sqrt(var))
    else:
        var = sigma = float("nan")
    return ComplianceStats(mu=mu, var=var, sigma=sigma, C_max=float(C.max()),
                           C_min=float(C.min()), L=L)


def stat_partials(C: np.ndarray, which: str) -> np.ndarray:
    """Gradient of ``mean``, ``var`` or ``std`` with respect to each ``C_i``."""
    C = np.asarray(C, dtype=float).ravel()
    L = C.size
    if which == "mean":
        return np.full(L, 1.0 / L)
    if L < 2:
        raise ValueError(f"{which} needs at least two scenarios")
    dev = C - C.mean()
    if which == "var":
        return 2.0 * dev / (L - 1)
    if which == "std":
        sigma = np.sqrt(np.sum(dev**2) / (L - 1))
        if sigma == 0:
            raise DegenerateStatisticError("standard deviation is zero; its gradient is undefined")
        return dev / ((L - 1) * sigma)
    raise ValueError(f"unknown statistic {which!r}")


def mean_std_objective(C: np.ndarray, m: float = 2.0, gamma_mean: float = 1.0,
                       gamma_std: float = 1.0) -> tuple[float, np.ndarray]:
    """``gamma_mean * mu + m * gamma_std * sigma`` and its gradient in ``C``.

    Pass estimated compliances with correction ratios for the corrected
    estimator, or exact compliances with unit ratios.
    """
    if m < 0:
        raise ValueError(f"std multiplier must be non-negative, got {m}")
    C = np.asarray(C, dtype=float).ravel()
    s = stats(C)
    w = gamma_mean * stat_partials(C, "mean")
    value = gamma_mean * s.mu
    if m > 0:
        w = w + m * gamma_std * stat_partials(C, "std")
        value += m * gamma_std * s.sigma
    return float(value), w
