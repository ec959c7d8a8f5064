"""Method of Moving Asymptotes for box-constrained problems.

Solves ``min f(x)  s.t.  g_j(x) <= 0,  lb <= x <= ub``. Each iteration builds
the convex separable MMA approximation around the current point and solves
it through its concave dual, whose variables are the constraint multipliers.
With a single constraint the dual optimum is the root of a monotone scalar
function; otherwise the dual is maximized with L-BFGS-B on ``lambda >= 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

__all__ = [
    "MmaError",
    "MmaParams",
    "MmaResult",
    "kkt_residual_scaled",
    "mma_solve",
]

log = logging.getLogger(__name__)

ValueGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class MmaError(RuntimeError):
    """The optimizer cannot continue (dual failure or non-finite values). ``x`` is the last iterate."""

    def __init__(self, message: str, x: np.ndarray, iteration: int):
        super().__init__(message)
        self.x = x
        self.iteration = iteration


@dataclass
class MmaParams:
    s_init: float = 0.5
    s_incr: float = 1.1
    s_decr: float = 0.7
    max_iters: int = 1000
    move: float = 0.5
    albefa: float = 0.1
    raa0: float = 1e-5
    asy_min: float = 1e-6
    asy_max: float = 1.0
    s_max: float = 100.0
    dual_tol: float = 1e-12
    xtol: float = 0.0
    scale_objective: bool = True
    record_trace: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.s_decr < 1 < self.s_incr:
            raise ValueError("asymptote factors need 0 < s_decr < 1 < s_incr")
        if self.s_init <= 0:
            raise ValueError("s_init must be positive")


@dataclass
class MmaResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    multipliers: np.ndarray
    kkt: float
    iterations: int
    evaluations: int
    converged: bool
    history: list[dict] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)


def kkt_residual_scaled(grad_L: np.ndarray, multipliers: np.ndarray, s_max: float = 100.0) -> float:
    """Dual infeasibility ``||grad_L||_inf / s_d`` with ``s_d = max(s_max, mean|lambda|) / s_max``."""
    grad_L = np.asarray(grad_L, dtype=float)
    lam = np.abs(np.asarray(multipliers, dtype=float))
    mean_lam = float(lam.mean()) if lam.size else 0.0
    s_d = max(s_max, mean_lam) / s_max
    return float(np.max(np.abs(grad_L), initial=0.0) / s_d)


def _kkt(x, df, g, dg, lam, lb, ub, s_max) -> float:
    grad_L = df + dg.T @ lam
    # bound multipliers only where a bound is active and the gradient pushes into it
    at_lb = x <= lb
    at_ub = x >= ub
    z_lb = np.where(at_lb, np.maximum(grad_L, 0.0), 0.0)
    z_ub = np.where(at_ub, np.maximum(-grad_L, 0.0), 0.0)
    r = grad_L - z_lb + z_ub
    mult = np.concatenate([lam, z_lb[at_lb], z_ub[at_ub]])
    s_d = max(s_max, float(np.abs(mult).mean()) if mult.size else 0.0) / s_max
    dual = kkt_residual_scaled(r, mult, s_max)
    feas = float(np.max(g, initial=0.0))
    compl = float(np.max(np.abs(lam * g), initial=0.0)) / s_d
    return max(dual, feas, compl)


def _approx_terms(dfun: np.ndarray, x, low, upp, xrange, raa0):
    """MMA coefficients ``p`` and ``q`` for gradient rows ``dfun`` (m x n)."""
    ux2 = (upp - x) ** 2
    xl2 = (x - low) ** 2
    pos = np.maximum(dfun, 0.0)
    neg = np.maximum(-dfun, 0.0)
    reg = raa0 / xrange
    P = ux2 * (1.001 * pos + 0.001 * neg + reg)
    Q = xl2 * (0.001 * pos + 1.001 * neg + reg)
    return P, Q


class _Subproblem:
    def __init__(self, p0, q0, r0, P, Q, r, low, upp, alpha, beta):
        self.p0, self.q0, self.r0 = p0, q0, r0
        self.P, self.Q, self.r = P, Q, r
        self.low, self.upp = low, upp
        self.alpha, self.beta = alpha, beta

    def x_of(self, lam: np.ndarray) -> np.ndarray:
        pp = self.p0 + lam @ self.P
        qq = self.q0 + lam @ self.Q
        sp, sq = np.sqrt(pp), np.sqrt(qq)
        x = (sp * self.low + sq * self.upp) / (sp + sq)
        return np.clip(x, self.alpha, self.beta)

    def constraints(self, x: np.ndarray) -> np.ndarray:
        return self.r + self.P @ (1.0 / (self.upp - x)) + self.Q @ (1.0 / (x - self.low))

    def objective(self, x: np.ndarray) -> float:
        return float(self.r0 + self.p0 @ (1.0 / (self.upp - x)) + self.q0 @ (1.0 / (x - self.low)))

    def dual(self, lam: np.ndarray) -> tuple[float, np.ndarray]:
        x = self.x_of(lam)
        gt = self.constraints(x)
        return self.objective(x) + float(lam @ gt), gt

    def solve(self, tol: float) -> tuple[np.ndarray, np.ndarray]:
        m = self.P.shape[0]
        if m == 0:
            lam = np.zeros(0)
            return self.x_of(lam), lam
        if m == 1:
            return self._solve_scalar(tol)
        res = scipy.optimize.minimize(
            lambda l: tuple(-v for v in self.dual(l)), np.zeros(m), jac=True, method="L-BFGS-B",
            bounds=[(0.0, None)] * m, options={"ftol": 1e-15, "gtol": tol, "maxiter": 10000})
        if not np.all(np.isfinite(res.x)):
            raise RuntimeError(f"dual solver failed: {res.message}")
        lam = np.maximum(res.x, 0.0)
        return self.x_of(lam), lam

    def _solve_scalar(self, tol: float) -> tuple[np.ndarray, np.ndarray]:
        def h(l: float) -> float:
            return float(self.constraints(self.x_of(np.array([l])))[0])

        if h(0.0) <= 0.0:
            lam = np.zeros(1)
            return self.x_of(lam), lam
        hi = 1.0
        while h(hi) > 0.0:
            hi *= 4.0
            if hi > 1e30:
                # constraint cannot be met inside the move limits: take the least violating point
                lam = np.array([hi])
                return self.x_of(lam), lam
        root = scipy.optimize.brentq(h, 0.0, hi, xtol=tol * max(1.0, hi) * 1e-3, rtol=1e-15, maxiter=500)
        lam = np.array([root])
        return self.x_of(lam), lam


def mma_solve(objective: ValueGrad, x0: np.ndarray, constraints: Sequence[ValueGrad] = (),
              params: MmaParams | None = None, tol: float = 1e-4, lb: float | np.ndarray = 0.0,
              ub: float | np.ndarray = 1.0,
              callback: Callable[[int, np.ndarray, float], None] | None = None) -> MmaResult:
    """Minimize ``objective`` subject to ``constraints <= 0`` inside the box.

    ``objective`` and each constraint return ``(value, gradient)``. Iteration
    stops when the scaled KKT residual drops to ``tol`` or after
    ``params.max_iters`` subproblems. With ``scale_objective`` the objective is
    divided by ``|f(x0)|`` when that exceeds one. Constraints are left
    unscaled and reported values are unscaled.
    """
    params = params or MmaParams()
    x = np.clip(np.asarray(x0, dtype=float).copy(), lb, ub)
    n = x.size
    lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
    ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
    xrange = np.maximum(ub - lb, 1e-12)
    m = len(constraints)

    evaluations = 0
    it = 0

    def evaluate(xk):
        nonlocal evaluations
        evaluations += 1
        f, df = objective(xk)
        gs, dgs = [], []
        for c in constraints:
            gv, dgv = c(xk)
            gs.append(gv)
            dgs.append(np.asarray(dgv, dtype=float))
        g = np.array(gs, dtype=float)
        dg = np.array(dgs, dtype=float).reshape(m, n)
        df = np.asarray(df, dtype=float)
        if not (np.isfinite(f) and np.all(np.isfinite(df)) and np.all(np.isfinite(g))
                and np.all(np.isfinite(dg))):
            raise MmaError(f"non-finite function value or gradient at evaluation {evaluations}",
                           xk.copy(), it)
        return float(f), df, g, dg

    f, df, g, dg = evaluate(x)
    scale = 1.0
    # only shrink large objectives; dividing by a near-zero value would swamp raa0
    if params.scale_objective and abs(f) > 1.0:
        scale = 1.0 / abs(f)
    lam = np.zeros(m)
    history = [{"iter": 0, "f": f, "g": g.tolist(), "kkt": float("nan"), "change": float("nan")}]
    trace: list[dict] = []
    kkt = float("inf")
    converged = False
    x1 = x2 = None
    low = upp = None
    while it < params.max_iters:
        it += 1
        fs, dfs = f * scale, df * scale
        if it <= 2:
            low = x - params.s_init * xrange
            upp = x + params.s_init * xrange
        else:
            sign = (x - x1) * (x1 - x2)
            factor = np.ones(n)
            factor[sign > 0] = params.s_incr
            factor[sign < 0] = params.s_decr
            low = x - factor * (x1 - low)
            upp = x + factor * (upp - x1)
            low = np.clip(low, x - params.asy_max * xrange, x - params.asy_min * xrange)
            upp = np.clip(upp, x + params.asy_min * xrange, x + params.asy_max * xrange)
        alpha = np.maximum.reduce([lb, low + params.albefa * (x - low), x - params.move * xrange])
        beta = np.minimum.reduce([ub, upp - params.albefa * (upp - x), x + params.move * xrange])

        p0, q0 = _approx_terms(dfs[None, :], x, low, upp, xrange, params.raa0)
        p0, q0 = p0[0], q0[0]
        r0 = fs - p0 @ (1.0 / (upp - x)) - q0 @ (1.0 / (x - low))
        if m:
            P, Q = _approx_terms(dg, x, low, upp, xrange, params.raa0)
            r = g - P @ (1.0 / (upp - x)) - Q @ (1.0 / (x - low))
        else:
            P = Q = np.zeros((0, n))
            r = np.zeros(0)
        sub = _Subproblem(p0, q0, r0, P, Q, r, low, upp, alpha, beta)
        try:
            x_new, lam = sub.solve(params.dual_tol)
        except (RuntimeError, ValueError, FloatingPointError) as exc:
            raise MmaError(f"MMA subproblem {it} failed: {exc}", x.copy(), it) from exc
        if params.record_trace:
            trace.append({"x": x.copy(), "low": low.copy(), "upp": upp.copy(), "sub": sub,
                          "x_new": x_new.copy(), "lam": lam.copy()})

        x2, x1 = x1, x.copy()
        x = x_new
        f, df, g, dg = evaluate(x)
        change = float(np.max(np.abs(x - x1)))
        kkt = _kkt(x, df * scale, g, dg, lam, lb, ub, params.s_max)
        history.append({"iter": it, "f": f, "g": g.tolist(), "kkt": kkt, "change": change})
        if callback is not None:
            callback(it, x, f)
        log.debug("mma it=%d f=%.6g kkt=%.3e change=%.3e", it, f, kkt, change)
        if kkt <= tol or change <= params.xtol:
            converged = True
            break

    return MmaResult(x=x, f=f, g=g, multipliers=lam, kkt=kkt, iterations=it,
                     evaluations=evaluations, converged=converged, history=history, trace=trace)
