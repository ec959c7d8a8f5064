"""Continuation SIMP: a sequence of MMA solves with rising penalty, then projection."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mma import MmaError, MmaParams, MmaResult, ValueGrad, mma_solve

__all__ = ["ContinuationSchedule", "StageRecord", "ContinuationError", "continuation_run"]


class ContinuationError(RuntimeError):
    """An optimizer failure annotated with the stage it happened in."""

    def __init__(self, message: str, stage: int, p: float, beta: float, x: np.ndarray):
        super().__init__(message)
        self.stage, self.p, self.beta, self.x = stage, p, beta, x


@dataclass(frozen=True)
class ContinuationSchedule:
    """Stages ``(p, beta)`` with one KKT tolerance per stage."""

    stages: tuple[tuple[float, float], ...]
    tolerances: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("schedule needs at least one stage")
        if len(self.tolerances) != len(self.stages):
            raise ValueError("one tolerance per stage is required")
        if any(t <= 0 for t in self.tolerances):
            raise ValueError("tolerances must be positive")
        if any(b > a for a, b in zip(self.tolerances, self.tolerances[1:])):
            raise ValueError("tolerances must not increase")
        ps = [s[0] for s in self.stages]
        betas = [s[1] for s in self.stages]
        if any(b < a for a, b in zip(ps, ps[1:])) or any(b < a for a, b in zip(betas, betas[1:])):
            raise ValueError("penalty and projection values must be non-decreasing")
        # projection only starts once the penalty has reached its final value
        for p, beta in self.stages:
            if beta > 0 and p != ps[-1]:
                raise ValueError("projection stages must use the final penalty")

    def __len__(self) -> int:
        return len(self.stages)

    @classmethod
    def build(cls, p_start: float = 1.0, p_end: float = 6.0, p_step: float = 0.5,
              beta_start: float = 0.0, beta_end: float = 20.0, beta_step: float = 4.0,
              tol_start: float = 1e-3, tol_end: float = 1e-4) -> "ContinuationSchedule":
        """Penalty stages at ``beta_start``, then projection stages at ``p_end``.

        Tolerances decrease geometrically from ``tol_start`` to ``tol_end``.
        A zero ``beta_step`` (or ``beta_end <= beta_start``) drops the projection stages.
        """
        n_p = int(round((p_end - p_start) / p_step)) + 1 if p_step > 0 else 1
        ps = [p_start + k * p_step for k in range(n_p)]
        stages = [(p, beta_start) for p in ps]
        if beta_step > 0 and beta_end > beta_start:
            n_b = int(round((beta_end - beta_start) / beta_step)) + 1
            stages += [(ps[-1], beta_start + k * beta_step) for k in range(n_b)]
        n = len(stages)
        tols = np.geomspace(tol_start, tol_end, n) if n > 1 else np.array([tol_end])
        return cls(tuple(stages), tuple(float(t) for t in tols))

    @classmethod
    def single(cls, p: float = 1.0, beta: float = 0.0, tol: float = 1e-4) -> "ContinuationSchedule":
        return cls(((p, beta),), (tol,))


@dataclass
class StageRecord:
    p: float
    beta: float
    tol: float
    iterations: int
    evaluations: int
    converged: bool
    kkt: float
    f: float
    solves: int
    wall_time: float
    history: list[dict] = field(default_factory=list)


ProblemFactory = Callable[[float, float], "tuple[ValueGrad, Sequence[ValueGrad]]"]


def continuation_run(problem: ProblemFactory, x0: np.ndarray, schedule: ContinuationSchedule,
                     params: MmaParams | None = None,
                     solve_count: Callable[[], int] | None = None) -> tuple[np.ndarray, list[StageRecord]]:
    """Run one MMA solve per stage, warm-starting each from the previous result.

    ``problem(p, beta)`` returns ``(objective, constraints)`` for that stage.
    ``solve_count`` reports the cumulative number of linear solves so that
    every stage record carries its own cost.
    """
    params = params or MmaParams()
    x = np.asarray(x0, dtype=float).copy()
    records: list[StageRecord] = []
    for k, ((p, beta), tol) in enumerate(zip(schedule.stages, schedule.tolerances)):
        objective, constraints = problem(p, beta)
        before = solve_count() if solve_count else 0
        t0 = time.perf_counter()
        try:
            res: MmaResult = mma_solve(objective, x, constraints, params, tol=tol)
        except MmaError as exc:
            raise ContinuationError(f"stage {k} (p={p}, beta={beta}): {exc}", k, p, beta, exc.x) from exc
        except (RuntimeError, ArithmeticError) as exc:
            # failures inside the callbacks, e.g. a singular stiffness matrix
            raise ContinuationError(f"stage {k} (p={p}, beta={beta}): {exc}", k, p, beta,
                                    x.copy()) from exc
        x = res.x
        records.append(StageRecord(
            p=p, beta=beta, tol=tol, iterations=res.iterations, evaluations=res.evaluations,
            converged=res.converged, kkt=res.kkt, f=res.f,
            solves=(solve_count() - before) if solve_count else 0,
            wall_time=time.perf_counter() - t0, history=res.history))
    return x, records
