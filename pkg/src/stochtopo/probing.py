"""Probing vectors with entries in {-1, +1}."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProbingSet",
    "rademacher_probes",
    "hadamard_probes",
    "make_probes",
    "sylvester_hadamard",
    "next_pow2",
]


@dataclass(frozen=True)
class ProbingSet:
    """``L x N`` matrix of probes, one probe per column."""

    V: np.ndarray
    kind: str
    seed: int | None = None

    @property
    def L(self) -> int:
        return self.V.shape[0]

    @property
    def N(self) -> int:
        return self.V.shape[1]

    def subset(self, rows: np.ndarray) -> "ProbingSet":
        """Probes restricted to a subset of scenarios (rows)."""
        return ProbingSet(self.V[np.asarray(rows)], self.kind, self.seed)


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


def sylvester_hadamard(order: int) -> np.ndarray:
    """Sylvester Hadamard matrix, ``H_2k = [[H_k, H_k], [H_k, -H_k]]``."""
    if order < 1 or order & (order - 1):
        raise ValueError(f"Sylvester order must be a power of two, got {order}")
    H = np.ones((1, 1), dtype=np.int8)
    while H.shape[0] < order:
        H = np.block([[H, H], [H, -H]])
    return H


def rademacher_probes(L: int, N: int, seed: int | None = 0) -> ProbingSet:
    if L < 1 or N < 1:
        raise ValueError("need L >= 1 and N >= 1")
    rng = np.random.default_rng(seed)
    V = rng.choice(np.array([-1.0, 1.0]), size=(L, N))
    return ProbingSet(V, "rademacher", seed)


def hadamard_probes(L: int, N: int, order: np.ndarray | None = None) -> ProbingSet:
    """First ``N`` columns of ``H_M`` truncated to ``L`` rows, ``M = next_pow2(L)``.

    ``order`` optionally permutes the columns of ``H_M`` before the first
    ``N`` are taken.
    """
    if L < 1 or N < 1:
        raise ValueError("need L >= 1 and N >= 1")
    M = next_pow2(L)
    if N > M:
        raise ValueError(f"at most {M} Hadamard probes exist for L={L}, requested {N}")
    H = sylvester_hadamard(M)
    if order is not None:
        order = np.asarray(order)
        if sorted(order.tolist()) != list(range(M)):
            raise ValueError(f"column order must be a permutation of range({M})")
        H = H[:, order]
    return ProbingSet(H[:L, :N].astype(float), "hadamard")


def make_probes(kind: str, L: int, N: int, seed: int | None = 0) -> ProbingSet:
    if kind == "hadamard":
        return hadamard_probes(L, N)
    if kind == "rademacher":
        return rademacher_probes(L, N, seed)
    raise ValueError(f"unknown probe kind {kind!r}")
