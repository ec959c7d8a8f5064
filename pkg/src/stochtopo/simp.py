"""Design chain x -> rho: density filter, power penalty, interpolation, projection.

The order is filter, penalty, interpolation, projection::

    y = A x
    z = y ** p
    w = (1 - x_min) z + x_min
    rho = H_beta(w),  H_beta(v) = 1 - exp(-beta v) + v exp(-beta)

``H_0`` is the identity, so a continuation in ``beta`` starts from the
unprojected problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import GroundMesh

__all__ = [
    "FilterMatrix",
    "DensityField",
    "build_filter",
    "heaviside",
    "heaviside_derivative",
    "forward_chain",
    "backprop_chain",
    "volume_fraction",
]

DEFAULT_X_MIN = 0.001


@dataclass(frozen=True)
class FilterMatrix:
    """Row-stochastic density filter ``A`` with linear hat weights."""

    A: sp.csr_matrix
    radius: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def __matmul__(self, x):
        return self.A @ x


def build_filter(mesh: GroundMesh, radius: float) -> FilterMatrix:
    """Hat-weight filter: ``w_ej = max(0, radius - |c_e - c_j|)``, rows normalized.

    A radius below one element side leaves only the element itself, i.e. the
    identity.
    """
    if radius < 0:
        raise ValueError(f"filter radius must be non-negative, got {radius}")
    n = mesh.n_elements
    if radius <= 1.0:
        return FilterMatrix(sp.identity(n, format="csr"), float(radius))

    nx, ny = mesh.nx, mesh.ny
    ei, ej = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ei, ej = ei.ravel(), ej.ravel()
    reach = int(np.ceil(radius))
    rows, cols, vals = [], [], []
    for di in range(-reach, reach + 1):
        for dj in range(-reach, reach + 1):
            wt = radius - np.hypot(di, dj)
            if wt <= 0:
                continue
            ni, nj = ei + di, ej + dj
            ok = (ni >= 0) & (ni < nx) & (nj >= 0) & (nj < ny)
            rows.append(np.flatnonzero(ok))
            cols.append(ni[ok] * ny + nj[ok])
            vals.append(np.full(ok.sum(), wt))
    W = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    rowsum = np.asarray(W.sum(axis=1)).ravel()
    A = sp.diags(1.0 / rowsum) @ W
    return FilterMatrix(A.tocsr(), float(radius))


def heaviside(v: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0:
        return np.array(v, dtype=float, copy=True)
    return 1.0 - np.exp(-beta * v) + v * np.exp(-beta)


def heaviside_derivative(v: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0:
        return np.ones_like(v, dtype=float)
    return beta * np.exp(-beta * v) + np.exp(-beta)


@dataclass
class DensityField:
    """Pseudo-densities together with the intermediate chain values.

    ``filtered``, ``penalized`` and ``interpolated`` are kept so that
    :func:`backprop_chain` can apply the chain rule without recomputation.
    """

    x: np.ndarray
    rho: np.ndarray
    filtered: np.ndarray | None
    penalized: np.ndarray | None
    interpolated: np.ndarray | None
    filt: FilterMatrix | None
    p: float
    beta: float
    x_min: float

    @classmethod
    def from_rho(cls, rho: np.ndarray) -> "DensityField":
        """Wrap raw densities that did not come out of the chain (no backprop)."""
        rho = np.asarray(rho, dtype=float)
        return cls(x=rho.copy(), rho=rho, filtered=None, penalized=None, interpolated=None,
                   filt=None, p=1.0, beta=0.0, x_min=float(rho.min()) if rho.size else 0.0)


def forward_chain(x: np.ndarray, filt: FilterMatrix, p: float = 1.0, beta: float = 0.0,
                  x_min: float = DEFAULT_X_MIN) -> DensityField:
    if p < 1:
        raise ValueError(f"penalty must be >= 1, got {p}")
    if beta < 0:
        raise ValueError(f"projection sharpness must be >= 0, got {beta}")
    if not 0 < x_min < 1:
        raise ValueError(f"x_min must lie in (0, 1), got {x_min}")
    x = np.asarray(x, dtype=float)
    if x.shape != (filt.n,):
        raise ValueError(f"design has shape {x.shape}, filter expects ({filt.n},)")
    y = np.asarray(filt.A @ x).ravel()
    # rows of A sum to one, so y stays in [0, 1] up to rounding
    y = np.clip(y, 0.0, 1.0)
    z = y**p
    w = (1.0 - x_min) * z + x_min
    rho = heaviside(w, beta)
    return DensityField(x=x.copy(), rho=rho, filtered=y, penalized=z, interpolated=w,
                        filt=filt, p=float(p), beta=float(beta), x_min=float(x_min))


def backprop_chain(field: DensityField, dF_drho: np.ndarray) -> np.ndarray:
    """Map a gradient with respect to ``rho`` to one with respect to ``x``."""
    if field.filtered is None or field.interpolated is None or field.filt is None:
        raise ValueError("density field carries no chain state; rebuild it with forward_chain")
    g = np.asarray(dF_drho, dtype=float)
    if g.shape != field.rho.shape:
        raise ValueError(f"gradient has shape {g.shape}, expected {field.rho.shape}")
    g = g * heaviside_derivative(field.interpolated, field.beta)
    g = g * (1.0 - field.x_min)
    g = g * field.p * field.filtered ** (field.p - 1.0)
    return np.asarray(field.filt.A.T @ g).ravel()


def volume_fraction(x: np.ndarray, filt: FilterMatrix) -> tuple[float, np.ndarray]:
    """Mean filtered density and its gradient with respect to ``x``."""
    n = filt.n
    y = np.asarray(filt.A @ x).ravel()
    grad = np.asarray(filt.A.T @ np.full(n, 1.0 / n)).ravel()
    return float(y.mean()), grad
