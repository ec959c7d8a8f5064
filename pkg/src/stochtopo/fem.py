"""Structured 2D plane-stress finite elements on a uniform grid of unit squares.

Nodes are numbered column by column: node ``(i, j)`` at coordinates ``(i, j)``
mm has index ``i * (ny + 1) + j``. Element ``(i, j)`` (lower-left node
``(i, j)``) has index ``i * ny + j`` and its nodes are listed counter-clockwise
starting from the lower-left corner. Node ``n`` owns dofs ``2n`` (x) and
``2n + 1`` (y).
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "AssemblyError",
    "GroundMesh",
    "GlobalSystem",
    "element_stiffness_q4",
    "cantilever_mesh",
    "assemble",
    "assemble_and_factorize",
    "solve_multi",
    "element_energies",
]

_system_ids = itertools.count()


class AssemblyError(RuntimeError):
    """Raised when the constrained stiffness matrix is not positive definite."""


def element_stiffness_q4(E: float = 1.0, nu: float = 0.3, thickness: float = 1.0) -> np.ndarray:
    """8x8 plane-stress stiffness of a bilinear quad on the unit square.

    Integrated with 2x2 Gauss quadrature, which is exact for the bilinear
    element on an undistorted square.
    """
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    if not thickness > 0:
        raise ValueError(f"thickness must be positive, got {thickness}")

    D = E / (1.0 - nu**2) * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])
    # reference corners in counter-clockwise order; unit square maps with J = I/2
    corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    g = 1.0 / np.sqrt(3.0)
    ke = np.zeros((8, 8))
    for xi, eta in itertools.product((-g, g), repeat=2):
        dN_dxi = 0.25 * corners[:, 0] * (1.0 + corners[:, 1] * eta)
        dN_deta = 0.25 * corners[:, 1] * (1.0 + corners[:, 0] * xi)
        # physical derivatives: dx/dxi = 1/2 on a unit square
        dN_dx, dN_dy = 2.0 * dN_dxi, 2.0 * dN_deta
        B = np.zeros((3, 8))
        B[0, 0::2] = dN_dx
        B[1, 1::2] = dN_dy
        B[2, 0::2] = dN_dy
        B[2, 1::2] = dN_dx
        ke += B.T @ D @ B * 0.25 * thickness  # det J = 1/4, unit weights
    return 0.5 * (ke + ke.T)


@dataclass
class GroundMesh:
    """Uniform ``nx`` by ``ny`` grid of 1 mm plane-stress quads."""

    nx: int
    ny: int
    fixed_dofs: np.ndarray
    E: float = 1.0
    nu: float = 0.3
    thickness: float = 1.0
    ke: np.ndarray = field(init=False, repr=False)
    edofs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError("mesh needs at least one element in each direction")
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        if self.fixed_dofs.size and (self.fixed_dofs.min() < 0 or self.fixed_dofs.max() >= self.n_dofs):
            raise ValueError("fixed dof index out of range")
        self.ke = element_stiffness_q4(self.E, self.nu, self.thickness)
        self.edofs = self._element_dofs()
        # COO pattern of the global matrix, one 8x8 block per element
        self._rows = np.repeat(self.edofs, 8, axis=1).ravel()
        self._cols = np.tile(self.edofs, (1, 8)).ravel()
        self._free = np.ones(self.n_dofs, dtype=bool)
        self._free[self.fixed_dofs] = False

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def free_mask(self) -> np.ndarray:
        return self._free

    def node_index(self, i: int, j: int) -> int:
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise ValueError(f"node ({i}, {j}) outside the {self.nx}x{self.ny} mesh")
        return i * (self.ny + 1) + j

    def node_coordinates(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1), indexing="ij")
        return np.column_stack([i.ravel(), j.ravel()]).astype(float)

    def element_centroids(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        return np.column_stack([i.ravel() + 0.5, j.ravel() + 0.5])

    def connectivity(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        n0 = (i * (self.ny + 1) + j).ravel()
        step = self.ny + 1
        return np.column_stack([n0, n0 + step, n0 + step + 1, n0 + 1])

    def boundary_nodes(self) -> np.ndarray:
        c = self.node_coordinates()
        on = (c[:, 0] == 0) | (c[:, 0] == self.nx) | (c[:, 1] == 0) | (c[:, 1] == self.ny)
        return np.flatnonzero(on)

    def _element_dofs(self) -> np.ndarray:
        nodes = self.connectivity()
        edofs = np.empty((self.n_elements, 8), dtype=np.int64)
        edofs[:, 0::2] = 2 * nodes
        edofs[:, 1::2] = 2 * nodes + 1
        return edofs


def cantilever_mesh(nx: int = 60, ny: int = 20, E: float = 1.0, nu: float = 0.3,
                    thickness: float = 1.0) -> GroundMesh:
    """Cantilever ground mesh clamped along the left edge ``x = 0``."""
    left = np.arange(ny + 1)  # nodes (0, j)
    fixed = np.concatenate([2 * left, 2 * left + 1])
    return GroundMesh(nx, ny, fixed, E=E, nu=nu, thickness=thickness)


def assemble(mesh: GroundMesh, rho: np.ndarray, constrain: bool = True) -> sp.csc_matrix:
    """Global stiffness ``sum_e rho_e K_e``.

    With ``constrain`` the rows and columns of fixed dofs are zeroed and a
    unit diagonal is placed on them.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.n_elements,):
        raise ValueError(f"expected {mesh.n_elements} densities, got shape {rho.shape}")
    vals = (rho[:, None] * mesh.ke.ravel()[None, :]).ravel()
    K = sp.coo_matrix((vals, (mesh._rows, mesh._cols)), shape=(mesh.n_dofs, mesh.n_dofs)).tocsc()
    if constrain and mesh.fixed_dofs.size:
        keep = sp.diags(mesh.free_mask.astype(float))
        K = (keep @ K @ keep + sp.diags((~mesh.free_mask).astype(float))).tocsc()
    K.sum_duplicates()
    return K


class GlobalSystem:
    """Factorized constrained stiffness matrix for one design.

    The factorization is reused for every right-hand side. ``solve_counter``
    counts solved right-hand-side columns and is the cost unit reported by
    every estimator.
    """

    def __init__(self, mesh: GroundMesh, rho: np.ndarray, K: sp.csc_matrix, lu) -> None:
        self.mesh = mesh
        self.rho = np.array(rho, dtype=float)
        self.K = K
        self._lu = lu
        self._lock = threading.Lock()
        self.solve_counter = 0
        self.stamp = next(_system_ids)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    def _count(self, k: int) -> None:
        with self._lock:
            self.solve_counter += k

    def solve(self, B: np.ndarray) -> np.ndarray:
        return solve_multi(self, B)


def assemble_and_factorize(mesh: GroundMesh, rho: np.ndarray) -> GlobalSystem:
    """Assemble ``K(rho)``, apply Dirichlet conditions and factorize.

    The factorization is a sparse LDL^T-type LU with a symmetric fill-reducing
    ordering and no pivoting; a non-positive pivot means K is not SPD.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
        raise AssemblyError("all element densities must be strictly positive")
    if not mesh.fixed_dofs.size:
        raise AssemblyError("no Dirichlet dofs: the stiffness matrix is singular")
    K = assemble(mesh, rho)
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise AssemblyError(f"factorization failed: {exc}") from exc
    d = lu.U.diagonal()
    # a pivot at rounding level means a zero-energy mode survived the constraints
    if np.any(d <= 0) or d.min() <= K.shape[0] * np.finfo(float).eps * d.max():
        raise AssemblyError("stiffness matrix is not positive definite; check the constraints")
    return GlobalSystem(mesh, rho, K, lu)


def solve_multi(system: GlobalSystem, B: np.ndarray) -> np.ndarray:
    """Solve ``K U = B`` for all columns of ``B``.

    Values of ``B`` at fixed dofs are ignored; ``U`` is zero there.
    ``system.solve_counter`` grows by the number of columns.
    """
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != system.n_dofs:
        raise ValueError(f"right-hand side has shape {B.shape}, expected ({system.n_dofs}, k)")
    k = B.shape[1]
    if k == 0:
        raise ValueError("need at least one right-hand side")
    rhs = B * system.mesh.free_mask[:, None]
    U = system._lu.solve(np.asfortranarray(rhs))
    U[~system.mesh.free_mask] = 0.0
    system._count(k)
    return U[:, 0] if vector else U


def element_energies(mesh: GroundMesh, U: np.ndarray, W: np.ndarray | None = None) -> np.ndarray:
    """Per-element bilinear forms ``sum_k w_k^T K_e u_k`` over columns ``k``.

    ``W`` defaults to ``U``; the result has one entry per element.
    """
    U = np.asarray(U)
    if U.ndim == 1:
        U = U[:, None]
    Ue = U[mesh.edofs]  # (n_E, 8, k)
    if W is None:
        We = Ue
    else:
        W = np.asarray(W)
        We = (W[:, None] if W.ndim == 1 else W)[mesh.edofs]
    return np.einsum("eak,ab,ebk->e", We, mesh.ke, Ue, optimize=True)
