"""Sampling of finitely many loading scenarios on the cantilever.

Each scenario is::

    f_i = s1 F1 + s2 F2 + s3 F3 + 1/(R - 3) * sum_{j=4..R} s_j F_j

with ``s1..s3 ~ U(-2, 2)``, ``s_j ~ N(0, 1)``, point loads ``F1..F3`` and
shared random surface loads ``F_j`` (standard normal entries on every free
boundary dof).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import GroundMesh

__all__ = [
    "PointLoad",
    "LoadScenarioSet",
    "default_point_loads",
    "surface_dofs",
    "sample_scenarios",
    "export_scenarios",
    "import_scenarios",
]

_S2 = np.sqrt(0.5)


@dataclass(frozen=True)
class PointLoad:
    """Unit point load at node ``(i, j)`` along ``direction``."""

    i: int
    j: int
    direction: tuple[float, float]

    def vector(self, mesh: GroundMesh) -> np.ndarray:
        f = np.zeros(mesh.n_dofs)
        d = np.asarray(self.direction, dtype=float)
        d = d / np.linalg.norm(d)
        n = mesh.node_index(self.i, self.j)
        f[2 * n:2 * n + 2] = d
        return f


def default_point_loads(mesh: GroundMesh) -> tuple[PointLoad, PointLoad, PointLoad]:
    """Tip load at mid height plus two 45-degree loads on the top and bottom edges.

    Placed at (60, 10), (30, 20) and (40, 0) on a 60 x 20 beam and scaled
    proportionally for other mesh sizes.
    """
    sx, sy = mesh.nx / 60.0, mesh.ny / 20.0

    def at(x: float, y: float) -> tuple[int, int]:
        return int(round(x * sx)), int(round(y * sy))

    return (
        PointLoad(*at(60, 10), (0.0, -1.0)),
        PointLoad(*at(30, 20), (_S2, -_S2)),
        PointLoad(*at(40, 0), (-_S2, -_S2)),
    )


@dataclass
class LoadScenarioSet:
    F: np.ndarray
    R: int
    seed: int | None
    point_loads: tuple[PointLoad, ...] = ()
    surface_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def L(self) -> int:
        return self.F.shape[1]

    @property
    def n_dofs(self) -> int:
        return self.F.shape[0]

    @property
    def n_loaded(self) -> int:
        return int(np.count_nonzero(np.any(self.F != 0, axis=1)))


def surface_dofs(mesh: GroundMesh) -> np.ndarray:
    nodes = mesh.boundary_nodes()
    dofs = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
    return dofs[mesh.free_mask[dofs]]


def sample_scenarios(mesh: GroundMesh, R: int, L: int, seed: int | None = 0,
                     point_loads: tuple[PointLoad, ...] | None = None) -> LoadScenarioSet:
    if R < 4:
        raise ValueError(f"rank parameter R must be at least 4, got {R}")
    if L < 1:
        raise ValueError(f"need at least one scenario, got L={L}")
    point_loads = tuple(point_loads) if point_loads is not None else default_point_loads(mesh)
    if len(point_loads) != 3:
        raise ValueError("exactly three point loads are required")
    base = np.column_stack([pl.vector(mesh) for pl in point_loads])
    if np.any(base[~mesh.free_mask] != 0):
        raise ValueError("point loads must act on free dofs")

    rng = np.random.default_rng(seed)
    dofs = surface_dofs(mesh)
    extra = np.zeros((mesh.n_dofs, R - 3))
    extra[dofs] = rng.standard_normal((dofs.size, R - 3))
    s_point = rng.uniform(-2.0, 2.0, size=(3, L))
    s_extra = rng.standard_normal((R - 3, L))
    F = base @ s_point + (extra @ s_extra) / (R - 3)
    F[~mesh.free_mask] = 0.0
    return LoadScenarioSet(F=F, R=R, seed=seed, point_loads=point_loads, surface_dofs=dofs)


def export_scenarios(scen: LoadScenarioSet, path: str | Path) -> None:
    """CSV with a ``n_dofs,L,R,seed`` header and one scenario per row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_dofs", "L", "R", "seed"])
        w.writerow([scen.n_dofs, scen.L, scen.R, "" if scen.seed is None else scen.seed])
        for col in scen.F.T:
            w.writerow([repr(float(v)) for v in col])


def import_scenarios(path: str | Path) -> LoadScenarioSet:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0] != ["n_dofs", "L", "R", "seed"]:
        raise ValueError(f"{path}: missing n_dofs,L,R,seed header")
    n_dofs, L, R = (int(v) for v in rows[1][:3])
    seed = int(rows[1][3]) if rows[1][3] != "" else None
    data = np.array([[float(v) for v in r] for r in rows[2:]], dtype=float)
    if data.shape != (L, n_dofs):
        raise ValueError(f"{path}: expected {L} rows of {n_dofs} values, got {data.shape}")
    return LoadScenarioSet(F=np.ascontiguousarray(data.T), R=R, seed=seed)
