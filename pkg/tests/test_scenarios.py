import numpy as np
import pytest

from stochtopo.fem import cantilever_mesh
from stochtopo.scenarios import (
    PointLoad,
    default_point_loads,
    export_scenarios,
    import_scenarios,
    sample_scenarios,
    surface_dofs,
)


@pytest.fixture(scope="module")
def mesh():
    return cantilever_mesh(60, 20)


def numerical_rank(F):
    s = np.linalg.svd(F, compute_uv=False)
    return int(np.sum(s > 1e-8 * s[0]))


def test_deterministic(mesh):
    a = sample_scenarios(mesh, 10, 20, seed=3).F
    np.testing.assert_array_equal(a, sample_scenarios(mesh, 10, 20, seed=3).F)
    assert not np.array_equal(a, sample_scenarios(mesh, 10, 20, seed=4).F)


@pytest.mark.parametrize("R", [4, 10])
def test_rank(mesh, R):
    assert numerical_rank(sample_scenarios(mesh, R, 1000, seed=0).F) == R


def test_rank_high(small_mesh):
    F = sample_scenarios(small_mesh, 100, 200, seed=0).F
    assert numerical_rank(F) == min(100, np.count_nonzero(np.any(F != 0, axis=1)))


def test_fixed_dofs_unloaded(mesh):
    F = sample_scenarios(mesh, 10, 50, seed=1).F
    assert np.all(F[mesh.fixed_dofs] == 0)


def test_point_coefficients(small_mesh):
    # interior nodes carry no surface load, so each coefficient is read directly
    interior = (PointLoad(3, 2, (1.0, 0.0)), PointLoad(6, 2, (0.0, 1.0)), PointLoad(9, 1, (1.0, 0.0)))
    F = sample_scenarios(small_mesh, 6, 10_000, seed=2, point_loads=interior).F
    for pl, axis in zip(interior, (0, 1, 0)):
        s = F[2 * small_mesh.node_index(pl.i, pl.j) + axis]
        assert abs(s.mean()) <= 0.05
        assert s.min() >= -2.0 and s.max() <= 2.0
        assert s.var() == pytest.approx(16 / 12, rel=0.05)


def test_default_point_loads(mesh):
    loads = default_point_loads(mesh)
    assert [(p.i, p.j) for p in loads] == [(60, 10), (30, 20), (40, 0)]
    v = loads[1].vector(mesh)
    n = mesh.node_index(30, 20)
    np.testing.assert_allclose(v[2 * n:2 * n + 2], [np.sqrt(0.5), -np.sqrt(0.5)])
    np.testing.assert_allclose(loads[2].vector(mesh)[2 * mesh.node_index(40, 0):][:2],
                               [-np.sqrt(0.5), -np.sqrt(0.5)])


def test_point_loads_scale_with_mesh():
    loads = default_point_loads(cantilever_mesh(30, 10))
    assert [(p.i, p.j) for p in loads] == [(30, 5), (15, 10), (20, 0)]


def test_surface_dofs(small_mesh):
    dofs = surface_dofs(small_mesh)
    nodes = np.unique(dofs // 2)
    xy = small_mesh.node_coordinates()[nodes]
    on_edge = (xy[:, 0] == small_mesh.nx) | (xy[:, 1] == 0) | (xy[:, 1] == small_mesh.ny)
    assert np.all(on_edge)
    assert np.all(small_mesh.free_mask[dofs])
    # perimeter nodes minus the clamped edge, two dofs each
    assert dofs.size == 2 * (2 * small_mesh.nx + small_mesh.ny - 1 + 2 - 2)


def test_invalid(small_mesh):
    with pytest.raises(ValueError):
        sample_scenarios(small_mesh, 3, 10)
    with pytest.raises(ValueError):
        sample_scenarios(small_mesh, 4, 0)
    with pytest.raises(ValueError):
        sample_scenarios(small_mesh, 4, 5, point_loads=(PointLoad(0, 0, (1, 0)),) * 3)


def test_roundtrip(tmp_path, small_mesh):
    scen = sample_scenarios(small_mesh, 6, 7, seed=9)
    path = tmp_path / "loads.csv"
    export_scenarios(scen, path)
    back = import_scenarios(path)
    np.testing.assert_array_equal(back.F, scen.F)
    assert (back.R, back.seed, back.L) == (6, 9, 7)
    assert path.read_text().splitlines()[0] == "n_dofs,L,R,seed"


def test_import_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        import_scenarios(p)
    p.write_text("n_dofs,L,R,seed\n3,2,4,0\n1,2,3\n")
    with pytest.raises(ValueError):
        import_scenarios(p)
