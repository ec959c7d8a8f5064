import numpy as np
import pytest

from stochtopo.fem import assemble, assemble_and_factorize, cantilever_mesh
from stochtopo.scenarios import sample_scenarios
from stochtopo.simp import build_filter


@pytest.fixture(scope="session")
def small_mesh():
    return cantilever_mesh(12, 4)


@pytest.fixture(scope="session")
def small_filter(small_mesh):
    return build_filter(small_mesh, 1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def loads(mesh, L, seed=0, R=6):
    return sample_scenarios(mesh, R=R, L=L, seed=seed).F


def random_rho(mesh, seed=0, lo=0.2, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, mesh.n_elements)


def dense_inverse(mesh, rho):
    """Inverse of the free-free block of K, zero-padded at fixed dofs."""
    K = assemble(mesh, rho, constrain=False).toarray()
    free = mesh.free_mask
    Kinv = np.zeros_like(K)
    Kinv[np.ix_(free, free)] = np.linalg.inv(K[np.ix_(free, free)])
    return Kinv


def dense_A(mesh, rho, F):
    return F.T @ dense_inverse(mesh, rho) @ F


def central_difference(fun, x, d, h):
    return (fun(x + h * d) - fun(x - h * d)) / (2.0 * h)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def system(mesh, rho):
    return assemble_and_factorize(mesh, rho)


# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
