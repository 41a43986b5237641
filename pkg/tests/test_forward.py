import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_calderon.forward import (
    assemble_dtn,
    assemble_laplacian,
    boundary_current,
    dirichlet_residual,
    kirchhoff_row,
    random_conductivity,
    solve_dirichlet,
)
from lattice_calderon.lattice import build_lattice


def test_single_node_laplacian(unit2d):
    lat, g = unit2d
    A = assemble_laplacian(lat, g).toarray()
    c = lat.index[(1, 1)]
    assert A[c, c] == -4
    assert sorted(np.delete(A[c], c)) == [1, 1, 1, 1]
    assert np.allclose(A.sum(axis=1), 0)


def test_single_node_kirchhoff_row(unit2d):
    lat, g = unit2d
    v = kirchhoff_row(lat, g, lat.index[(1, 1)])
    assert sorted(v) == [-4, 1, 1, 1, 1]


def test_single_node_dirichlet_and_currents(unit2d):
    lat, g = unit2d
    for k in range(lat.n_boundary):
        phi = np.zeros(lat.n_boundary)
        phi[k] = 1.0
        u = solve_dirichlet(lat, g, phi)
        assert u[lat.index[(1, 1)]] == pytest.approx(0.25)
        psi = boundary_current(lat, g, u)
        expected = np.full(lat.n_boundary, 0.25)
        expected[k] = -0.75
        assert np.allclose(psi, expected)


def test_single_node_dtn_closed_form(unit2d):
    lat, g = unit2d
    dtn = assemble_dtn(lat, g)
    assert np.allclose(dtn.entries, 0.25 * np.ones((4, 4)) - np.eye(4), atol=1e-15)
    assert dtn.node_order == lat.boundary


@pytest.mark.parametrize("d,n", [(2, 3), (3, 2), (3, 3)])
def test_interior_block_negative_definite(d, n):
    lat = build_lattice(d, n)
    g = random_conductivity(lat, 0.5, 2.0, seed=1)
    A = assemble_laplacian(lat, g).toarray()[: lat.n_interior, : lat.n_interior]
    assert np.allclose(A, A.T)
    assert np.linalg.eigvalsh(A).max() < 0


@pytest.mark.parametrize("d,n", [(2, n) for n in range(2, 6)] + [(3, n) for n in range(2, 6)])
def test_dtn_invariants(d, n):
    lat = build_lattice(d, n)
    g = random_conductivity(lat, 0.5, 2.0, seed=n)
    dtn = assemble_dtn(lat, g)
    M = dtn.entries
    scale = np.abs(M).max()
    assert dtn.asymmetry <= 1e-10
    assert np.abs(M.sum(axis=1)).max() <= 1e-10 * scale
    assert np.all(np.diag(M) <= 0)
    off = M - np.diag(np.diag(M))
    assert off.min() >= -1e-10 * scale


def test_dtn_columns_are_boundary_currents(small3d):
    lat, g, dtn = small3d
    for k in (0, 5, lat.n_boundary - 1):
        phi = np.zeros(lat.n_boundary)
        phi[k] = 1
        psi = boundary_current(lat, g, solve_dirichlet(lat, g, phi))
        assert np.allclose(dtn.entries[:, k], psi, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(-3, 3))
def test_dirichlet_solution_properties(seed, c):
    lat = build_lattice(3, 2)
    rng = np.random.default_rng(seed)
    g = random_conductivity(lat, 0.5, 2.0, seed=rng)
    phi = rng.standard_normal(lat.n_boundary)
    u = solve_dirichlet(lat, g, phi)
    assert dirichlet_residual(lat, g, u) <= 1e-10 * np.abs(phi).max()
    ui = u[: lat.n_interior]
    assert phi.min() - 1e-12 <= ui.min() and ui.max() <= phi.max() + 1e-12
    assert abs(boundary_current(lat, g, u).sum()) <= 1e-10
    uc = solve_dirichlet(lat, g, np.full(lat.n_boundary, c))
    assert np.allclose(uc, c)
    assert np.allclose(boundary_current(lat, g, uc), 0, atol=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_rejects_invalid_conductivity(bad):
    lat = build_lattice(2, 2)
    g = np.ones(lat.n_edges)
    g[3] = bad
    with pytest.raises(ValueError):
        assemble_laplacian(lat, g)
    with pytest.raises(ValueError):
        assemble_dtn(lat, g)


def test_rejects_wrong_length():
    lat = build_lattice(2, 2)
    with pytest.raises(ValueError):
        assemble_dtn(lat, np.ones(lat.n_edges + 1))


def test_random_conductivity_is_seeded():
    lat = build_lattice(3, 2)
    a = random_conductivity(lat, 1, 2, seed=3)
    assert np.array_equal(a, random_conductivity(lat, 1, 2, seed=3))
    assert a.min() >= 1 and a.max() <= 2
    with pytest.raises(ValueError):
        random_conductivity(lat, 0, 1)
