"""Forward model: weighted graph Laplacian, Dirichlet solves and the DtN map.

Currents follow ``psi_p = gamma_pq (u_q - u_p)`` for a boundary node ``p``
with interior neighbour ``q``; with this convention the DtN matrix has a
nonpositive diagonal, nonnegative off-diagonal and zero row sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .lattice import Coord, Lattice


class InternalSolverError(RuntimeError):
    """The interior block could not be factorised (impossible for gamma > 0)."""


@dataclass
class DtnMatrix:
    entries: np.ndarray
    node_order: list[Coord]
    asymmetry: float = 0.0  # max |L - L^T| / max |L| before symmetrisation

    @property
    def shape(self):
        return self.entries.shape


def check_conductivity(lat: Lattice, g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (lat.n_edges,):
        raise ValueError(f"expected {lat.n_edges} conductivities, got shape {g.shape}")
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise ValueError("conductivities must be finite and strictly positive")
    return g


def assemble_laplacian(lat: Lattice, g) -> sp.csr_matrix:
    """Kirchhoff matrix over all nodes: ``gamma_pq`` off-diagonal, ``-sum`` on the diagonal."""
    g = check_conductivity(lat, g)
    a, b = lat.edges[:, 0], lat.edges[:, 1]
    N = lat.n_nodes
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    vals = np.concatenate([g, g, -g, -g])
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def kirchhoff_row(lat: Lattice, g, p: int) -> np.ndarray:
    """The vector ``v_p``: ``gamma_pq`` at neighbours, minus their sum at ``p``."""
    g = np.asarray(g, dtype=float)
    v = np.zeros(lat.n_nodes)
    for q, e in lat.adjacency[p]:
        v[q] = g[e]
        v[p] -= g[e]
    return v


class _InteriorSolver:
    """Factorised interior block, reusable for many boundary excitations."""

    def __init__(self, lat: Lattice, g):
        A = assemble_laplacian(lat, g).tocsc()
        nI = lat.n_interior
        self.A_II = A[:nI, :nI]
        self.A_IB = A[:nI, nI:]
        self.A_BI = A[nI:, :nI]
        self.A_BB = A[nI:, nI:]
        try:
            # -A_II is symmetric positive definite
            self._lu = splu((-self.A_II).tocsc())
        except RuntimeError as exc:  # pragma: no cover - singular only for invalid gamma
            raise InternalSolverError(str(exc)) from exc

    def interior(self, phi: np.ndarray) -> np.ndarray:
        rhs = self.A_IB @ phi
        rhs = np.asarray(rhs.toarray() if sp.issparse(rhs) else rhs, dtype=float)
        u = self._lu.solve(rhs)
        if not np.all(np.isfinite(u)):  # pragma: no cover
            raise InternalSolverError("non-finite interior potential")
        return u


def solve_dirichlet(lat: Lattice, g, phi) -> np.ndarray:
    """Potential on all nodes that is gamma-harmonic inside and equals ``phi`` on the boundary.

    ``phi`` may be a vector over the boundary ordering or a matrix whose
    columns are separate excitations.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape[0] != lat.n_boundary:
        raise ValueError(f"phi must have {lat.n_boundary} rows, got {phi.shape[0]}")
    solver = _InteriorSolver(lat, g)
    u_int = solver.interior(phi)
    return np.concatenate([u_int, phi], axis=0)


def boundary_current(lat: Lattice, g, u) -> np.ndarray:
    """Boundary currents ``psi_p = gamma_pq (u_q - u_p)``."""
    g = np.asarray(g, dtype=float)
    u = np.asarray(u, dtype=float)
    nI = lat.n_interior
    psi = np.zeros((lat.n_boundary,) + u.shape[1:])
    for pos in range(lat.n_boundary):
        p = nI + pos
        (q, e), = lat.adjacency[p]
        psi[pos] = g[e] * (u[q] - u[p])
    return psi


def assemble_dtn(lat: Lattice, g) -> DtnMatrix:
    """DtN matrix built from unit boundary excitations, then symmetrised."""
    g = check_conductivity(lat, g)
    solver = _InteriorSolver(lat, g)
    eye = np.eye(lat.n_boundary)
    u_int = solver.interior(eye)
    raw = solver.A_BB @ eye + solver.A_BI @ u_int
    raw = np.asarray(raw)
    scale = np.abs(raw).max()
    asym = float(np.abs(raw - raw.T).max() / scale) if scale > 0 else 0.0
    return DtnMatrix(
        entries=0.5 * (raw + raw.T),
        node_order=list(lat.boundary),
        asymmetry=asym,
    )


def random_conductivity(lat: Lattice, lo: float = 1.0, hi: float = 2.0, seed=None) -> np.ndarray:
    """Independent uniform conductivities on ``[lo, hi]``."""
    if not (0 < lo <= hi):
        raise ValueError(f"need 0 < lo <= hi, got ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=lat.n_edges)


def dirichlet_residual(lat: Lattice, g, u) -> float:
    """Max Kirchhoff imbalance over interior nodes."""
    A = assemble_laplacian(lat, g)
    r = (A @ np.asarray(u, dtype=float))[: lat.n_interior]
    return float(np.abs(r).max()) if r.size else 0.0
