"""Corner-excitation operators and the subgraph machinery behind them.

``T(t)`` is the block of the DtN matrix mapping potentials on ``J_t^S`` to
currents on the rest of the boundary; its kernel holds the excitations whose
interior potential is confined to ``L_t^S``.  ``T1``, ``T2``, ``T2'`` and
the subgraph DtN maps need the conductivity and serve as checks only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .forward import DtnMatrix, _InteriorSolver, kirchhoff_row
from .lattice import Lattice, slice_sets

log = logging.getLogger(__name__)

DEFAULT_KERNEL_TOL = 1e-10


class InconsistentDataError(ValueError):
    """Nested kernels do not contain each other to tolerance."""


@dataclass
class SubmatrixOperator:
    base: str
    rows: np.ndarray  # global node indices
    cols: np.ndarray
    entries: np.ndarray

    @property
    def shape(self):
        return self.entries.shape


@dataclass
class KernelBasis:
    t: int
    nodes: np.ndarray  # global indices of the column nodes (J_t^S)
    vectors: np.ndarray  # (len(nodes), dim), orthonormal columns
    tol: float
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    numeric_dim: int = 0
    ambiguous: bool = False

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def embed(self, nodes: np.ndarray) -> np.ndarray:
        """Zero-extend the basis onto the (larger) node list ``nodes``."""
        pos = np.searchsorted(nodes, self.nodes)
        if self.nodes.size and (
            pos.max() >= len(nodes) or not np.array_equal(nodes[pos], self.nodes)
        ):
            raise ValueError("kernel nodes are not contained in the target node set")
        out = np.zeros((len(nodes), self.dim))
        out[pos] = self.vectors
        return out


@dataclass
class SolutionSpaceBasis:
    t: int
    nodes: np.ndarray  # L_t^S followed by J_t^S (global indices)
    fields: np.ndarray  # (len(nodes), dim)
    leakage: float
    ok: bool


@dataclass
class Subgraph:
    kind: str
    interior: np.ndarray
    boundary: np.ndarray
    edges: np.ndarray  # edge indices into the lattice


def t_range(lat: Lattice) -> tuple[int, int]:
    """Levels on which ``T(t)`` is a proper (nonempty) block."""
    return lat.dim - 1, lat.dim * lat.size - 1


def _complement(lat: Lattice, nodes: np.ndarray) -> np.ndarray:
    bnd = np.arange(lat.n_interior, lat.n_nodes)
    return np.setdiff1d(bnd, nodes, assume_unique=True)


def dtn_block(lat: Lattice, entries: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows ``dD minus J_t^S``, columns ``J_t^S``; no range check."""
    cols = slice_sets(lat, t).J_S
    rows = _complement(lat, cols)
    block = entries[np.ix_(lat.boundary_positions(rows), lat.boundary_positions(cols))]
    return rows, cols, block


def extract_T(lat: Lattice, dtn: DtnMatrix | np.ndarray, t: int) -> SubmatrixOperator:
    lo, hi = t_range(lat)
    if not lo <= t <= hi:
        raise ValueError(f"level t={t} outside [{lo}, {hi}]")
    entries = dtn.entries if isinstance(dtn, DtnMatrix) else np.asarray(dtn)
    rows, cols, block = dtn_block(lat, entries, t)
    if rows.size == 0 or cols.size == 0:
        raise ValueError(f"empty operator at level t={t}")
    return SubmatrixOperator("dtn", rows, cols, block)


def expected_kernel_dim(lat: Lattice, t: int) -> int:
    """``|J_t^S| + |L_t^S| - |L_{t+1}^S|``."""
    s, s1 = slice_sets(lat, t), slice_sets(lat, t + 1)
    return len(s.J_S) + len(s.L_S) - len(s1.L_S)


def solution_operator(lat: Lattice, g) -> np.ndarray:
    """Interior potentials for every unit boundary excitation, ``(n_interior, n_boundary)``."""
    return _InteriorSolver(lat, g).interior(np.eye(lat.n_boundary))


def build_T1(lat: Lattice, g, t: int, X: np.ndarray | None = None) -> SubmatrixOperator:
    """Potential induced on ``L_{t+1}`` by excitations supported on ``J_t^S``.

    ``X`` is an optional precomputed :func:`solution_operator`.
    """
    if X is None:
        X = solution_operator(lat, g)
    cols = slice_sets(lat, t).J_S
    rows = slice_sets(lat, t + 1).L
    return SubmatrixOperator("solution", rows, cols, X[np.ix_(rows, lat.boundary_positions(cols))])


def subgraph_dtn(lat: Lattice, g, sub: Subgraph) -> np.ndarray:
    """DtN matrix of a subgraph, indexed by ``sub.boundary``.

    Boundary nodes without incident subgraph edges get zero rows.
    """
    g = np.asarray(g, dtype=float)
    nodes = np.concatenate([sub.interior, sub.boundary])
    local = {int(v): i for i, v in enumerate(nodes)}
    ends = lat.edges[sub.edges]
    a = np.array([local[int(v)] for v in ends[:, 0]], dtype=int)
    b = np.array([local[int(v)] for v in ends[:, 1]], dtype=int)
    w = g[sub.edges]
    M = len(nodes)
    A = sp.csc_matrix(
        (np.concatenate([w, w, -w, -w]), (np.concatenate([a, b, a, b]), np.concatenate([b, a, a, b]))),
        shape=(M, M),
    )
    ni = len(sub.interior)
    A_BB = A[ni:, ni:].toarray()
    if ni == 0:
        return A_BB
    A_II = A[:ni, :ni]
    A_IB = A[:ni, ni:].toarray()
    A_BI = A[ni:, :ni]
    X = splu((-A_II).tocsc()).solve(A_IB)
    return A_BB + A_BI @ X


def _edges_within(lat: Lattice, nodes: np.ndarray) -> np.ndarray:
    mask = np.zeros(lat.n_nodes, dtype=bool)
    mask[nodes] = True
    return np.flatnonzero(mask[lat.edges[:, 0]] & mask[lat.edges[:, 1]])


def upper_subgraph(lat: Lattice, t: int) -> Subgraph:
    """Part of the lattice above ``L_{t+1}``, with ``L_{t+1}`` as extra boundary."""
    J_S = slice_sets(lat, t).J_S
    L_S1 = slice_sets(lat, t + 1).L_S
    interior = np.setdiff1d(np.arange(lat.n_interior), L_S1)
    boundary = np.union1d(slice_sets(lat, t + 1).L, _complement(lat, J_S))
    edges = _edges_within(lat, np.union1d(interior, boundary))
    return Subgraph("upper", interior, boundary, edges)


def corner_subgraph(lat: Lattice, t: int) -> Subgraph:
    """Corner wedge ``L_{t-1}^S`` with boundary ``J_{t-1}^S`` and ``L_t``.

    Includes the edges joining ``K_{t-1}^-`` to ``L_t``; without them the
    currents on those boundary nodes would not see the potential on ``L_t``.
    """
    interior = slice_sets(lat, t - 1).L_S
    boundary = np.union1d(slice_sets(lat, t - 1).J_S, slice_sets(lat, t).L)
    edges = _edges_within(lat, np.union1d(interior, boundary))
    return Subgraph("corner", interior, boundary, edges)


def reduced_subgraph(lat: Lattice, t: int, p: int) -> Subgraph:
    """Corner wedge with node ``p`` of ``L_t`` removed and its neighbours ``M_p`` made boundary."""
    if p not in set(slice_sets(lat, t).L.tolist()):
        raise ValueError("p must belong to L_t")
    base = corner_subgraph(lat, t)
    region = np.union1d(slice_sets(lat, t - 1).J_S, slice_sets(lat, t - 1).L_S)
    M_p = np.intersect1d([q for q, _ in lat.adjacency[p]], region)
    interior = np.setdiff1d(base.interior, M_p)
    boundary = np.setdiff1d(np.union1d(base.boundary, M_p), [p])
    cut = {e for q, e in lat.adjacency[p] if q in set(M_p.tolist())}
    edges = np.array([e for e in base.edges if e not in cut], dtype=int)
    return Subgraph("reduced", interior, boundary, edges)


def _sub_block(sub: Subgraph, Lam: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    r = np.searchsorted(sub.boundary, rows)
    c = np.searchsorted(sub.boundary, cols)
    return Lam[np.ix_(r, c)]


def build_T2(lat: Lattice, g, t: int) -> SubmatrixOperator:
    """Currents on ``dD minus J_t^S`` of the upper subgraph driven by potentials on ``L_{t+1}``."""
    sub = upper_subgraph(lat, t)
    Lam = subgraph_dtn(lat, g, sub)
    rows = _complement(lat, slice_sets(lat, t).J_S)
    cols = slice_sets(lat, t + 1).L
    return SubmatrixOperator("upper", rows, cols, _sub_block(sub, Lam, rows, cols))


def build_T2_prime(lat: Lattice, g, t: int) -> SubmatrixOperator:
    """Currents on ``J_{t-1}^S`` of the corner wedge driven by potentials on ``L_t``."""
    sub = corner_subgraph(lat, t)
    Lam = subgraph_dtn(lat, g, sub)
    rows = slice_sets(lat, t - 1).J_S
    cols = slice_sets(lat, t).L
    return SubmatrixOperator("corner", rows, cols, _sub_block(sub, Lam, rows, cols))


def kernel_basis(T: SubmatrixOperator, tol: float = DEFAULT_KERNEL_TOL, dim: int | None = None,
                 t: int = -1) -> KernelBasis:
    """Orthonormal nullspace basis from the SVD.

    The numerical dimension counts singular values at or below
    ``tol * sigma_max`` (plus any surplus columns).  Passing ``dim`` forces
    the returned basis to the ``dim`` least significant right singular vectors.
    """
    A = np.asarray(T.entries, dtype=float)
    m, k = A.shape
    if k == 0:
        raise ValueError("operator has no columns")
    if m == 0:
        s = np.zeros(0)
        V = np.eye(k)
    else:
        _, s, Vh = np.linalg.svd(A, full_matrices=True)
        V = Vh.T
    smax = s.max() if s.size else 0.0
    small = int(np.sum(s <= tol * smax))
    numeric_dim = small + max(0, k - m)

    # ambiguity: ratio between the last retained and the first discarded value
    ambiguous = False
    rank = k - numeric_dim
    if 0 < rank < s.size:
        lo_keep, hi_drop = s[rank - 1], s[rank]
        ambiguous = bool(hi_drop > 0 and lo_keep / hi_drop < 10.0)
    if ambiguous:
        log.warning("ambiguous kernel rank at t=%s: gap %.3g", t, s[rank - 1] / s[rank])

    use = numeric_dim if dim is None else int(dim)
    use = min(max(use, 0), k)
    return KernelBasis(
        t=t,
        nodes=np.asarray(T.cols),
        vectors=V[:, k - use :].copy(),
        tol=tol,
        singular_values=s,
        numeric_dim=numeric_dim,
        ambiguous=ambiguous,
    )


def containment_defect(K_t: KernelBasis, K_prev: KernelBasis) -> float:
    """Largest distance of a unit vector of ``K_prev`` from ``span(K_t)``."""
    if K_prev.dim == 0:
        return 0.0
    P = K_prev.embed(K_t.nodes)
    R = P - K_t.vectors @ (K_t.vectors.T @ P)
    return float(np.linalg.norm(R, 2))


def quotient_basis(K_t: KernelBasis, K_prev: KernelBasis | None, tol: float = 1e-8,
                   check: bool = True) -> np.ndarray:
    """Orthonormal vectors completing ``K_prev`` to a basis of ``K_t``.

    Returns an array of shape ``(len(K_t.nodes), K_t.dim - K_prev.dim)``.
    """
    if K_prev is None or K_prev.dim == 0:
        return K_t.vectors.copy()
    defect = containment_defect(K_t, K_prev)
    if check and defect > tol:
        raise InconsistentDataError(
            f"previous kernel leaves the current one by {defect:.3g} (tol {tol:g})"
        )
    P = K_prev.embed(K_t.nodes)
    Q, _ = np.linalg.qr(P)
    W = K_t.vectors - Q @ (Q.T @ K_t.vectors)
    need = K_t.dim - K_prev.dim
    if need <= 0:
        return np.zeros((len(K_t.nodes), 0))
    U, _, _ = np.linalg.svd(W, full_matrices=False)
    return U[:, :need]


def solution_space(lat: Lattice, g, K: KernelBasis, t: int, leak_tol: float = 1e-8,
                   X: np.ndarray | None = None) -> SolutionSpaceBasis:
    """Interior potentials of the kernel excitations, restricted to ``L_t^S`` and ``J_t^S``."""
    s = slice_sets(lat, t)
    phi = np.zeros((lat.n_boundary, K.dim))
    phi[lat.boundary_positions(K.nodes)] = K.vectors
    u_int = X @ phi if X is not None else _InteriorSolver(lat, g).interior(phi)
    u = np.concatenate([u_int, phi], axis=0)
    support = np.concatenate([s.L_S, s.J_S])
    outside = np.setdiff1d(np.arange(lat.n_nodes), support)
    scale = max(np.abs(u).max(), 1e-300) if u.size else 1.0
    leak = float(np.abs(u[outside]).max() / scale) if outside.size and u.size else 0.0
    return SolutionSpaceBasis(t=t, nodes=support, fields=u[support], leakage=leak, ok=leak <= leak_tol)


def restricted_rows(lat: Lattice, g, nodes_p, onto) -> np.ndarray:
    """Stack of ``v_p`` restricted to ``onto`` for each ``p`` in ``nodes_p``."""
    onto = np.asarray(onto, dtype=int)
    out = np.zeros((len(nodes_p), len(onto)))
    for i, p in enumerate(nodes_p):
        out[i] = kirchhoff_row(lat, g, int(p))[onto]
    return out


def mixed_problem_matrix(lat: Lattice, g, t: int, removed: int | None = None) -> np.ndarray:
    """Linear map from potentials on the corner wedge to its Kirchhoff and current residuals.

    Unknowns live on ``L_t^S`` (minus ``removed``); equations are the Kirchhoff
    balances on ``L_{t-1}^S`` and the currents on ``J_{t-1}^S``, all with zero
    Dirichlet data on ``J_{t-1}^S``.  With ``removed = p`` the map belongs to
    the reduced subgraph: balances at neighbours of ``p`` are dropped and the
    edges to ``p`` are cut.
    """
    g = np.array(g, dtype=float)
    unknown = slice_sets(lat, t).L_S
    kirch = slice_sets(lat, t - 1).L_S
    bnd = slice_sets(lat, t - 1).J_S
    if removed is not None:
        region = np.union1d(bnd, kirch)
        M_p = np.intersect1d([q for q, _ in lat.adjacency[removed]], region)
        for q, e in lat.adjacency[removed]:
            if q in set(M_p.tolist()):
                g[e] = 0.0
        unknown = np.setdiff1d(unknown, [removed])
        kirch = np.setdiff1d(kirch, M_p)
    eq_nodes = np.concatenate([kirch, bnd])
    return restricted_rows(lat, g, eq_nodes, unknown)


def solve_cauchy_dense(lat: Lattice, g, phi, psi, t: int) -> np.ndarray:
    """Least-squares solution of the Cauchy problem on the corner wedge.

    Only conductivities on edges below level ``t`` are read.  ``phi`` and
    ``psi`` are full boundary vectors; the result is a node vector with the
    interior filled on ``L_t^S`` and ``phi`` on the boundary.
    """
    g = np.asarray(g, dtype=float)
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    unknown = slice_sets(lat, t).L_S
    kirch = slice_sets(lat, t - 1).L_S
    bnd = slice_sets(lat, t - 1).J_S
    known = np.zeros(lat.n_nodes + 1)
    known[lat.n_interior : lat.n_nodes] = phi
    gk = np.where(lat.edge_level <= t - 1, g, 0.0)

    eq_nodes = np.concatenate([kirch, bnd])
    A = restricted_rows(lat, gk, eq_nodes, unknown)
    rhs = np.zeros(len(eq_nodes))
    bpos = lat.boundary_positions(bnd)
    for i, q in enumerate(eq_nodes):
        v = kirchhoff_row(lat, gk, int(q))
        v[unknown] = 0.0
        rhs[i] = -v @ known[: lat.n_nodes]
    rhs[len(kirch) :] += psi[bpos]
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    u = known[: lat.n_nodes].copy()
    u[unknown] = sol
    return u


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[1] == 0 and B.shape[1] == 0:
        return np.zeros(0)
    return sla.subspace_angles(A, B)
