"""Slice-by-slice recovery of edge conductivities from the DtN matrix.

Each corner run works in a reflected frame where the chosen corner is the
origin: for every level ``t`` it extracts the kernel of ``T(t)``, keeps the
part new relative to ``t - 1``, continues the Cauchy data of those
excitations into ``L_t^S`` with the conductivities already found, and solves
a linear least-squares system for the edges of level ``t``.  The corner runs
are merged by giving each edge to the nearest corner.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .forward import DtnMatrix
from .lattice import Lattice, all_corners, corner_map, corner_vertex, slice_sets
from .operators import (
    DEFAULT_KERNEL_TOL,
    SubmatrixOperator,
    containment_defect,
    dtn_block,
    expected_kernel_dim,
    kernel_basis,
    quotient_basis,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "LATTICE_CALDERON_WORKERS"


@dataclass
class ReconstructionOptions:
    kernel_tol: float = DEFAULT_KERNEL_TOL
    containment_tol: float = 1e-8
    residual_tol: float = 1e-8
    flux_rank_tol: float = 1e-12
    corners: str | list = "all"  # "all", "origin" or explicit flag tuples
    t_max: int | None = None
    workers: int | None = None


@dataclass
class FluxSystem:
    t: int
    unknown_edges: np.ndarray
    matrix: np.ndarray  # rows ordered (excitation, node)
    rhs: np.ndarray
    row_nodes: np.ndarray
    row_excitation: np.ndarray


@dataclass
class SliceRecord:
    corner: tuple
    t: int
    kernel_dim_numeric: int
    kernel_dim_expected: int
    quotient_dim: int
    containment_defect: float
    cauchy_residual: float
    flux_residual: float
    flux_sv_ratio: float
    kernel_ambiguous: bool = False
    degraded: bool = False
    notes: list[str] = field(default_factory=list)


@dataclass
class CornerResult:
    corner: tuple
    estimates: np.ndarray  # original edge order, NaN where not reached
    frame_level: np.ndarray  # level of each original edge seen from this corner
    slices: list[SliceRecord]


@dataclass
class ReconstructionReport:
    dim: int
    size: int
    estimates: np.ndarray
    source_corner: list[tuple]
    slice_residuals: dict
    slices: list[SliceRecord]
    diagnostics: list[str]

    @property
    def degraded_slices(self) -> list[tuple]:
        return [(s.corner, s.t) for s in self.slices if s.degraded]

    @property
    def nonpositive_edges(self) -> np.ndarray:
        return np.flatnonzero(~(self.estimates > 0))


def default_t_max(lat: Lattice) -> int:
    return lat.dim * math.ceil((lat.size + 1) / 2)


def _laplacian_unchecked(lat: Lattice, g: np.ndarray) -> sp.csr_matrix:
    a, b = lat.edges[:, 0], lat.edges[:, 1]
    N = lat.n_nodes
    return sp.csr_matrix(
        (np.concatenate([g, g, -g, -g]), (np.concatenate([a, b, a, b]), np.concatenate([b, a, a, b]))),
        shape=(N, N),
    )


def _marching_plan(lat: Lattice, t: int):
    """Per-layer index arrays for marching along ``+e_1`` through ``L_t^S``."""
    key = ("march", t)
    if key in lat._cache:
        return lat._cache[key]
    d = lat.dim
    dummy_node, dummy_edge = lat.n_nodes, lat.n_edges
    L_S = slice_sets(lat, t).L_S
    layers = []
    for l in range(1, lat.size + 1):
        P = L_S[lat.coords[L_S, 0] == l]
        if P.size == 0:
            continue
        Q = np.empty(P.size, dtype=int)
        E_pq = np.empty(P.size, dtype=int)
        S = np.full((P.size, 2 * d - 1), dummy_node, dtype=int)
        E_s = np.full((P.size, 2 * d - 1), dummy_edge, dtype=int)
        for i, p in enumerate(P):
            c = lat.nodes[p]
            q = lat.index[(c[0] - 1,) + c[1:]]
            Q[i] = q
            j = 0
            for s, e in lat.adjacency[q]:
                if s == p:
                    E_pq[i] = e
                else:
                    S[i, j], E_s[i, j] = s, e
                    j += 1
        layers.append((P, Q, E_pq, S, E_s))
    lat._cache[key] = layers
    return layers


def propagate_cauchy(lat: Lattice, g_known, phi, psi, t: int) -> tuple[np.ndarray, float]:
    """Continue Cauchy data on ``J_{t-1}^S`` into ``L_t^S``.

    Marches along ``+e_1``: the balance at ``q = p - e_1`` (or the measured
    current when ``q`` is a boundary node) fixes ``u_p`` once every other
    neighbour of ``q`` is known.  Only conductivities on edges below level
    ``t`` are read.

    Returns the node potential (interior filled on ``L_t^S``, ``phi`` on the
    boundary, zero elsewhere) and the relative residual of the full set of
    Kirchhoff and current equations on the wedge.
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    squeeze = phi.ndim == 1
    if squeeze:
        phi, psi = phi[:, None], psi[:, None]
    k = phi.shape[1]
    nI, N = lat.n_interior, lat.n_nodes

    g_known = np.asarray(g_known, dtype=float)
    below = lat.edge_level <= t - 1
    if np.any(np.isnan(g_known[below])):
        raise ValueError("conductivity below level t must be known")
    # estimates may be nonpositive at depth; they are used as they are
    gk = np.where(below, g_known, 0.0)
    g_ext = np.append(gk, 0.0)

    u = np.zeros((N + 1, k))
    u[nI:N] = phi
    cur = np.zeros((N + 1, k))
    cur[nI:N] = psi

    for P, Q, E_pq, S, E_s in _marching_plan(lat, t):
        uq = u[Q]
        flow = cur[Q] + np.einsum("ij,ijk->ik", g_ext[E_s], uq[:, None, :] - u[S])
        u[P] = uq + flow / g_ext[E_pq][:, None]

    u = u[:N]
    # every balance on L_{t-1}^S and every current on J_{t-1}^S
    kirch = slice_sets(lat, t - 1).L_S
    bnd = slice_sets(lat, t - 1).J_S
    eq = np.concatenate([kirch, bnd])
    residual = 0.0
    if eq.size:
        A = _laplacian_unchecked(lat, gk)[eq]
        r = A @ u
        r[len(kirch):] -= psi[lat.boundary_positions(bnd)]
        mag = abs(A) @ np.abs(u)
        mag[len(kirch):] += np.abs(psi[lat.boundary_positions(bnd)])
        scale = mag.max()
        residual = float(np.abs(r).max() / scale) if scale > 0 else float(np.abs(r).max())
    return (u[:, 0] if squeeze else u), residual


def build_flux_system(lat: Lattice, g_known, t: int, u, psi) -> FluxSystem:
    """Stack one equation per excitation and node of ``L_t``, ``L_{t+1}`` and ``J_t``.

    Row ``(u, p)`` has ``u_p - u_q`` in the column of each level-``t`` edge
    ``pq``.  The right-hand side is ``-psi_p`` on ``J_t`` (currents are
    measured as ``gamma (u_q - u_p)``) minus the contribution of the known
    level ``t - 1`` edges at ``p``.
    """
    g = np.asarray(g_known, dtype=float)
    u = np.asarray(u, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if u.ndim == 1:
        u, psi = u[:, None], psi[:, None]
    k = u.shape[1]
    s0, s1 = slice_sets(lat, t), slice_sets(lat, t + 1)
    level = lat.edge_level
    unknown = np.flatnonzero(level == t)
    col = {int(e): j for j, e in enumerate(unknown)}
    row_nodes = np.concatenate([s0.L, s1.L, s0.J])
    in_L_t = set(s0.L.tolist())

    A = np.zeros((k, len(row_nodes), len(unknown)))
    b = np.zeros((k, len(row_nodes)))
    for i, p in enumerate(row_nodes):
        p = int(p)
        for q, e in lat.adjacency[p]:
            if level[e] == t:
                A[:, i, col[e]] = u[p] - u[q]
            elif level[e] == t - 1 and p in in_L_t:
                b[:, i] -= g[e] * (u[p] - u[q])
        if lat.is_boundary(p):
            b[:, i] -= psi[p - lat.n_interior]

    return FluxSystem(
        t=t,
        unknown_edges=unknown,
        matrix=A.reshape(k * len(row_nodes), len(unknown)),
        rhs=b.reshape(-1),
        row_nodes=np.tile(row_nodes, k),
        row_excitation=np.repeat(np.arange(k), len(row_nodes)),
    )


def recover_slice(sys: FluxSystem, rank_tol: float = 1e-12) -> tuple[np.ndarray, float, float, bool]:
    """Least-squares conductivities on the level's edges.

    Returns ``(gamma, relative residual, sigma_min / sigma_max, rank_deficient)``.
    """
    A, b = sys.matrix, sys.rhs
    if A.shape[0] == 0 or A.shape[1] == 0:
        return np.full(A.shape[1], np.nan), np.inf, 0.0, True
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        return np.full(A.shape[1], np.inf), np.inf, 0.0, True
    x, _, _, sv = np.linalg.lstsq(A, b, rcond=None)
    ratio = float(sv[-1] / sv[0]) if sv[0] > 0 and len(sv) == A.shape[1] else 0.0
    r = A @ x - b
    nb = np.linalg.norm(b)
    res = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
    return x, res, ratio, ratio <= rank_tol


def reconstruct_from_corner(lat: Lattice, dtn, corner=None, opts: ReconstructionOptions | None = None,
                            t_max: int | None = None) -> CornerResult:
    """Run the slice loop from one corner; estimates come back in original edge order."""
    opts = opts or ReconstructionOptions()
    corner = tuple(int(c) for c in (corner if corner is not None else (0,) * lat.dim))
    entries = dtn.entries if isinstance(dtn, DtnMatrix) else np.asarray(dtn, dtype=float)
    if entries.shape != (lat.n_boundary, lat.n_boundary):
        raise ValueError(f"DtN matrix must be {lat.n_boundary}x{lat.n_boundary}, got {entries.shape}")
    if t_max is None:
        t_max = opts.t_max if opts.t_max is not None else default_t_max(lat)
    t_max = min(int(t_max), lat.dim * lat.size)

    node_perm, edge_perm = corner_map(lat, corner)
    nI = lat.n_interior
    bperm = node_perm[nI:] - nI
    Lam = entries[np.ix_(bperm, bperm)]

    g = np.full(lat.n_edges, np.nan)
    K_prev = None
    records = []
    for t in range(lat.dim - 1, t_max + 1):
        rows, cols, block = dtn_block(lat, Lam, t)
        expected = expected_kernel_dim(lat, t)
        K = kernel_basis(SubmatrixOperator("dtn", rows, cols, block), opts.kernel_tol, t=t)
        notes = []
        degraded = False
        numeric = K.numeric_dim
        if numeric != expected:
            notes.append(f"kernel dimension {numeric} != expected {expected}; using {expected}")
            K = kernel_basis(SubmatrixOperator("dtn", rows, cols, block), opts.kernel_tol,
                             dim=expected, t=t)
            degraded = True
        defect = containment_defect(K, K_prev) if K_prev is not None else 0.0
        if defect > opts.containment_tol:
            notes.append(f"previous kernel not contained (defect {defect:.3g})")
            degraded = True
        Q = quotient_basis(K, K_prev, opts.containment_tol, check=False)

        phi = np.zeros((lat.n_boundary, Q.shape[1]))
        phi[lat.boundary_positions(cols)] = Q
        psi = Lam @ phi
        u, cres = propagate_cauchy(lat, g, phi, psi, t)
        if cres > opts.residual_tol:
            notes.append(f"Cauchy residual {cres:.3g}")
            degraded = True
        sys = build_flux_system(lat, g, t, u, psi)
        gamma_t, fres, ratio, deficient = recover_slice(sys, opts.flux_rank_tol)
        if deficient:
            notes.append(f"flux system rank deficient (sigma ratio {ratio:.3g})")
            degraded = True
        if fres > opts.residual_tol:
            notes.append(f"flux residual {fres:.3g}")
            degraded = True
        if np.any(~(gamma_t > 0)):
            notes.append(f"{int(np.sum(~(gamma_t > 0)))} nonpositive estimates kept")
        g[sys.unknown_edges] = gamma_t
        records.append(SliceRecord(
            corner=corner, t=t, kernel_dim_numeric=numeric, kernel_dim_expected=expected,
            quotient_dim=Q.shape[1], containment_defect=defect, cauchy_residual=cres,
            flux_residual=fres, flux_sv_ratio=ratio, kernel_ambiguous=K.ambiguous,
            degraded=degraded, notes=notes,
        ))
        K_prev = K

    return CornerResult(
        corner=corner,
        estimates=g[edge_perm],
        frame_level=lat.edge_level[edge_perm],
        slices=records,
    )


def _resolve_corners(lat: Lattice, corners) -> list[tuple]:
    if corners in (None, "all"):
        return all_corners(lat.dim)
    if corners == "origin":
        return [(0,) * lat.dim]
    out = sorted({tuple(int(c) for c in flags) for flags in corners})
    for flags in out:
        if len(flags) != lat.dim or any(f not in (0, 1) for f in flags):
            raise ValueError(f"invalid corner flags {flags}")
    return out


def closest_corner_assignment(lat: Lattice, corners: list[tuple]) -> np.ndarray:
    """Index into ``corners`` of the l1-nearest corner vertex to each edge midpoint.

    Ties go to the lexicographically smallest flags (``corners`` is sorted).
    """
    mid = lat.edge_midpoints
    dist = np.stack([np.abs(mid - corner_vertex(lat, c)).sum(axis=1) for c in corners], axis=1)
    return np.argmin(dist, axis=1)


def _workers(opts: ReconstructionOptions) -> int:
    if opts.workers is not None:
        return max(1, int(opts.workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def reconstruct(lat: Lattice, dtn, opts: ReconstructionOptions | None = None) -> ReconstructionReport:
    """Reconstruct from every selected corner and merge by nearest corner."""
    opts = opts or ReconstructionOptions()
    corners = _resolve_corners(lat, opts.corners)
    owner = closest_corner_assignment(lat, corners)
    base = opts.t_max if opts.t_max is not None else default_t_max(lat)
    diagnostics = []

    plans = []
    for ci, c in enumerate(corners):
        _, edge_perm = corner_map(lat, c)
        mine = owner == ci
        need = int(lat.edge_level[edge_perm][mine].max()) if mine.any() else lat.dim - 1
        t_max = base
        if need > base:
            diagnostics.append(f"corner {c}: loop extended from t={base} to t={need} to cover its edges")
            t_max = need
        plans.append((c, t_max))

    def run(plan):
        c, t_max = plan
        return reconstruct_from_corner(lat, dtn, c, opts, t_max=t_max)

    workers = _workers(opts)
    if workers > 1 and len(plans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, plans))
    else:
        results = [run(p) for p in plans]

    estimates = np.full(lat.n_edges, np.nan)
    source = [None] * lat.n_edges
    for ci, res in enumerate(results):
        mine = np.flatnonzero(owner == ci)
        estimates[mine] = res.estimates[mine]
        for e in mine:
            source[e] = res.corner
    if np.any(np.isnan(estimates)):
        missing = int(np.isnan(estimates).sum())
        raise RuntimeError(f"{missing} edges left uncovered after merging")

    slices = [s for res in results for s in res.slices]
    residuals = {(s.corner, s.t): max(s.cauchy_residual, s.flux_residual) for s in slices}
    for s in slices:
        if s.degraded:
            diagnostics.append(f"corner {s.corner} t={s.t}: " + "; ".join(s.notes))
    nonpos = int(np.sum(~(estimates > 0)))
    if nonpos:
        diagnostics.append(f"{nonpos} merged estimates are nonpositive")
    return ReconstructionReport(
        dim=lat.dim,
        size=lat.size,
        estimates=estimates,
        source_corner=source,
        slice_residuals=residuals,
        slices=slices,
        diagnostics=diagnostics,
    )
