"""Executable structural checks, error metrics and the error-growth study."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forward import (
    DtnMatrix,
    assemble_dtn,
    boundary_current,
    dirichlet_residual,
    random_conductivity,
    solve_dirichlet,
)
from .lattice import Lattice, all_corners, build_lattice, corner_map, corner_vertex, slice_sets
from .operators import (
    DEFAULT_KERNEL_TOL,
    SubmatrixOperator,
    build_T1,
    build_T2,
    build_T2_prime,
    containment_defect,
    expected_kernel_dim,
    extract_T,
    kernel_basis,
    mixed_problem_matrix,
    principal_angles,
    quotient_basis,
    restricted_rows,
    solution_operator,
    solution_space,
    solve_cauchy_dense,
    t_range,
)
from .reconstruction import (
    ReconstructionOptions,
    ReconstructionReport,
    build_flux_system,
    propagate_cauchy,
    reconstruct,
    recover_slice,
)

LOG_FLOOR = 1e-300


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3g} (threshold {self.threshold:.3g}) {self.detail}".rstrip()


@dataclass
class SuiteResult:
    dim: int
    size: int
    seed: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


@dataclass
class ErrorReport:
    edges: list  # (p coords, q coords)
    midpoints: np.ndarray
    gamma_true: np.ndarray
    gamma_est: np.ndarray
    abs_err: np.ndarray
    log10_err: np.ndarray
    source_corner: list
    depth: np.ndarray

    @property
    def max_abs_error(self) -> float:
        return float(np.max(self.abs_err))

    @property
    def median_abs_error(self) -> float:
        return float(np.median(self.abs_err))

    def depth_profile(self) -> dict[int, float]:
        """Median absolute error per unit-width depth band ``[k, k+1)``."""
        bands = np.floor(self.depth).astype(int)
        return {int(b): float(np.median(self.abs_err[bands == b])) for b in np.unique(bands)}

    def rows(self):
        for i, (p, q) in enumerate(self.edges):
            yield {
                "p": p,
                "q": q,
                "midpoint": tuple(float(x) for x in self.midpoints[i]),
                "depth": float(self.depth[i]),
                "gamma_true": float(self.gamma_true[i]),
                "gamma_est": float(self.gamma_est[i]),
                "abs_err": float(self.abs_err[i]),
                "log10_err": float(self.log10_err[i]),
                "corner": tuple(self.source_corner[i]),
            }


def compare(lat: Lattice, g_true, report: ReconstructionReport) -> ErrorReport:
    """Per-edge errors of a reconstruction against the true conductivity."""
    g_true = np.asarray(g_true, dtype=float)
    if (report.dim, report.size) != (lat.dim, lat.size) or g_true.shape != (lat.n_edges,):
        raise ValueError(
            f"lattice mismatch: reconstruction is d={report.dim}, n={report.size}; "
            f"truth is d={lat.dim}, n={lat.size} with {g_true.size} edges"
        )
    est = np.asarray(report.estimates, dtype=float)
    err = np.abs(est - g_true)
    err = np.where(np.isnan(err), np.inf, err)
    mid = lat.edge_midpoints
    depth = np.array([
        np.abs(mid[e] - corner_vertex(lat, report.source_corner[e])).sum() for e in range(lat.n_edges)
    ])
    return ErrorReport(
        edges=[lat.edge_coords(e) for e in range(lat.n_edges)],
        midpoints=mid,
        gamma_true=g_true,
        gamma_est=est,
        abs_err=err,
        log10_err=np.log10(np.maximum(err, LOG_FLOOR)),
        source_corner=list(report.source_corner),
        depth=depth,
    )


# -- individual checks -------------------------------------------------------

def _rel_max(a, b=None) -> float:
    a = np.asarray(a)
    if b is None:
        return float(np.abs(a).max()) if a.size else 0.0
    scale = np.abs(b).max() if np.size(b) else 0.0
    num = float(np.abs(a).max()) if a.size else 0.0
    return num / scale if scale > 0 else num


def _sv_ratio(A: np.ndarray) -> float:
    if A.size == 0:
        return 1.0 if A.shape[1] == 0 else 0.0
    s = np.linalg.svd(A, compute_uv=False)
    if len(s) < A.shape[1]:
        return 0.0
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def check_lattice(lat: Lattice) -> CheckResult:
    d, n = lat.dim, lat.size
    problems = []
    if lat.n_interior != n**d:
        problems.append("interior count")
    if lat.n_boundary != 2 * d * n ** (d - 1):
        problems.append("boundary count")
    if lat.n_edges != d * n ** (d - 1) * (n + 1):
        problems.append("edge count")
    for v in range(lat.n_nodes):
        deg = len(lat.adjacency[v])
        if v < lat.n_interior and deg != 2 * d:
            problems.append(f"degree of {lat.nodes[v]}")
        if v >= lat.n_interior and (deg != 1 or lat.adjacency[v][0][0] >= lat.n_interior):
            problems.append(f"boundary neighbour of {lat.nodes[v]}")
    return CheckResult("lattice_invariants", not problems, float(len(problems)), 0.0, ", ".join(problems[:3]))


def check_interface_connectivity(lat: Lattice) -> CheckResult:
    bad = 0
    s = lat.node_sum
    for a, b in lat.edges:
        if abs(int(s[a]) - int(s[b])) != 1:
            bad += 1
    return CheckResult("interface_connectivity", bad == 0, float(bad), 0.0)


def check_corner_maps(lat: Lattice) -> CheckResult:
    bad = 0
    for c in all_corners(lat.dim):
        node_perm, edge_perm = corner_map(lat, c)
        if not np.array_equal(node_perm[node_perm], np.arange(lat.n_nodes)):
            bad += 1
        if not np.array_equal(edge_perm[edge_perm], np.arange(lat.n_edges)):
            bad += 1
        ends = np.sort(node_perm[lat.edges], axis=1)
        if not np.array_equal(ends, np.sort(lat.edges[edge_perm], axis=1)):
            bad += 1
        frame_sum = lat.node_sum[node_perm]
        for t in range(lat.dim * (lat.size + 1) + 1):
            if not np.array_equal(np.sort(node_perm[slice_sets(lat, t).L]),
                                  np.flatnonzero((frame_sum == t) & (np.arange(lat.n_nodes) < lat.n_interior))):
                bad += 1
    return CheckResult("corner_automorphisms", bad == 0, float(bad), 0.0)


def check_dtn_symmetry(entries: np.ndarray, tol: float = 1e-10) -> CheckResult:
    v = _rel_max(entries - entries.T, entries)
    return CheckResult("dtn_symmetry", v <= tol, v, tol)


def check_dtn_row_sums(entries: np.ndarray, tol: float = 1e-10) -> CheckResult:
    v = _rel_max(entries.sum(axis=1), entries)
    return CheckResult("dtn_row_sums", v <= tol, v, tol)


def check_dtn_signs(entries: np.ndarray, tol: float = 1e-10) -> CheckResult:
    scale = np.abs(entries).max()
    off = entries - np.diag(np.diag(entries))
    worst = max(float(np.max(np.diag(entries))), float(-off.min()), 0.0)
    v = worst / scale if scale > 0 else worst
    return CheckResult("dtn_sign_pattern", v <= tol, v, tol)


def check_dirichlet(lat: Lattice, g, rng, tol: float = 1e-10) -> list[CheckResult]:
    phi = rng.uniform(-1.0, 1.0, size=lat.n_boundary)
    u = solve_dirichlet(lat, g, phi)
    res = dirichlet_residual(lat, g, u) / np.abs(phi).max()
    ui = u[: lat.n_interior]
    slack = tol * np.abs(phi).max()
    mp = bool(ui.min() >= phi.min() - slack and ui.max() <= phi.max() + slack)
    flux = abs(boundary_current(lat, g, u).sum()) / max(np.abs(g).max() * np.abs(phi).max(), 1e-300)
    return [
        CheckResult("dirichlet_residual", res <= tol, res, tol),
        CheckResult("maximum_principle", mp, 0.0 if mp else 1.0, 0.0),
        CheckResult("current_conservation", flux <= tol, flux, tol),
    ]


def check_factorization(lat, g, dtn, X, tol=1e-10) -> CheckResult:
    lo, hi = t_range(lat)
    worst = 0.0
    for t in range(lo, hi + 1):
        T = extract_T(lat, dtn, t).entries
        T1 = build_T1(lat, g, t, X=X).entries
        T2 = build_T2(lat, g, t).entries
        worst = max(worst, _rel_max(T - T2 @ T1, T))
    return CheckResult("factorization", worst <= tol, worst, tol)


def check_kernels(lat, g, dtn, X, kernel_tol=DEFAULT_KERNEL_TOL, angle_tol=1e-8,
                  contain_tol=1e-8) -> list[CheckResult]:
    lo, hi = t_range(lat)
    dim_bad, identity_bad = [], []
    worst_angle = worst_contain = 0.0
    prev = None
    kernels = {}
    for t in range(lo, hi + 1):
        K = kernel_basis(extract_T(lat, dtn, t), kernel_tol, t=t)
        K1 = kernel_basis(build_T1(lat, g, t, X=X), kernel_tol, t=t)
        kernels[t] = K
        if K.dim != expected_kernel_dim(lat, t):
            dim_bad.append(t)
        if K1.dim != K.dim:
            identity_bad.append(t)
        else:
            ang = principal_angles(K.vectors, K1.vectors)
            worst_angle = max(worst_angle, float(ang.max()) if ang.size else 0.0)
        if prev is not None:
            worst_contain = max(worst_contain, containment_defect(K, prev))
        prev = K
    return [
        CheckResult("kernel_dimension_formula", not dim_bad, float(len(dim_bad)), 0.0,
                    f"mismatch at t={dim_bad}" if dim_bad else ""),
        CheckResult("kernel_identity", not identity_bad and worst_angle <= angle_tol, worst_angle, angle_tol,
                    f"dimension mismatch at t={identity_bad}" if identity_bad else ""),
        CheckResult("kernel_monotonicity", worst_contain <= contain_tol, worst_contain, contain_tol),
    ], kernels


def check_solution_spaces(lat, g, kernels, X=None, tol=1e-8) -> list[CheckResult]:
    worst_orth = worst_leak = 0.0
    bad_dims = []
    for t, K in kernels.items():
        U = solution_space(lat, g, K, t, X=X)
        worst_leak = max(worst_leak, U.leakage)
        V = restricted_rows(lat, g, slice_sets(lat, t + 1).L_S, U.nodes)
        if U.fields.size and V.size:
            worst_orth = max(worst_orth, _rel_max(V @ U.fields) / max(np.abs(V).max(), 1e-300))
        stacked = np.hstack([U.fields, V.T]) if V.size else U.fields
        rank = np.linalg.matrix_rank(stacked) if stacked.size else 0
        if K.dim + V.shape[0] != len(U.nodes) or rank != len(U.nodes):
            bad_dims.append(t)
    return [
        CheckResult("solution_space_support", worst_leak <= tol, worst_leak, tol),
        CheckResult("orthogonal_decomposition", worst_orth <= tol and not bad_dims, worst_orth, tol,
                    f"dimension defect at t={bad_dims}" if bad_dims else ""),
    ]


def check_unique_continuation(lat, g, tol=1e-12) -> list[CheckResult]:
    d, n = lat.dim, lat.size
    worst = worst_reduced = 1.0
    for t in range(d, d * n + 1):
        worst = min(worst, _sv_ratio(mixed_problem_matrix(lat, g, t)))
        for p in slice_sets(lat, t).L:
            worst_reduced = min(worst_reduced, _sv_ratio(mixed_problem_matrix(lat, g, t, removed=int(p))))
    return [
        CheckResult("unique_continuation", worst > tol, worst, tol),
        CheckResult("reduced_unique_continuation", worst_reduced > tol, worst_reduced, tol),
    ]


def check_injectivity(lat, g, tol=1e-12) -> CheckResult:
    d, n = lat.dim, lat.size
    worst = 1.0
    for t in range(d - 1, d * n):
        worst = min(worst, _sv_ratio(build_T2(lat, g, t).entries))
    for t in range(d, d * n + 1):
        worst = min(worst, _sv_ratio(build_T2_prime(lat, g, t).entries))
    return CheckResult("upper_and_corner_injectivity", worst > tol, worst, tol)


def check_marching(lat, g, dtn, X, kernels, tol_dense=1e-10, tol_forward=1e-9) -> list[CheckResult]:
    d, n = lat.dim, lat.size
    zero_max = 0.0
    worst_dense = worst_fwd = 0.0
    for t in range(d, d * n):
        z = np.zeros(lat.n_boundary)
        u0, _ = propagate_cauchy(lat, g, z, z, t)
        zero_max = max(zero_max, float(np.abs(u0).max()))
        K = kernels[t]
        phi = np.zeros((lat.n_boundary, K.dim))
        phi[lat.boundary_positions(K.nodes)] = K.vectors
        psi = dtn.entries @ phi
        u, _ = propagate_cauchy(lat, g, phi, psi, t)
        L_S = slice_sets(lat, t).L_S
        u_true = X @ phi
        worst_fwd = max(worst_fwd, _rel_max(u[L_S] - u_true[L_S], u_true[L_S]))
        for j in range(K.dim):
            ud = solve_cauchy_dense(lat, g, phi[:, j], psi[:, j], t)
            worst_dense = max(worst_dense, _rel_max(u[L_S, j] - ud[L_S], ud[L_S]))
    return [
        CheckResult("marching_zero_data", zero_max == 0.0, zero_max, 0.0),
        CheckResult("marching_vs_dense", worst_dense <= tol_dense, worst_dense, tol_dense),
        CheckResult("marching_vs_forward", worst_fwd <= tol_forward, worst_fwd, tol_forward),
    ]


def check_flux_rank(lat, g, X, kernels, tol=1e-10) -> CheckResult:
    """Flux systems assembled from exact interior potentials have full column rank."""
    worst = 1.0
    prev = None
    for t in sorted(kernels):
        K = kernels[t]
        Q = quotient_basis(K, prev, check=False)
        prev = K
        phi = np.zeros((lat.n_boundary, Q.shape[1]))
        phi[lat.boundary_positions(K.nodes)] = Q
        u = np.concatenate([X @ phi, phi], axis=0)
        # interior values beyond L_t^S vanish in exact arithmetic
        u[np.setdiff1d(np.arange(lat.n_interior), slice_sets(lat, t).L_S)] = 0.0
        psi = boundary_current(lat, g, u)
        sys = build_flux_system(lat, g, t, u, psi)
        _, _, ratio, _ = recover_slice(sys)
        worst = min(worst, ratio)
    return CheckResult("flux_full_column_rank", worst > tol, worst, tol)


def check_round_trip(lat, g, dtn, tol=1e-8) -> CheckResult:
    rep = reconstruct(lat, dtn)
    err = float(np.max(np.abs(rep.estimates - g)))
    return CheckResult("round_trip", err <= tol, err, tol)


def run_property_suite(d: int, n: int, seed: int = 0, lo: float = 0.5, hi: float = 2.0,
                       round_trip: bool = True) -> SuiteResult:
    """Run every structural check on one random conductivity."""
    lat = build_lattice(d, n)
    rng = np.random.default_rng(seed)
    g = random_conductivity(lat, lo, hi, seed=rng)
    dtn = assemble_dtn(lat, g)
    X = solution_operator(lat, g)
    out = SuiteResult(d, n, seed)
    out.checks.append(check_lattice(lat))
    out.checks.append(check_interface_connectivity(lat))
    out.checks.append(check_corner_maps(lat))
    raw_sym = CheckResult("dtn_symmetry", dtn.asymmetry <= 1e-10, dtn.asymmetry, 1e-10)
    out.checks.append(raw_sym)
    out.checks.append(check_dtn_row_sums(dtn.entries))
    out.checks.append(check_dtn_signs(dtn.entries))
    out.checks.extend(check_dirichlet(lat, g, rng))
    out.checks.append(check_factorization(lat, g, dtn, X))
    kchecks, kernels = check_kernels(lat, g, dtn, X)
    out.checks.extend(kchecks)
    out.checks.extend(check_solution_spaces(lat, g, kernels, X))
    out.checks.extend(check_unique_continuation(lat, g))
    out.checks.append(check_injectivity(lat, g))
    out.checks.extend(check_marching(lat, g, dtn, X, kernels))
    out.checks.append(check_flux_rank(lat, g, X, kernels))
    if round_trip:
        out.checks.append(check_round_trip(lat, g, dtn))
    return out


# -- error growth study ------------------------------------------------------

@dataclass
class StudyRow:
    n: int
    max_err: float
    median_err: float
    depth_profile: dict
    degraded_slices: int
    report: ErrorReport | None = None


def error_growth_study(n_list, d: int = 3, lo: float = 1.0, hi: float = 2.0, seed: int = 0,
                       opts: ReconstructionOptions | None = None, keep_reports: bool = False) -> list[StudyRow]:
    """Generate, forward-solve, reconstruct and compare for each lattice size."""
    n_list = [int(n) for n in n_list]
    if n_list != sorted(n_list):
        raise ValueError("n_list must be ascending")
    rows = []
    for n in n_list:
        lat = build_lattice(d, n)
        g = random_conductivity(lat, lo, hi, seed=seed)
        rep = reconstruct(lat, assemble_dtn(lat, g), opts)
        er = compare(lat, g, rep)
        rows.append(StudyRow(
            n=n,
            max_err=er.max_abs_error,
            median_err=er.median_abs_error,
            depth_profile=er.depth_profile(),
            degraded_slices=len(rep.degraded_slices),
            report=er if keep_reports else None,
        ))
    return rows


def growth_decades(rows: list[StudyRow]) -> float:
    """``log10`` growth of the max error from the first to the last row."""
    first = max(rows[0].max_err, LOG_FLOOR)
    last = max(rows[-1].max_err, LOG_FLOOR)
    return math.log10(last) - math.log10(first)


def trend_is_monotone(rows: list[StudyRow], slack_decades: float = 1.0) -> bool:
    """Max error never drops by more than ``slack_decades`` and ends above where it starts."""
    logs = [math.log10(max(r.max_err, LOG_FLOOR)) for r in rows]
    steps_ok = all(b >= a - slack_decades for a, b in zip(logs, logs[1:]))
    return steps_ok and (len(logs) < 2 or logs[-1] > logs[0])
