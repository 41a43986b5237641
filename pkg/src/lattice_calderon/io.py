"""JSON artifacts (problem, DtN, reconstruction) and CSV reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .forward import DtnMatrix
from .lattice import Lattice, build_lattice
from .reconstruction import ReconstructionReport, SliceRecord


class SchemaError(ValueError):
    """A file does not match the expected layout."""


def _num(x: float) -> float:
    # 17 significant digits always round-trip a double
    return float(f"{float(x):.17g}")


def _dump(obj, path) -> None:
    text = json.dumps(obj, indent=1, sort_keys=False)
    Path(path).write_text(text + "\n")


def _load(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return data


def _lattice_from(data: dict, path) -> Lattice:
    try:
        return build_lattice(int(data["dim"]), int(data["size"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: bad or missing dim/size ({exc})") from exc


def _edge_list(lat: Lattice, values, extra=None) -> list[dict]:
    out = []
    for e in range(lat.n_edges):
        p, q = lat.edge_coords(e)
        item = {"p": list(p), "q": list(q), "gamma": _num(values[e])}
        if extra is not None:
            item.update(extra(e))
        out.append(item)
    return out


def _read_edges(lat: Lattice, items, path, positive: bool) -> np.ndarray:
    if not isinstance(items, list) or len(items) != lat.n_edges:
        raise SchemaError(f"{path}: expected {lat.n_edges} edges")
    g = np.empty(lat.n_edges)
    for e, item in enumerate(items):
        try:
            p, q = tuple(item["p"]), tuple(item["q"])
            val = float(item["gamma"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: malformed edge #{e}") from exc
        if (p, q) != lat.edge_coords(e):
            raise SchemaError(f"{path}: edge #{e} is {p}-{q}, expected {lat.edge_coords(e)}")
        if positive and not val > 0:
            raise SchemaError(f"{path}: conductivity on edge #{e} must be positive")
        g[e] = val
    return g


# -- problem -----------------------------------------------------------------

def write_problem(path, lat: Lattice, g, metadata: dict | None = None) -> None:
    _dump({
        "dim": lat.dim,
        "size": lat.size,
        "edges": _edge_list(lat, g),
        "metadata": metadata or {},
    }, path)


def read_problem(path) -> tuple[Lattice, np.ndarray, dict]:
    data = _load(path)
    lat = _lattice_from(data, path)
    g = _read_edges(lat, data.get("edges"), path, positive=True)
    return lat, g, data.get("metadata", {})


# -- DtN ---------------------------------------------------------------------

def write_dtn(path, lat: Lattice, dtn: DtnMatrix) -> None:
    M = dtn.entries
    scale = float(np.abs(M).max()) or 1.0
    _dump({
        "dim": lat.dim,
        "size": lat.size,
        "node_order": [list(c) for c in dtn.node_order],
        "matrix": [[_num(x) for x in row] for row in M],
        "metadata": {
            "asymmetry_before_symmetrisation": _num(dtn.asymmetry),
            "max_abs_row_sum": _num(np.abs(M.sum(axis=1)).max() / scale),
            "symmetric": bool(np.array_equal(M, M.T)),
        },
    }, path)


def read_dtn(path) -> tuple[Lattice, DtnMatrix]:
    data = _load(path)
    lat = _lattice_from(data, path)
    order = [tuple(c) for c in data.get("node_order", [])]
    if order != lat.boundary:
        raise SchemaError(f"{path}: node_order does not match the canonical boundary ordering")
    try:
        M = np.array(data["matrix"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed matrix") from exc
    if M.shape != (lat.n_boundary, lat.n_boundary):
        raise SchemaError(f"{path}: matrix must be {lat.n_boundary}x{lat.n_boundary}, got {M.shape}")
    asym = float(data.get("metadata", {}).get("asymmetry_before_symmetrisation", 0.0))
    return lat, DtnMatrix(entries=M, node_order=order, asymmetry=asym)


# -- reconstruction ----------------------------------------------------------

_SLICE_FIELDS = (
    "t", "kernel_dim_numeric", "kernel_dim_expected", "quotient_dim", "containment_defect",
    "cauchy_residual", "flux_residual", "flux_sv_ratio", "kernel_ambiguous", "degraded", "notes",
)


def write_reconstruction(path, lat: Lattice, report: ReconstructionReport, options: dict | None = None) -> None:
    slices = []
    for s in report.slices:
        item = {"corner": list(s.corner)}
        for f in _SLICE_FIELDS:
            v = getattr(s, f)
            item[f] = _num(v) if isinstance(v, float) else v
        slices.append(item)
    _dump({
        "dim": lat.dim,
        "size": lat.size,
        "options": options or {},
        "edges": _edge_list(lat, report.estimates, lambda e: {"corner": list(report.source_corner[e])}),
        "slices": slices,
        "diagnostics": list(report.diagnostics),
    }, path)


def read_reconstruction(path) -> tuple[Lattice, ReconstructionReport, dict]:
    data = _load(path)
    lat = _lattice_from(data, path)
    items = data.get("edges")
    est = _read_edges(lat, items, path, positive=False)
    try:
        corners = [tuple(int(c) for c in item["corner"]) for item in items]
        slices = [
            SliceRecord(corner=tuple(s["corner"]), **{f: s[f] for f in _SLICE_FIELDS})
            for s in data.get("slices", [])
        ]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed corner or slice record") from exc
    residuals = {(s.corner, s.t): max(s.cauchy_residual, s.flux_residual) for s in slices}
    report = ReconstructionReport(
        dim=lat.dim,
        size=lat.size,
        estimates=est,
        source_corner=corners,
        slice_residuals=residuals,
        slices=slices,
        diagnostics=list(data.get("diagnostics", [])),
    )
    return lat, report, data.get("options", {})


# -- CSV ---------------------------------------------------------------------

ERROR_COLUMNS = ["p", "q", "midpoint", "depth", "gamma_true", "gamma_est", "abs_err", "log10_err", "corner"]


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_error_csv(path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS)
        for row in report.rows():
            w.writerow([_fmt(row[c]) for c in ERROR_COLUMNS])


STUDY_COLUMNS = ["n", "max_err", "median_err", "log10_max_err", "degraded_slices", "depth_profile"]


def write_study_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STUDY_COLUMNS)
        for r in rows:
            profile = ";".join(f"{k}:{v:.3e}" for k, v in sorted(r.depth_profile.items()))
            w.writerow([
                r.n, _fmt(r.max_err), _fmt(r.median_err),
                _fmt(float(np.log10(max(r.max_err, 1e-300)))), r.degraded_slices, profile,
            ])
