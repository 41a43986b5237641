"""Hypercubic lattice graphs, coordinate-sum slices and corner reflections.

Nodes are integer tuples in ``[0, n+1]^d``.  Interior nodes have every
coordinate in ``[1, n]``; boundary nodes sit at l1-distance one from the
interior, i.e. exactly one coordinate equals ``0`` or ``n+1``.  Global node
indices put the interior block first (lexicographic) followed by the boundary
block (lexicographic), so ``boundary position = global index - n_interior``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

Coord = tuple[int, ...]


@dataclass(frozen=True)
class SliceSets:
    """Node families attached to the coordinate-sum level ``t``.

    Every family is a sorted array of global node indices.
    """

    t: int
    L: np.ndarray
    K: np.ndarray
    K_minus: np.ndarray
    K_plus: np.ndarray
    J: np.ndarray
    L_S: np.ndarray
    K_S_minus: np.ndarray
    K_S_plus: np.ndarray
    J_S: np.ndarray


@dataclass(eq=False)
class Lattice:
    """The graph ``G = (E, D, dD)`` for dimension ``dim`` and side ``size``.

    Built by :func:`build_lattice`; treat instances as read-only.
    """

    dim: int
    size: int
    interior: list[Coord]
    boundary: list[Coord]
    edges: np.ndarray  # (m, 2) global node indices, smaller endpoint first
    adjacency: list[list[tuple[int, int]]]  # node -> [(neighbour, edge)]
    coords: np.ndarray
    index: dict[Coord, int]
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def nodes(self) -> list[Coord]:
        return self.interior + self.boundary

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary)

    @property
    def n_nodes(self) -> int:
        return len(self.interior) + len(self.boundary)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def node_sum(self) -> np.ndarray:
        return self._memo("node_sum", lambda: self.coords.sum(axis=1))

    @property
    def edge_level(self) -> np.ndarray:
        """Smaller coordinate sum of the two endpoints of each edge."""
        return self._memo("edge_level", lambda: self.node_sum[self.edges].min(axis=1))

    @property
    def edge_midpoints(self) -> np.ndarray:
        return self._memo(
            "edge_midpoints", lambda: self.coords[self.edges].mean(axis=1)
        )

    def is_boundary(self, node: int) -> bool:
        return node >= self.n_interior

    def edge_between(self, a: int, b: int) -> int:
        for nb, e in self.adjacency[a]:
            if nb == b:
                return e
        raise KeyError(f"no edge between {self.nodes[a]} and {self.nodes[b]}")

    def edge_coords(self, e: int) -> tuple[Coord, Coord]:
        a, b = self.edges[e]
        return self.nodes[a], self.nodes[b]

    def boundary_positions(self, nodes: np.ndarray) -> np.ndarray:
        """Map global indices of boundary nodes to their boundary-block positions."""
        nodes = np.asarray(nodes, dtype=int)
        if nodes.size and nodes.min() < self.n_interior:
            raise ValueError("interior node passed where a boundary node was expected")
        return nodes - self.n_interior

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def build_lattice(d: int, n: int) -> Lattice:
    """Construct the ``d``-dimensional lattice with ``n`` interior nodes per side."""
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d!r}")
    if int(n) != n or n < 1:
        raise ValueError(f"size must be an integer >= 1, got {n!r}")
    d, n = int(d), int(n)

    interior = list(itertools.product(range(1, n + 1), repeat=d))
    boundary = []
    for axis in range(d):
        for rest in itertools.product(range(1, n + 1), repeat=d - 1):
            for extreme in (0, n + 1):
                boundary.append(rest[:axis] + (extreme,) + rest[axis:])
    boundary.sort()

    nodes = interior + boundary
    index = {c: i for i, c in enumerate(nodes)}
    coords = np.array(nodes, dtype=int).reshape(len(nodes), d)

    pairs = []
    for p in interior:
        for axis in range(d):
            q = p[:axis] + (p[axis] + 1,) + p[axis + 1 :]
            # p is lexicographically smaller than q, and q is always a node.
            pairs.append((p, q))
    # interior nodes with a coordinate equal to 1 also touch a lower boundary node
    for p in interior:
        for axis in range(d):
            if p[axis] == 1:
                q = p[:axis] + (0,) + p[axis + 1 :]
                pairs.append((q, p))
    pairs.sort()
    edges = np.array([(index[a], index[b]) for a, b in pairs], dtype=int).reshape(-1, 2)

    adjacency: list[list[tuple[int, int]]] = [[] for _ in nodes]
    for e, (a, b) in enumerate(edges):
        adjacency[a].append((int(b), e))
        adjacency[b].append((int(a), e))
    for adj in adjacency:
        adj.sort(key=lambda item: nodes[item[0]])

    return Lattice(
        dim=d,
        size=n,
        interior=interior,
        boundary=boundary,
        edges=edges,
        adjacency=adjacency,
        coords=coords,
        index=index,
    )


def slice_sets(lat: Lattice, t: int) -> SliceSets:
    """Slice families for level ``t`` (memoised per lattice)."""
    t = int(t)
    key = ("slice", t)
    if key in lat._cache:
        return lat._cache[key]

    d, n = lat.dim, lat.size
    s = lat.node_sum
    nI = lat.n_interior
    is_int = np.arange(lat.n_nodes) < nI
    bcoords = lat.coords[nI:]
    b_minus = np.zeros(lat.n_nodes, dtype=bool)
    b_plus = np.zeros(lat.n_nodes, dtype=bool)
    b_minus[nI:] = bcoords.min(axis=1) == 0
    b_plus[nI:] = bcoords.max(axis=1) == n + 1

    def where(mask):
        return np.flatnonzero(mask)

    K_minus = where(b_minus & (s == t))
    K_plus = where(b_plus & (s == t))
    K_plus_next = where(b_plus & (s == t + 1))
    K_S_minus = where(b_minus & (s <= t))
    K_S_plus = where(b_plus & (s <= t))
    K_S_plus_next = where(b_plus & (s <= t + 1))

    out = SliceSets(
        t=t,
        L=where(is_int & (s == t)),
        K=where(~is_int & (s == t)),
        K_minus=K_minus,
        K_plus=K_plus,
        J=np.union1d(K_minus, K_plus_next),
        L_S=where(is_int & (s <= t)),
        K_S_minus=K_S_minus,
        K_S_plus=K_S_plus,
        J_S=np.union1d(K_S_minus, K_S_plus_next),
    )
    lat._cache[key] = out
    return out


def all_corners(d: int) -> list[tuple[int, ...]]:
    """Corner flag tuples in lexicographic order, origin first."""
    return list(itertools.product((0, 1), repeat=d))


def corner_map(lat: Lattice, corner) -> tuple[np.ndarray, np.ndarray]:
    """Node and edge permutations induced by reflecting the flagged axes.

    ``node_perm[i]`` is the global index of the image of node ``i`` under
    ``x_k -> n + 1 - x_k`` for every flagged axis ``k``; ``edge_perm`` is the
    induced permutation of edge indices.  Both are involutions.
    """
    flags = tuple(int(f) for f in corner)
    if len(flags) != lat.dim or any(f not in (0, 1) for f in flags):
        raise ValueError(f"corner must be a {lat.dim}-tuple of 0/1 flags, got {corner!r}")
    key = ("corner", flags)
    if key in lat._cache:
        return lat._cache[key]

    mirrored = lat.coords.copy()
    for axis, f in enumerate(flags):
        if f:
            mirrored[:, axis] = lat.size + 1 - mirrored[:, axis]
    node_perm = np.array([lat.index[tuple(int(x) for x in c)] for c in mirrored], dtype=int)

    edge_perm = np.empty(lat.n_edges, dtype=int)
    for e, (a, b) in enumerate(lat.edges):
        edge_perm[e] = lat.edge_between(node_perm[a], node_perm[b])

    lat._cache[key] = (node_perm, edge_perm)
    return node_perm, edge_perm


def corner_vertex(lat: Lattice, corner) -> np.ndarray:
    """Vertex of the bounding box ``[0, n+1]^d`` selected by the corner flags."""
    return (lat.size + 1) * np.asarray(corner, dtype=float)
