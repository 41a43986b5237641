import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_calderon.lattice import all_corners, build_lattice, corner_map, slice_sets


def brute_force(d, n):
    """Enumerate nodes and edges of the lattice directly from the definitions."""
    box = itertools.product(range(n + 2), repeat=d)
    interior, boundary = [], []
    for x in box:
        extreme = sum(c in (0, n + 1) for c in x)
        if extreme == 0:
            interior.append(x)
        elif extreme == 1:
            boundary.append(x)
    nodes = set(interior) | set(boundary)
    bset = set(boundary)
    edges = set()
    for x in nodes:
        for i in range(d):
            y = x[:i] + (x[i] + 1,) + x[i + 1:]
            if y in nodes and not (x in bset and y in bset):
                edges.add((x, y))
    return interior, boundary, edges


@pytest.mark.parametrize("d,n", [(d, n) for d in (2, 3, 4) for n in range(1, 6) if d < 4 or n <= 4])
def test_counts_match_enumeration(d, n):
    lat = build_lattice(d, n)
    interior, boundary, edges = brute_force(d, n)
    assert lat.interior == sorted(interior)
    assert lat.boundary == sorted(boundary)
    assert {lat.edge_coords(e) for e in range(lat.n_edges)} == edges
    assert lat.n_edges == d * n ** (d - 1) * (n + 1)
    assert lat.n_boundary == 2 * d * n ** (d - 1)


@pytest.mark.parametrize("d,n,counts", [((2, 1, (1, 4, 4))), (3, 2, (8, 24, 36))])
def test_small_counts(d, n, counts):
    lat = build_lattice(d, n)
    assert (lat.n_interior, lat.n_boundary, lat.n_edges) == counts


def test_edges_are_sorted_and_canonical():
    lat = build_lattice(3, 3)
    pairs = [lat.edge_coords(e) for e in range(lat.n_edges)]
    assert pairs == sorted(pairs)
    assert all(p < q for p, q in pairs)


@pytest.mark.parametrize("d,n", [(1, 3), (0, 2), (2, 0)])
def test_rejects_bad_parameters(d, n):
    with pytest.raises(ValueError):
        build_lattice(d, n)


def coords(lat, idx):
    return {lat.nodes[i] for i in idx}


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_first_interior_slice_is_single_node(n):
    lat = build_lattice(3, n)
    assert coords(lat, slice_sets(lat, 3).L) == {(1, 1, 1)}


def test_slice_examples():
    lat = build_lattice(3, 2)
    s2 = slice_sets(lat, 2)
    assert coords(lat, s2.K) == {(0, 1, 1), (1, 0, 1), (1, 1, 0)}
    assert s2.L.size == 0
    s3 = slice_sets(lat, 3)
    assert len(s3.J) == 6
    assert set(s3.J.tolist()) == set(s3.K_minus.tolist())
    assert slice_sets(lat, 4).K_plus.size == 0
    assert len(s3.J_S) == 9
    assert len(s3.L_S) == 1
    assert len(slice_sets(lat, 4).L_S) == 4


@pytest.mark.parametrize("d,n", [(2, 3), (3, 2), (3, 3)])
def test_slice_structure(d, n):
    lat = build_lattice(d, n)
    s = lat.node_sum
    for t in range(0, d * (n + 1) + 1):
        ss = slice_sets(lat, t)
        assert (ss.L.size > 0) == (d <= t <= d * n)
        assert not set(ss.K_minus.tolist()) & set(ss.K_plus.tolist())
        for p in np.concatenate([ss.L, ss.K]):
            for q, _ in lat.adjacency[p]:
                assert abs(s[q] - t) == 1


def test_edge_level_is_lower_endpoint_sum():
    lat = build_lattice(3, 2)
    levels = lat.edge_level
    for e in range(lat.n_edges):
        p, q = lat.edge_coords(e)
        assert levels[e] == min(sum(p), sum(q))
    assert levels.min() == 2 and levels.max() == 6


def test_corner_map_example():
    lat = build_lattice(2, 1)
    nodes, _ = corner_map(lat, (1, 0))
    idx = lat.index
    assert nodes[idx[(0, 1)]] == idx[(2, 1)]
    assert nodes[idx[(1, 0)]] == idx[(1, 0)]
    assert nodes[idx[(1, 2)]] == idx[(1, 2)]


def test_origin_corner_is_identity():
    lat = build_lattice(3, 2)
    nodes, edges = corner_map(lat, (0, 0, 0))
    assert np.array_equal(nodes, np.arange(lat.n_nodes))
    assert np.array_equal(edges, np.arange(lat.n_edges))


def test_corner_map_rejects_bad_flags():
    lat = build_lattice(2, 2)
    with pytest.raises(ValueError):
        corner_map(lat, (2, 0))
    with pytest.raises(ValueError):
        corner_map(lat, (0, 0, 1))


@settings(max_examples=25, deadline=None)
@given(d=st.integers(2, 3), n=st.integers(1, 4), data=st.data())
def test_corner_maps_are_involutive_automorphisms(d, n, data):
    lat = build_lattice(d, n)
    c = data.draw(st.sampled_from(all_corners(d)))
    nodes, edges = corner_map(lat, c)
    assert np.array_equal(nodes[nodes], np.arange(lat.n_nodes))
    assert np.array_equal(edges[edges], np.arange(lat.n_edges))
    for e in range(lat.n_edges):
        a, b = lat.edges[e]
        assert {nodes[a], nodes[b]} == set(lat.edges[edges[e]].tolist())


def test_all_corners_order():
    assert all_corners(2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert len(all_corners(3)) == 8
