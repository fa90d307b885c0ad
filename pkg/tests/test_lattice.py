import numpy as np
import pytest
from hypothesis import given, strategies as st

from tfim2d.errors import InvalidSizeError
from tfim2d.lattice import build_grid, build_lattice


def test_edge_counts():
    assert len(build_lattice(2).nn_edges) == 4
    assert len(build_lattice(4).nn_edges) == 24


def test_center_site_l10():
    lat = build_lattice(10)
    assert lat.center_site == 44
    assert lat.site_coords(44) == (4, 4)


def test_too_small_raises():
    with pytest.raises(InvalidSizeError):
        build_lattice(1)
    with pytest.raises(InvalidSizeError):
        build_lattice(0)


def test_too_large_raises():
    with pytest.raises(InvalidSizeError):
        build_lattice(17)


@given(st.integers(min_value=2, max_value=8))
def test_square_invariants(L):
    lat = build_lattice(L)
    assert lat.n_sites == L * L
    assert len(lat.nn_edges) == 2 * L * (L - 1)
    assert len(set(lat.nn_edges)) == len(lat.nn_edges)
    assert all(a != b for a, b in lat.nn_edges)
    assert sorted(lat.snake_order) == list(range(L * L))


@given(st.integers(min_value=2, max_value=8),
       st.sampled_from(["row", "col"]))
def test_snake_adjacency(L, orientation):
    lat = build_lattice(L, orientation=orientation)
    edges = set(lat.nn_edges)
    for a, b in zip(lat.snake_order, lat.snake_order[1:]):
        assert (min(a, b), max(a, b)) in edges


def test_rectangular_grid():
    lat = build_grid(2, 3)
    assert lat.n_sites == 6
    assert len(lat.nn_edges) == 7  # 2*2 horizontal + 3 vertical
    assert lat.center_site == lat.site_index(0, 1)


def test_chain_grid():
    lat = build_grid(1, 8)
    assert len(lat.nn_edges) == 7
    assert lat.center_site == 3
    assert lat.corr_line_pairs() == [(3, 4), (3, 5), (3, 6), (3, 7)]
    np.testing.assert_allclose(lat.corr_line_distances(), [1, 2, 3, 4])


def test_corr_line_pairs_square():
    assert build_lattice(3).corr_line_pairs() == [(4, 5)]
    assert build_lattice(4).corr_line_pairs() == [(5, 6), (5, 7)]
    assert build_lattice(3).center_row_sites() == [3, 4, 5]


def test_neighbors():
    lat = build_lattice(3)
    assert lat.neighbors(4) == [1, 3, 5, 7]
    assert lat.neighbors(0) == [1, 3]
