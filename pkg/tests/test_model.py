import numpy as np
import pytest

from tfim2d.errors import InvalidSizeError
from tfim2d.lattice import build_lattice
from tfim2d.model import IsingParams, build_rydberg


def test_ising_params_validation():
    assert IsingParams(J=1.0, sign=-1).coupling == -1.0
    with pytest.raises(InvalidSizeError):
        IsingParams(J=-1.0)
    with pytest.raises(InvalidSizeError):
        IsingParams(sign=0)


def test_rydberg_nn_and_diagonal_ratio():
    lat = build_lattice(2)
    ryd = build_rydberg(lat, c6=4.0, spacing=1.0)
    assert ryd.couplings[0, 1] == pytest.approx(4.0 / 4.0)
    # Diagonal pair at distance sqrt(2): r^6 ratio is 8.
    assert ryd.couplings[0, 1] / ryd.couplings[0, 3] == pytest.approx(8.0)


def test_rydberg_offsets_sum_to_zero():
    for L in (2, 3, 4):
        ryd = build_rydberg(build_lattice(L), c6=1.0, spacing=1.0)
        assert ryd.delta_z.sum() == pytest.approx(0.0, abs=1e-12)


def test_rydberg_two_site_offsets_vanish():
    positions = np.array([[0.0, 0.0], [0.0, 1.0]])
    ryd = build_rydberg(None, c6=1.0, spacing=1.0, positions=positions)
    np.testing.assert_allclose(ryd.delta_z, [0.0, 0.0], atol=1e-15)
    assert ryd.couplings[0, 1] == pytest.approx(0.25)


def test_rydberg_decreasing_with_distance():
    lat = build_lattice(3)
    ryd = build_rydberg(lat, c6=1.0, spacing=1.0)
    pos = lat.positions()
    pairs = ryd.pair_list()
    dists = [np.linalg.norm(pos[i] - pos[j]) for i, j, _ in pairs]
    couplings = [c for _, _, c in pairs]
    order = np.argsort(dists)
    sorted_c = np.array(couplings)[order]
    sorted_d = np.array(dists)[order]
    for k in range(len(pairs) - 1):
        if sorted_d[k + 1] > sorted_d[k] + 1e-12:
            assert sorted_c[k + 1] < sorted_c[k]
    assert np.allclose(ryd.couplings, ryd.couplings.T)
    assert np.all(np.array(couplings) > 0)


def test_rydberg_validation():
    with pytest.raises(InvalidSizeError):
        build_rydberg(build_lattice(2), c6=-1.0, spacing=1.0)
    with pytest.raises(InvalidSizeError):
        build_rydberg(None, c6=1.0, spacing=1.0)
