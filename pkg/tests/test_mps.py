import numpy as np
import pytest
from scipy.linalg import expm

from conftest import dense_mag, kron_hamiltonian
from tfim2d import exact
from tfim2d.errors import InvalidSizeError
from tfim2d.lattice import build_grid, build_lattice
from tfim2d.mps import (
    SZ,
    build_mpo,
    init_polarized_mps,
    isometry_defect,
    mps_to_dense,
    one_site_expectations,
    pair_expectations,
    run_protocol,
    tdvp2_step,
)
from tfim2d.observables import epsilon_z
from tfim2d.schedule import make_quench


def test_mpo_chain_bond_dimension():
    lat = build_grid(1, 2)
    mpo = build_mpo(lat, 0.5, 0.2)
    assert mpo.mpo_bond == 3


def test_mpo_matches_kron_oracle():
    rng = np.random.default_rng(42)
    for rows, cols in [(1, 3), (2, 2), (3, 3)]:
        lat = build_grid(rows, cols)
        h_x, h_z = rng.normal(size=2)
        mpo = build_mpo(lat, h_x, h_z, sign=-1, J=1.3)
        ref = kron_hamiltonian(lat, h_x, h_z, sign=-1, J=1.3,
                               site_of_bit=lat.snake_order)
        np.testing.assert_allclose(mpo.dense_matrix(), ref, atol=1e-12)
        assert mpo.mpo_bond <= 2 * lat.cols + 3


def test_mpo_zero_fields_spectrum():
    lat = build_lattice(2)
    mpo = build_mpo(lat, 0.0, 0.0)
    eigs = np.sort(np.linalg.eigvalsh(mpo.dense_matrix()))
    # Diagonal classical energies: sums of +-J over the 4 edges.
    ref = np.sort(kron_hamiltonian(lat, 0.0, 0.0).diagonal())
    np.testing.assert_allclose(eigs, ref, atol=1e-12)


def test_initial_mps_is_canonical_product():
    mps = init_polarized_mps(6)
    assert mps.canonical_center == 0
    assert isometry_defect(mps) < 1e-14
    np.testing.assert_allclose(one_site_expectations(mps, SZ), -1.0)
    assert mps.norm() == pytest.approx(1.0)


def test_product_state_with_zero_field_is_fixed_point():
    lat = build_grid(1, 4)
    mps = init_polarized_mps(4)
    mpo = build_mpo(lat, 0.0, 0.0)
    before = mps_to_dense(mps)
    _, eps = tdvp2_step(mps, mpo, 0.01)
    after = mps_to_dense(mps)
    phase = np.vdot(after, before)
    assert eps == 0.0
    assert np.linalg.norm(after * phase / abs(phase) - before) < 1e-12


def test_untruncated_matches_expm_oracle():
    lat = build_grid(2, 3)
    h_x = 1.1
    mps = init_polarized_mps(6, chi_max=8, svd_cutoff=0.0)
    mpo = build_mpo(lat, h_x, 0.0)
    steps, dt = 60, 0.005
    for _ in range(steps):
        tdvp2_step(mps, mpo, dt)
    ref = expm(-1j * steps * dt * kron_hamiltonian(lat, h_x, 0.0))
    psi_ref = ref[:, 0]
    vec = mps_to_dense(mps, lat)
    phase = np.vdot(vec, psi_ref)
    assert np.linalg.norm(vec * phase / abs(phase) - psi_ref) < 1e-6
    assert mps.eps_accum == 0.0
    assert isometry_defect(mps) < 1e-10


def test_truncation_produces_discarded_weight():
    lat = build_lattice(3)
    series = run_protocol(lat, make_quench(2.0, 0.0, 1.0), dt=0.01, chi_max=2,
                          t_record=[1.0])
    assert series.error_record[-1] > 0.0


def test_eps_accum_monotone():
    lat = build_lattice(3)
    rec = [0.25, 0.5, 0.75, 1.0]
    series = run_protocol(lat, make_quench(2.0, 0.0, 1.0), dt=0.01, chi_max=2,
                          t_record=rec)
    assert np.all(np.diff(series.error_record) >= 0)


def test_expectations_against_dense_conversion():
    rng = np.random.default_rng(3)
    mps = init_polarized_mps(5)
    mps.tensors = [
        np.asarray(rng.normal(size=(1, 2, 2)) + 1j * rng.normal(size=(1, 2, 2))),
        rng.normal(size=(2, 2, 3)) + 1j * rng.normal(size=(2, 2, 3)),
        rng.normal(size=(3, 2, 3)) + 1j * rng.normal(size=(3, 2, 3)),
        rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2)),
        rng.normal(size=(2, 2, 1)) + 1j * rng.normal(size=(2, 2, 1)),
    ]
    vec = mps_to_dense(mps)
    vec = vec / np.linalg.norm(vec)
    mags = one_site_expectations(mps, SZ)
    np.testing.assert_allclose(mags, dense_mag(vec, 5), atol=1e-10)
    raw = pair_expectations(mps, [(0, 3), (1, 4)], SZ)
    idx = np.arange(32)
    for (a, b), value in raw.items():
        za = 2.0 * ((idx >> a) & 1) - 1
        zb = 2.0 * ((idx >> b) & 1) - 1
        ref = float(np.abs(vec) ** 2 @ (za * zb))
        assert value == pytest.approx(ref, abs=1e-10)


def test_snake_orientation_independence_untruncated():
    sched = make_quench(1.5, 0.0, 0.4)
    rec = [0.2, 0.4]
    results = {}
    for orientation in ("row", "col"):
        lat = build_grid(2, 3, orientation=orientation)
        results[orientation] = run_protocol(
            lat, sched, dt=0.005, chi_max=16, svd_cutoff=0.0, t_record=rec
        )
    assert np.abs(results["row"].mag - results["col"].mag).max() < 1e-6


def test_single_site_reduces_to_rabi():
    lat = build_grid(1, 1)
    series = run_protocol(lat, make_quench(1.0, 0.0, 2.0), dt=0.01,
                          t_record=np.arange(0.0, 2.01, 0.25))
    for t, m in zip(series.times, series.mag[:, 0]):
        assert m == pytest.approx(-np.cos(2 * t), abs=1e-9)


def test_run_protocol_matches_exact_short():
    lat = build_lattice(3)
    sched = make_quench(0.5, 0.0, 0.5)
    rec = [0.25, 0.5]
    sm = run_protocol(lat, sched, dt=0.0025, chi_max=64, svd_cutoff=0.0, t_record=rec)
    se = exact.run_protocol(lat, sched, dt=0.01, t_record=rec)
    assert max(epsilon_z(se, sm, t, lat) for t in rec) < 1e-6
    assert np.abs(sm.corr_line - se.corr_line).max() < 1e-6


def test_chi_guard():
    with pytest.raises(InvalidSizeError):
        init_polarized_mps(4, chi_max=0)
    with pytest.raises(InvalidSizeError):
        init_polarized_mps(4, chi_max=512)
