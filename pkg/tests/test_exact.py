import numpy as np
import pytest
from scipy.linalg import expm

from conftest import SX, SZ, dense_mag, kron_hamiltonian, op_at
from tfim2d.errors import MemoryGuardError, PropagationError
from tfim2d.exact import (
    DenseHamiltonian,
    DenseState,
    apply_hamiltonian,
    coupling_diagonal,
    evolve,
    init_polarized,
    magnetization_diagonal,
    measure,
    measure_state,
    run_protocol,
)
from tfim2d.krylov import expm_krylov
from tfim2d.lattice import build_grid, build_lattice
from tfim2d.model import IsingParams, build_rydberg
from tfim2d.schedule import make_anneal, make_quench


def test_init_polarized():
    s1 = init_polarized(1)
    np.testing.assert_array_equal(s1.amplitudes, [1.0, 0.0])
    s2 = init_polarized(2)
    np.testing.assert_array_equal(s2.amplitudes, [1.0, 0.0, 0.0, 0.0])
    mag, _, _ = measure(init_polarized(4), build_lattice(2))
    np.testing.assert_allclose(mag, -1.0)
    with pytest.raises(MemoryGuardError):
        init_polarized(21)


def test_hamiltonian_matches_kron_oracle():
    rng = np.random.default_rng(5)
    for rows, cols in [(1, 2), (2, 2), (2, 3)]:
        lat = build_grid(rows, cols)
        h_x, h_z = rng.normal(size=2)
        ref = kron_hamiltonian(lat, h_x, h_z, sign=-1, J=1.7)
        n = lat.n_sites
        static = -1.7 * coupling_diagonal(lat)
        mag_diag = magnetization_diagonal(n)
        psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
        out = apply_hamiltonian(psi, n, static, mag_diag, h_x, h_z)
        np.testing.assert_allclose(out, ref @ psi, atol=1e-12)


def test_dense_matrix_helper():
    lat = build_lattice(2)
    sched = make_quench(0.9, -0.4, 1.0)
    ham = DenseHamiltonian(lat, IsingParams(), sched)
    ref = kron_hamiltonian(lat, 0.9, -0.4)
    np.testing.assert_allclose(ham.dense_matrix(), ref, atol=1e-12)


def test_single_spin_rabi():
    lat = build_grid(1, 1)
    series = run_protocol(lat, make_quench(1.0, 0.0, 3.0), dt=0.01,
                          t_record=np.arange(0.0, 3.01, 0.3))
    for t, m in zip(series.times, series.mag[:, 0]):
        assert m == pytest.approx(-np.cos(2 * t), abs=1e-10)


def test_zero_transverse_field_is_stationary():
    lat = build_lattice(2)
    series = run_protocol(lat, make_quench(0.0, 0.3, 1.0), dt=0.02,
                          t_record=[0.5, 1.0])
    np.testing.assert_allclose(series.mag, -1.0, atol=1e-12)
    np.testing.assert_allclose(series.corr_line, 0.0, atol=1e-12)


def test_measure_ghz_and_uniform():
    lat = build_grid(1, 2)
    ghz = DenseState(np.array([1.0, 0, 0, 1.0]) / np.sqrt(2), 2)
    mag, corr_line, corr_nn = measure(ghz, lat)
    np.testing.assert_allclose(mag, 0.0, atol=1e-12)
    assert corr_nn == pytest.approx(1.0)
    uniform = DenseState(np.full(4, 0.5, dtype=complex), 2)
    mag, _, _ = measure(uniform, lat)
    np.testing.assert_allclose(mag, 0.0, atol=1e-12)


def test_evolution_against_expm_oracle():
    lat = build_lattice(2)
    sched = make_quench(1.3, 0.5, 0.7)
    series = run_protocol(lat, sched, dt=0.01, t_record=[0.7])
    ref = expm(-1j * 0.7 * kron_hamiltonian(lat, 1.3, 0.5)) @ init_polarized(4).amplitudes
    np.testing.assert_allclose(series.mag[-1], dense_mag(ref, 4), atol=1e-10)


def test_norm_and_energy_conservation():
    lat = build_lattice(3)
    sched = make_quench(2.0, 0.0, 1.5)
    state = init_polarized(9)
    ham = DenseHamiltonian(lat, IsingParams(), sched)
    e0 = ham.expectation(state.amplitudes, 0.0)
    evolve(state, lat, IsingParams(), sched, dt=0.01, t_record=[1.5])
    assert abs(state.norm() - 1.0) < 1e-10
    e1 = ham.expectation(state.amplitudes, 1.5)
    assert abs(e1 - e0) < 1e-8 * max(1.0, abs(e0))


def test_halving_dt_is_converged():
    lat = build_lattice(2)
    sched = make_quench(2.0, 0.0, 1.0)
    a = run_protocol(lat, sched, dt=0.02, t_record=[1.0])
    b = run_protocol(lat, sched, dt=0.01, t_record=[1.0])
    assert np.abs(a.mag - b.mag).max() < 1e-8


def test_time_reversal_equivalence_small():
    lat = build_lattice(2)
    sched = make_quench(2.0, 0.0, 1.0)
    plus = run_protocol(lat, sched, dt=0.02, t_record=[0.5, 1.0], sign=+1)
    minus = run_protocol(lat, sched, dt=0.02, t_record=[0.5, 1.0], sign=-1)
    assert np.abs(plus.mag - minus.mag).max() < 1e-10
    assert np.abs(plus.corr_line - minus.corr_line).max() < 1e-10


def test_rydberg_evolution_against_expm():
    lat = build_lattice(2)
    ryd = build_rydberg(lat, c6=4.0, spacing=1.0)
    sched = make_quench(1.3, 0.2, 1.0)
    series = run_protocol(lat, sched, dt=0.01, t_record=[1.0], params=ryd)
    n = 4
    ham = np.zeros((16, 16))
    for i, j, coupling in ryd.pair_list():
        ham += coupling * op_at(SZ, i, n) @ op_at(SZ, j, n)
    for i in range(n):
        ham += ryd.delta_z[i] * op_at(SZ, i, n)
        ham += 1.3 * op_at(SX, i, n) + 0.2 * op_at(SZ, i, n)
    ref = expm(-1j * ham) @ init_polarized(4).amplitudes
    np.testing.assert_allclose(series.mag[-1], dense_mag(ref, 4), atol=1e-10)


def test_anneal_midpoint_fields_converge():
    # Time-dependent case: halving dt shrinks the midpoint-rule error ~4x.
    lat = build_lattice(2)
    sched = make_anneal("I", t_fall=1.0)
    coarse = run_protocol(lat, sched, dt=0.04, t_record=[4.0])
    mid = run_protocol(lat, sched, dt=0.02, t_record=[4.0])
    fine = run_protocol(lat, sched, dt=0.01, t_record=[4.0])
    err_coarse = np.abs(coarse.mag - fine.mag).max()
    err_mid = np.abs(mid.mag - fine.mag).max()
    assert err_mid < err_coarse / 2.5


def test_dominant_frequency_is_single_flip_gap():
    # Perturbative quench: the center site oscillates at the single-flip
    # energy 2*J*coordination = 8J (up to O(h_x^2) dressing).
    lat = build_lattice(3)
    rec = np.arange(0.0, 20.0, 0.05)
    series = run_protocol(lat, make_quench(0.5, 0.0, 20.0), dt=0.02, t_record=rec)
    signal = series.mag[:, lat.center_site]
    signal = (signal - signal.mean()) * np.hanning(len(signal))
    freqs = 2 * np.pi * np.fft.rfftfreq(len(signal), d=0.05)
    amp = np.abs(np.fft.rfft(signal))
    mask = freqs > 1.5  # exclude the slow drift envelope
    peak = freqs[mask][np.argmax(amp[mask])]
    assert 6.0 <= peak <= 10.0  # within 25% of 8J


def test_krylov_nonconvergence_raises():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(400, 400))
    h = (a + a.T) * 10
    v = rng.normal(size=400).astype(complex)
    with pytest.raises(PropagationError):
        expm_krylov(lambda x: h @ x, v, -1j * 1.0, tol=1e-14, max_dim=4)


def test_dt_guard():
    lat = build_lattice(2)
    with pytest.raises(MemoryGuardError):
        run_protocol(lat, make_quench(1.0, 0.0, 1.0), dt=0.1, t_record=[1.0])


def test_measure_state_pairs():
    lat = build_lattice(2)
    state = init_polarized(4)
    mag, raw = measure_state(state, lat, pairs=[(0, 1), (0, 3)])
    assert raw[(0, 1)] == pytest.approx(1.0)
    assert raw[(0, 3)] == pytest.approx(1.0)
    np.testing.assert_allclose(mag, -1.0)
