import itertools
import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from conftest import random_couplings
from ionspec.chain import CouplingMatrix, power_law_couplings
from ionspec.drive import DriveSchedule, Tone
from ionspec.quantum import (
    MAX_DENSE_SPINS, DimensionError, SpinState, apply_sigma_y_sum, axis_in_xy, config_index, config_label,
    diagonalize, evolve, flip, hamiltonian_matrix, ising_diagonal, mirror, partial_trace, populations_along,
    propagate, propagate_exact, rotate_global, rotation_operator,
)

# Pauli matrices written in the sigma_x eigenbasis, basis order (down_x, up_x)
X = np.diag([-1.0, 1.0]).astype(complex)
Y = np.array([[0, -1j], [1j, 0]])
I2 = np.eye(2)


def kron_site(op, i, n):
    return reduce(np.kron, [op if k == i else I2 for k in range(n)])


def brute_hamiltonian(j: np.ndarray, b: float) -> np.ndarray:
    n = len(j)
    h = sum(j[a, c] * kron_site(X, a, n) @ kron_site(X, c, n) for a in range(n) for c in range(a + 1, n))
    return h + b * sum(kron_site(Y, a, n) for a in range(n))


def random_state(rng, n):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return SpinState(n, v / np.linalg.norm(v))


def test_labels_roundtrip():
    assert config_index("101") == 5
    assert config_label(5, 3) == "101"
    assert flip(7, 0, 3) == 3  # spin 0 is the most significant bit
    assert mirror(config_index("110"), 3) == config_index("011")


@given(st.integers(1, 6), st.data())
def test_state_normalized(n, data):
    c = data.draw(st.integers(0, 2**n - 1))
    s = SpinState.from_config(n, c)
    assert np.sum(np.abs(s.amplitudes) ** 2) == pytest.approx(1.0, abs=1e-9)


def test_unnormalized_state_rejected():
    with pytest.raises(ValueError):
        SpinState(1, np.array([1.0, 1.0]))


def test_two_spin_energies():
    assert ising_diagonal(power_law_couplings(2, 1.0, 1.0)) == pytest.approx([1, -1, -1, 1])


def test_zero_couplings():
    assert not np.any(ising_diagonal(CouplingMatrix(np.zeros((4, 4)))))


def test_three_spin_brute_force():
    rng = np.random.default_rng(3)
    j = random_couplings(rng, 3)
    expected = []
    for bits in itertools.product([0, 1], repeat=3):
        s = [1 if b else -1 for b in bits]
        expected.append(sum(j.values[a, c] * s[a] * s[c] for a in range(3) for c in range(a + 1, 3)))
    assert ising_diagonal(j) == pytest.approx(expected, abs=1e-12)


def test_three_spin_defect_splitting():
    j = CouplingMatrix(np.array([[0, 1, 0.5], [1, 0, 1], [0.5, 1, 0]]))
    d = ising_diagonal(j)
    assert d[7] - d[config_index("011")] == pytest.approx(3.0)


def test_sigma_y_sum_examples():
    assert apply_sigma_y_sum(SpinState.from_config(1, "1")) == pytest.approx([-1j, 0])
    assert apply_sigma_y_sum(SpinState.from_config(2, "11")) == pytest.approx([0, -1j, -1j, 0])


@given(st.integers(0, 2**31 - 1))
def test_sigma_y_expectation_real(seed):
    psi = random_state(np.random.default_rng(seed), 3)
    ev = np.vdot(psi.amplitudes, apply_sigma_y_sum(psi))
    assert abs(ev.imag) < 1e-12


@given(st.integers(1, 5), st.floats(-2, 2), st.integers(0, 2**31 - 1))
def test_hamiltonian_matches_kronecker(n, b, seed):
    j = random_couplings(np.random.default_rng(seed), n)
    assert hamiltonian_matrix(j, b) == pytest.approx(brute_hamiltonian(j.values, b), abs=1e-12)


def test_hamiltonian_structure():
    h = hamiltonian_matrix(random_couplings(np.random.default_rng(0), 4), 0.7)
    off = h - np.diag(np.diag(h))
    rows, cols = np.nonzero(np.abs(off) > 0)
    assert all(bin(r ^ c).count("1") == 1 for r, c in zip(rows, cols))


def test_two_spin_spectrum():
    e = diagonalize(power_law_couplings(2, 1.0, 1.0), 0.0).energies
    assert e == pytest.approx([-1, -1, 1, 1])


def test_afm_ground_configuration():
    d = ising_diagonal(power_law_couplings(5, 1.0, 1.0))
    ground = {config_label(c, 5) for c in np.flatnonzero(d == d.min())}
    assert ground <= {"10101", "01010"} and ground


@given(st.integers(2, 6), st.floats(0.05, 3.0), st.integers(0, 2**31 - 1))
def test_eigen_residual(n, b, seed):
    j = random_couplings(np.random.default_rng(seed), n)
    sol = diagonalize(j, b)
    h = hamiltonian_matrix(j, b)
    resid = h @ sol.states - sol.states * sol.energies
    assert np.max(np.abs(resid)) < 1e-8


def test_dense_cap():
    with pytest.raises(DimensionError):
        diagonalize(power_law_couplings(MAX_DENSE_SPINS + 1, 1.0, 1.0))


def test_selection_rule_at_zero_field():
    j = random_couplings(np.random.default_rng(5), 4)
    for a in range(16):
        v = apply_sigma_y_sum(SpinState.from_config(4, a))
        for b in np.flatnonzero(np.abs(v) > 1e-12):
            assert bin(a ^ int(b)).count("1") == 1


def test_single_spin_rabi():
    zero = CouplingMatrix(np.zeros((1, 1)))
    b = 0.8
    for t in (0.05, 1 / (8 * b), 0.4):
        s = evolve(SpinState.from_config(1, "1"), zero, DriveSchedule(b0=b, duration=t))
        sx = s.probabilities[1] - s.probabilities[0]
        assert sx == pytest.approx(math.cos(4 * math.pi * b * t), abs=1e-7)
    s = evolve(SpinState.from_config(1, "1"), zero, DriveSchedule(b0=b, duration=1 / (8 * b)))
    assert s.probabilities[1] == pytest.approx(0.5, abs=1e-7)


def test_field_free_phases():
    j = random_couplings(np.random.default_rng(1), 3)
    psi = random_state(np.random.default_rng(2), 3)
    t = 0.37
    out = evolve(psi, j, DriveSchedule(duration=t))
    expected = psi.amplitudes * np.exp(-2j * np.pi * ising_diagonal(j) * t)
    assert out.amplitudes == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_constant_field_matches_matrix_exponential(n):
    rng = np.random.default_rng(n)
    j = random_couplings(rng, n)
    psi = random_state(rng, n)
    b, t = 0.6, 1.3
    out = evolve(psi, j, DriveSchedule(b0=b, duration=t)).amplitudes
    ref = expm(-2j * np.pi * brute_hamiltonian(j.values, b) * t) @ psi.amplitudes
    assert abs(np.vdot(ref, out)) ** 2 == pytest.approx(1.0, abs=1e-7)
    ex = propagate_exact(psi, j, b, t).amplitudes
    assert abs(np.vdot(ex, out)) ** 2 == pytest.approx(1.0, abs=1e-7)


def test_norm_and_energy_conservation_10ms():
    rng = np.random.default_rng(7)
    j = random_couplings(rng, 5)
    psi = random_state(rng, 5)
    b = 0.4
    out = evolve(psi, j, DriveSchedule(b0=b, duration=10.0))
    assert abs(1 - np.vdot(out.amplitudes, out.amplitudes).real) < 1e-9
    h = hamiltonian_matrix(j, b)
    e0 = np.vdot(psi.amplitudes, h @ psi.amplitudes).real
    e1 = np.vdot(out.amplitudes, h @ out.amplitudes).real
    assert abs(e1 - e0) < 1e-7


def test_norm_conserved_under_modulated_drive():
    j = power_law_couplings(6, 1.0, 1.0)
    sched = DriveSchedule(0.0, (Tone(0.3, 3.1), Tone(0.2, 4.4, 0.5)), 10.0)
    out = evolve(SpinState.from_config(6, 63), j, sched)
    assert abs(1 - np.sum(out.probabilities)) < 1e-9


def test_split_and_rk4_agree():
    j = power_law_couplings(4, 1.0, 1.0)
    sched = DriveSchedule.probe(2.5, 0.2, 2.0)
    diag = ising_diagonal(j)
    psi0 = SpinState.from_config(4, 15).amplitudes
    kw = dict(field_bound=0.2, freq_bound=2.5)
    a, _ = propagate(psi0, diag, sched, 2.0, 4, **kw)
    b, _ = propagate(psi0, diag, sched, 2.0, 4, method="rk4", **kw)
    assert abs(np.vdot(a, b)) ** 2 == pytest.approx(1.0, abs=1e-7)


def test_mirror_symmetry_preserved():
    j = power_law_couplings(5, 1.0, 1.0)
    out = evolve(SpinState.from_config(5, 31), j, DriveSchedule.probe(4.1, 0.15, 3.0))
    p = out.probabilities
    for c in range(32):
        assert p[c] == pytest.approx(p[mirror(c, 5)], abs=1e-10)


def test_rotation_identities():
    assert rotation_operator([0, 0, 1], 0.0) == pytest.approx(np.eye(2))
    psi = random_state(np.random.default_rng(4), 3)
    full = rotate_global(psi, [0.3, 0.1, 0.9], 2 * math.pi)
    assert full.amplitudes == pytest.approx((-1) ** 3 * psi.amplitudes, abs=1e-12)


def test_rotation_then_x_readout_is_xy_readout():
    psi = random_state(np.random.default_rng(8), 3)
    rotated = rotate_global(psi, [0, 0, 1], -math.pi / 4)
    # direct expectation: P(all up along n) = |<n...n|psi>|^2 with n = (x+y)/sqrt2
    lhs = populations_along(rotated, [1, 0, 0])
    rhs = populations_along(psi, axis_in_xy(math.pi / 4))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_readout_axis_against_projector():
    psi = random_state(np.random.default_rng(9), 2)
    n_hat = np.array([0.2, -0.5, 0.7])
    n_hat /= np.linalg.norm(n_hat)
    gen = n_hat[0] * X + n_hat[1] * Y + n_hat[2] * np.array([[0, 1], [1, 0]])
    w, v = np.linalg.eigh(gen)
    up, down = v[:, 1], v[:, 0]
    probs = populations_along(psi, n_hat)
    basis = {0: down, 1: up}
    for c in range(4):
        vec = np.kron(basis[c >> 1], basis[c & 1])
        assert probs[c] == pytest.approx(abs(np.vdot(vec, psi.amplitudes)) ** 2, abs=1e-12)


def test_partial_trace_examples():
    rho = partial_trace(SpinState.from_config(2, "11"), [0])
    assert rho == pytest.approx(np.diag([0, 1]))
    bell = SpinState(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
    rho = partial_trace(bell, [0])
    assert np.trace(rho @ rho).real == pytest.approx(0.5)


def test_partial_trace_w_state_brute_force():
    n = 4
    psi = np.zeros(16, complex)
    for k in range(n):
        psi[flip(15, k, n)] = 0.5
    rho = np.outer(psi, psi.conj())
    # trace out spin 3 by summing over its value
    r = rho.reshape(8, 2, 8, 2)
    brute = np.einsum("aibi->ab", r)
    assert np.linalg.eigvalsh(partial_trace(SpinState(n, psi), [0, 1, 2])) == pytest.approx(
        np.linalg.eigvalsh(brute), abs=1e-12)
