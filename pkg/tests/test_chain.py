import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from ionspec.chain import (
    ChainError, ChainModes, CouplingMatrix, ResonanceError, TrapConfig, chain_couplings, compute_couplings,
    equilibrium_positions, power_law_couplings, transverse_modes, validity_check,
)
from ionspec.infer import fit_power_law


def _brute_positions(n):
    def energy(u):
        e = 0.5 * np.sum(u**2)
        for i in range(n):
            for j in range(i + 1, n):
                e += 1.0 / abs(u[i] - u[j])
        return e
    res = minimize(energy, np.linspace(-1, 1, n) * n / 2, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
    return np.sort(res.x)


def test_single_ion_sits_at_center():
    assert equilibrium_positions(1) == pytest.approx([0.0])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_positions_match_direct_minimization(n):
    assert equilibrium_positions(n) == pytest.approx(_brute_positions(n), abs=1e-5)


def test_two_ion_closed_form():
    assert equilibrium_positions(2) == pytest.approx([-(0.25) ** (1 / 3), 0.25 ** (1 / 3)], abs=1e-12)


@given(st.integers(2, 16))
def test_positions_symmetric_increasing(n):
    u = equilibrium_positions(n)
    assert np.all(np.diff(u) > 0)
    assert u == pytest.approx(-u[::-1], abs=1e-10)
    diffs = u[:, None] - u[None, :]
    np.fill_diagonal(diffs, np.inf)
    grad = u - np.sum(np.sign(diffs) / diffs**2, axis=1)
    assert np.max(np.abs(grad)) < 1e-12


def test_two_ion_modes():
    trap = TrapConfig(2, 4.8, 1.0)
    m = transverse_modes(equilibrium_positions(2), trap)
    assert m.mode_freqs == pytest.approx([4.8, np.sqrt(4.8**2 - 1.0)], abs=1e-12)
    assert np.abs(m.mode_matrix[:, 0]) == pytest.approx([2**-0.5] * 2)
    assert m.mode_matrix[0, 1] * m.mode_matrix[1, 1] < 0


def test_single_ion_modes_and_no_couplings():
    modes, j = chain_couplings(TrapConfig(1, 4.8, 1.0))
    assert modes.mode_freqs == pytest.approx([4.8])
    assert modes.mode_matrix == pytest.approx(np.ones((1, 1)))
    assert j.pairs() == []


@given(st.integers(2, 10), st.floats(0.3, 1.0))
def test_modes_orthonormal_com_uniform(n, wz):
    trap = TrapConfig(n, 4.8, wz, detuning_mu=4.9)
    m = transverse_modes(equilibrium_positions(n), trap)
    b = m.mode_matrix
    assert np.max(np.abs(b.T @ b - np.eye(n))) < 1e-10
    assert np.abs(b[:, 0]) == pytest.approx(np.full(n, n**-0.5), abs=1e-8)
    assert m.mode_freqs[0] == pytest.approx(4.8, abs=1e-12)


def test_two_ion_coupling_hand_value():
    # unit Rabi and recoil; mu^2 - w^2 = 1 and 2 kHz^2 for COM and tilt
    b = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    modes = ChainModes(np.array([-0.5, 0.5]), np.array([np.sqrt(2.0), 1.0]) * 1e-3, b)
    trap = TrapConfig(2, np.sqrt(2.0) * 1e-3, 0.5e-3, carrier_rabi=1.0, recoil_frequency=1.0,
                      detuning_mu=np.sqrt(3.0) * 1e-3, resonance_floor=0.0)
    assert compute_couplings(modes, trap).values[0, 1] == pytest.approx(0.25, rel=1e-9)


@given(st.integers(2, 10), st.floats(4.85, 6.0))
def test_coupling_symmetry(n, mu):
    _, j = chain_couplings(TrapConfig(n, 4.8, 1.0, detuning_mu=mu))
    assert np.array_equal(j.values, j.values.T)
    assert np.all(np.diag(j.values) == 0)


def test_resonance_is_refused():
    with pytest.raises(ResonanceError):
        chain_couplings(TrapConfig(4, 4.8, 1.0, detuning_mu=4.8))


def test_far_detuning_is_dipolar():
    _, j = chain_couplings(TrapConfig(8, 4.8, 1.0, detuning_mu=10.0))
    assert 2.5 <= fit_power_law(j)[1] <= 3.0


def test_dipolar_limit():
    # uneven spacing puts the asymptote slightly above 3
    _, j = chain_couplings(TrapConfig(8, 4.8, 1.0, detuning_mu=1000.0))
    assert fit_power_law(j)[1] == pytest.approx(3.0, abs=0.02)


def test_zigzag_refused():
    with pytest.raises(ChainError):
        chain_couplings(TrapConfig(14, 4.8, 1.0))


def test_alpha_increases_with_detuning():
    alphas = [fit_power_law(chain_couplings(TrapConfig(8, 4.8, 1.0, detuning_mu=mu))[1])[1]
              for mu in (4.85, 5.0, 5.5, 7.0, 12.0)]
    assert np.all(np.diff(alphas) > 0)


def test_validity_flags():
    trap = TrapConfig(8, 4.8, 1.0)
    modes, _ = chain_couplings(trap)
    assert validity_check(modes, trap).ok
    weak = TrapConfig(8, 4.8, 1.0, carrier_rabi=1e-9)
    r = validity_check(modes, weak)
    assert np.max(r.ratios) < 1e-9 and r.ok
    # push the detuning to one eta*Omega of the COM mode
    eta_omega = (trap.detuning_mu - 4.8) * 1e3 / validity_check(modes, trap).detuning_in_eta_omega
    close = TrapConfig(8, 4.8, 1.0, detuning_mu=4.8 + eta_omega / 1e3)
    assert not validity_check(chain_couplings(close)[0], close).ok


def test_power_law_generator():
    j = power_law_couplings(5, 2.0, 1.5)
    assert j.values[1, 3] == pytest.approx(2.0 / 2**1.5)
    assert isinstance(j, CouplingMatrix)
