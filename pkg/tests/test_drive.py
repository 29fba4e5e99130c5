import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ionspec.campaign import scan_window
from ionspec.chain import power_law_couplings
from ionspec.drive import (
    DriveSchedule, Tone, UnreachableError, one_flip_neighbors, plan_pulses, run_scan, sequential_pulses, w_manifold_fidelity,
    w_prep_schedule,
)
from ionspec.measure import MeasurementModel
from ionspec.peaks import extract_splittings
from ionspec.quantum import SpinState, config_index, evolve, hamming, ising_diagonal

TOP8 = 255


@pytest.fixture(scope="module")
def d8(pl8):
    return ising_diagonal(pl8)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Tone(0.1, -1.0)
    with pytest.raises(ValueError):
        DriveSchedule(0.0, (Tone(0.1, 1.0),), 0.0)


def test_field_is_sine_sum():
    s = DriveSchedule(0.2, (Tone(0.1, 2.0), Tone(0.3, 1.0, math.pi / 2)), 1.0)
    t = 0.13
    assert s.field(t) == pytest.approx(0.2 + 0.1 * math.sin(4 * math.pi * t) + 0.3 * math.cos(2 * math.pi * t))


def test_resonant_transfer_n8(pl8, d8):
    target = config_index("01111111")
    probe = DriveSchedule.probe(d8[TOP8] - d8[target], 0.1, 3.0)
    out = evolve(SpinState.from_config(8, TOP8), pl8, probe)
    assert 1 - out.probabilities[TOP8] > 0.5


def test_zero_amplitude_is_flat(pl8):
    grid = np.linspace(4.0, 6.0, 5)
    scan = run_scan(SpinState.from_config(8, TOP8), pl8, DriveSchedule.probe(1.0, 0.0, 3.0), grid,
                    tracked=[TOP8])
    assert scan.populations[:, 0] == pytest.approx(np.ones(5), abs=1e-12)


@pytest.fixture(scope="module")
def scan8(pl8, d8):
    grid = scan_window([d8[TOP8] - d8[c] for c in one_flip_neighbors(TOP8, 8)])
    return run_scan(SpinState.from_config(8, TOP8), pl8, DriveSchedule.probe(1.0, 0.1, 3.0), grid, workers=2)


@pytest.mark.xfail(strict=True, reason="probe light shift moves the 6.9 kHz pair by 0.041 kHz, over one 0.025 kHz step")
def test_noiseless_peaks_at_exact_splittings(scan8, d8):
    step = scan8.freq_grid[1] - scan8.freq_grid[0]
    found = extract_splittings(scan8)
    assert len(found) == 8
    for sp in found:
        assert sp.delta_e == pytest.approx(abs(d8[sp.final] - d8[sp.initial]), abs=step)


def test_light_shift_shrinks_with_probe_amplitude(pl8, d8, scan8):
    step = scan8.freq_grid[1] - scan8.freq_grid[0]
    weak = run_scan(SpinState.from_config(8, TOP8), pl8, DriveSchedule.probe(1.0, 0.05, 3.0), scan8.freq_grid,
                    workers=2)
    strong_err = {s.final: abs(s.delta_e - (d8[TOP8] - d8[s.final])) for s in extract_splittings(scan8)}
    weak_err = {s.final: abs(s.delta_e - (d8[TOP8] - d8[s.final])) for s in extract_splittings(weak)}
    assert max(weak_err.values()) < step
    worst = max(strong_err, key=strong_err.get)
    assert weak_err[worst] < 0.5 * strong_err[worst]


def test_shot_noise_error_bars(scan8, pl8):
    model = MeasurementModel(1000, 0.0, 0.0, 3)
    noisy = run_scan(SpinState.from_config(8, TOP8), pl8, DriveSchedule.probe(1.0, 0.1, 3.0), scan8.freq_grid,
                     measurement=model, seed=3, probabilities=None, workers=2)
    p = noisy.populations
    assert noisy.errors == pytest.approx(np.sqrt(p * (1 - p) / 1000), abs=1e-15)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(p.sum(axis=1) <= 1 + 3 * noisy.errors.sum(axis=1) + 1e-12)


def test_scan_deterministic_across_workers(pl8, scan8):
    grid = scan8.freq_grid[::8]
    model = MeasurementModel(1000, 0.02, 0.05, 11)
    runs = [run_scan(SpinState.from_config(8, TOP8), pl8, DriveSchedule.probe(1.0, 0.1, 3.0), grid,
                     measurement=model, seed=11, workers=w) for w in (1, 3, 3)]
    for r in runs[1:]:
        assert r.populations.tobytes() == runs[0].populations.tobytes()
        assert r.errors.tobytes() == runs[0].errors.tobytes()


def test_centers_robust_to_poor_preparation():
    j = power_law_couplings(5, 1.0, 1.0)
    d = ising_diagonal(j)
    grid = scan_window([d[31] - d[c] for c in one_flip_neighbors(31, 5)])
    tpl = DriveSchedule.probe(1.0, 0.1, 3.0)
    good = extract_splittings(run_scan(SpinState.from_config(5, 31), j, tpl, grid))
    mixture = [(0.35, SpinState.from_config(5, 31)), (0.65, SpinState.from_config(5, 0))]
    poor = extract_splittings(run_scan(mixture, j, tpl, grid, tracked=one_flip_neighbors(31, 5), reference=31))
    step = grid[1] - grid[0]
    assert {(s.initial, s.final) for s in poor} == {(s.initial, s.final) for s in good}
    by_key = {(s.initial, s.final): s.delta_e for s in good}
    for s in poor:
        assert abs(s.delta_e - by_key[(s.initial, s.final)]) < step


def test_weak_probe_population_is_quadratic_in_amplitude(pl8, d8):
    # the depleted population scales with B_p squared, so halving B_p quarters it
    f = d8[TOP8] - d8[config_index("01111111")]
    lost = []
    for amp in (0.02, 0.01):
        out = evolve(SpinState.from_config(8, TOP8), pl8, DriveSchedule.probe(f, amp, 0.5))
        lost.append(1 - out.probabilities[TOP8])
    assert lost[1] / lost[0] == pytest.approx(0.25, rel=0.1)


def test_no_pulses_is_identity(pl8):
    s = SpinState.from_config(8, 77)
    assert sequential_pulses(s, pl8, []).amplitudes is s.amplitudes


def test_two_pulse_sequence(pl8, d8):
    a, b, c = TOP8, config_index("01111111"), config_index("01111110")
    p1 = DriveSchedule.probe(d8[a] - d8[b], 0.1, 3.0)
    p2 = DriveSchedule.probe(abs(d8[b] - d8[c]), 0.1, 3.0)
    out = sequential_pulses(SpinState.from_config(8, a), pl8, [p1, p2])
    assert out.probabilities[c] > 0.25
    off = sequential_pulses(SpinState.from_config(8, a), pl8, [p1, DriveSchedule.probe(1.0, 0.1, 3.0)])
    two = [x for x in range(256) if hamming(x, a) == 2]
    assert off.probabilities[two].sum() < 0.05


def test_plan_trivial(pl8):
    assert plan_pulses(TOP8, TOP8, pl8) == []


def test_plan_n8_double_defect(pl8):
    plan = plan_pulses(TOP8, config_index("01111110"), pl8)
    assert [p.target for p in plan] in ([config_index("01111111"), config_index("01111110")],
                                        [config_index("11111110"), config_index("01111110")])
    out = sequential_pulses(SpinState.from_config(8, TOP8), pl8, [p.schedule for p in plan])
    assert out.probabilities[config_index("01111110")] > 0.25


@given(st.integers(0, 31))
def test_plan_n5_at_most_two_pulses(target):
    j = power_law_couplings(5, 1.0, 1.0)
    lengths = []
    for start in (31, 0):
        try:
            lengths.append(len(plan_pulses(start, target, j)))
        except UnreachableError:
            pass
    assert lengths and min(lengths) <= 2


def test_w_prep_n4():
    j = power_law_couplings(4, 1.0, 1.0)
    sched = w_prep_schedule(j)
    assert sched.duration == pytest.approx(1.8)
    assert len(sched.tones) == 2
    assert w_manifold_fidelity(evolve(SpinState.polarized(4), j, sched)) > 0.9


def test_w_prep_n2_single_tone():
    j = power_law_couplings(2, 0.8, 1.0)
    sched = w_prep_schedule(j)
    assert len(sched.tones) == 1
    assert sched.tones[0].frequency == pytest.approx(2 * 0.8)
