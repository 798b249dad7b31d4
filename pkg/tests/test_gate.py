import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from erasure_qec.gate import (COMP_LABELS, LadderHamiltonian, PulseShape, computational_states,
                              cx_composition_check, dual_rail_hamiltonian, effective_angle,
                              equivalent_ramp_time, evolve, gauge_infidelity, ideal_sqrt_iswap,
                              population_trace, pulse_value, simulated_angle, sqrt_iswap_target,
                              two_level_diabatic_sim, write_trace_csv)
from erasure_qec.layout import ParameterError
from erasure_qec.physics import DeviceParams, from_hz, leakage_estimate

_Z1 = np.array([1, 1, -1, -1])
_Z2 = np.array([1, -1, 1, -1])


# ----------------------------------------------------------------- pulses

def test_pulse_endpoints_and_peak():
    s = PulseShape(3.0, 110e-9)
    assert pulse_value(s, 0.0) == 0.0
    assert pulse_value(s, 55e-9) == pytest.approx(3.0, rel=1e-15)
    assert pulse_value(s, -1e-9) == 0.0 and pulse_value(s, 111e-9) == 0.0


@given(st.floats(1e3, 1e10), st.floats(1e-9, 1e-6))
@settings(max_examples=50, deadline=None)
def test_pulse_vanishes_at_both_ends(g_max, t_g):
    s = PulseShape(g_max, t_g)
    assert s(0.0) == 0.0
    assert abs(s(t_g)) <= 1e-28 * g_max
    assert 0.0 <= s(0.3 * t_g) <= g_max


def test_pulse_derivative_is_analytic():
    s = PulseShape(2.0, 1.0)
    for t in (0.1, 0.3, 0.45, 0.7):
        h = 1e-6
        assert s.derivative(t) == pytest.approx((s(t + h) - s(t - h)) / (2 * h), rel=1e-6, abs=1e-8)


def test_equivalent_ramp_time():
    p = DeviceParams.gate_example()
    t_ramp = equivalent_ramp_time(PulseShape(p.g_c, p.t_g))
    assert t_ramp == pytest.approx(20e-9, rel=0.3)
    lin = PulseShape(1.0, 100e-9, "linear_ramp", t_ramp=20e-9)
    assert equivalent_ramp_time(lin) == pytest.approx(20e-9)


def test_pulse_rejects_bad_form():
    with pytest.raises(ParameterError):
        PulseShape(1.0, 1.0, "gaussian")
    with pytest.raises(ParameterError):
        PulseShape(1.0, 0.0)


# -------------------------------------------------------------- evolution

def test_constant_diagonal_gives_pure_phase():
    h = LadderHamiltonian(2, 3, [1.3, -0.7], -0.4)
    psi0 = np.zeros(9, dtype=complex)
    psi0[h.fock_index((1, 2))] = 1.0
    energy = h.static[h.fock_index((1, 2)), h.fock_index((1, 2))]
    times = np.linspace(0, 10.0, 21)
    final, ts, states, drift = evolve(h, psi0, 10.0, 1e-12, t_eval=times)
    pops = np.abs(states) ** 2
    assert np.max(np.abs(pops - pops[0])) < 1e-12
    assert final[h.fock_index((1, 2))] == pytest.approx(np.exp(-1j * energy * 10.0), abs=1e-9)


def test_decoupled_pairs_keep_populations():
    p = DeviceParams.gate_example()
    h = dual_rail_hamiltonian(p, 3, PulseShape(0.0, p.t_g), corrective_shifts="none")
    comp = computational_states(h)
    final, _, _, _ = evolve(h, comp, p.t_g, 1e-10)
    pops = np.abs(comp.conj().T @ final) ** 2
    assert np.allclose(pops, np.eye(4), atol=1e-10)


def test_evolve_rejects_bad_input():
    h = LadderHamiltonian(1, 2, [1.0], 0.0)
    with pytest.raises(ParameterError):
        evolve(h, np.array([1.0, 1.0]), 1.0)
    with pytest.raises(ParameterError):
        evolve(h, np.array([1.0, 0.0]), 1.0, tol=0.0)


def random_ladder(seed, modes=3, levels=3):
    rng = np.random.default_rng(seed)
    freqs = rng.normal(size=modes)
    couplings = {(i, i + 1): rng.normal() * 0.5 for i in range(modes - 1)}
    amp, w = rng.normal(), rng.uniform(0.5, 3.0)
    drives = [(0, modes - 1, lambda t: amp * math.sin(w * t))]
    shifts = [(1, lambda t: 0.3 * math.cos(w * t))]
    return LadderHamiltonian(modes, levels, freqs, -rng.uniform(0.1, 1.0), couplings, drives, shifts), rng


@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-8, 1e-10]))
@settings(max_examples=15, deadline=None)
def test_norm_conserved(seed, tol):
    h, rng = random_ladder(seed)
    psi = rng.normal(size=h.dim) + 1j * rng.normal(size=h.dim)
    psi /= np.linalg.norm(psi)
    _, _, states, drift = evolve(h, psi, 5.0, tol, t_eval=np.linspace(0, 5.0, 26))
    assert drift < 10 * tol


@given(st.integers(0, 2**32 - 1), st.integers(0, 4))
@settings(max_examples=15, deadline=None)
def test_excitation_sector_conserved(seed, sector):
    h, rng = random_ladder(seed)
    idx = np.flatnonzero(h.excitations == sector)
    psi = np.zeros(h.dim, dtype=complex)
    psi[idx] = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
    psi /= np.linalg.norm(psi)
    _, _, states, _ = evolve(h, psi, 5.0, 1e-10, t_eval=np.linspace(0, 5.0, 11))
    outside = np.abs(states[:, h.excitations != sector]) ** 2
    assert outside.max() < 1e-12


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_hamiltonian_hermitian(seed):
    h, rng = random_ladder(seed)
    m = h.matrix(rng.uniform(0, 10))
    assert np.allclose(m, m.conj().T, atol=0)


def test_fock_index_round_trip():
    h = LadderHamiltonian(4, 3, [0, 0, 0, 0], 0.0)
    for i in range(h.dim):
        assert h.fock_index(h.fock_label(i)) == i


# ------------------------------------------------------ gauge & targets

def test_gauge_infidelity_removes_z_gauge():
    rng = np.random.default_rng(5)
    d1, d2, e1, e2, zz = rng.uniform(-math.pi, math.pi, 5)
    left = np.exp(-1j * (d1 * _Z1 + d2 * _Z2))
    right = np.exp(-1j * (e1 * _Z1 + e2 * _Z2 + zz * _Z1 * _Z2))
    m = np.exp(0.4j) * left[:, None] * sqrt_iswap_target() * right[None, :]
    infid, _, converged = gauge_infidelity(m)
    assert infid < 1e-12
    assert converged


def test_gauge_infidelity_of_wrong_gate():
    # best overlap of the identity with any Z-gauged sqrt(iSWAP): |2 + sqrt 2|^2 / 16
    infid, _, _ = gauge_infidelity(np.eye(4, dtype=complex))
    assert infid == pytest.approx(1 - (2 + math.sqrt(2)) ** 2 / 16, abs=1e-10)


def test_cx_identity_for_ideal_inputs():
    base = cx_composition_check(ideal_sqrt_iswap(0.0))["infidelity"]
    assert base < 1e-12
    shifted = cx_composition_check(ideal_sqrt_iswap(0.1))["infidelity"]
    assert abs(shifted - base) < 1e-12


def test_cx_with_random_gauge():
    rng = np.random.default_rng(11)
    for _ in range(3):
        d1, d2, e1, e2, zz = rng.uniform(-math.pi, math.pi, 5)
        left = np.exp(-1j * (d1 * _Z1 + d2 * _Z2))
        right = np.exp(-1j * (e1 * _Z1 + e2 * _Z2 + zz * _Z1 * _Z2))
        m = left[:, None] * sqrt_iswap_target() * right[None, :]
        assert cx_composition_check(m)["infidelity"] < 1e-12


# -------------------------------------------------------- full gate run

def test_tuned_gate_quality(tuned_gate, tuned_gate_params):
    r = tuned_gate
    assert r.converged
    assert r.infidelity <= 2e-5
    assert 2e-6 / 3 <= r.leakage <= 3 * 2e-6
    assert r.norm_drift < 10 * r.tol
    assert r.outside_sector < 1e-12
    assert simulated_angle(r) == pytest.approx(math.pi / 4, abs=1e-6)
    assert abs(tuned_gate_params.t_g - 110e-9) < 0.03 * 110e-9


def test_leakage_is_detectable(tuned_gate):
    h = tuned_gate.hamiltonian
    comp = computational_states(h)
    rest = tuned_gate.final_states - comp @ (comp.conj().T @ tuned_gate.final_states)
    labels = [h.fock_label(i) for i in range(h.dim)]
    flagged = np.array([l[0] + l[1] == 0 or l[2] + l[3] == 0 for l in labels])
    pops = np.abs(rest) ** 2
    assert pops[~flagged].sum() < 1e-12
    assert pops[flagged].sum(axis=0) == pytest.approx(tuned_gate.leakage_per_state, rel=1e-6, abs=1e-15)


def test_cx_composition_of_simulated_gate(tuned_gate):
    r = cx_composition_check(tuned_gate.unitary, tuned_gate.gauge)
    assert r["infidelity"] <= 4 * tuned_gate.infidelity


def test_eleven_trace_transient(tuned_gate, tuned_gate_params, tmp_path):
    ts, pops = population_trace(tuned_gate, tuned_gate_params, "11", n_times=81)
    leaked = [k for k in pops if k not in COMP_LABELS]
    assert leaked
    mid = len(ts) // 2
    assert max(pops[k][mid] for k in leaked) > 1e-3
    for k in leaked:
        assert pops[k][-1] < 1e-5
    path = tmp_path / "trace.csv"
    write_trace_csv(path, ts, pops)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:5] == ["t", "00", "01", "10", "11"]
    assert len(lines) == len(ts) + 1


def test_trace_rejects_unknown_input(tuned_gate, tuned_gate_params):
    with pytest.raises(ParameterError):
        population_trace(tuned_gate, tuned_gate_params, "22")


def test_effective_model_angle_at_tuned_time(tuned_gate_params):
    # the effective-model quadrature under-rotates relative to the exact dynamics
    theta = effective_angle(tuned_gate_params)
    ratio = abs(theta) / (math.pi / 4)
    assert 0.70 < ratio < 0.80


def test_effective_angle_quadrature():
    # constant coupling: theta = g_XX t_g exactly
    p = DeviceParams.gate_example()
    theta = effective_angle(p)
    ts = np.linspace(0, p.t_g, 20001)
    pulse = PulseShape(p.g_c, p.t_g)
    g = np.array([p.eta * pulse(t) ** 2 / p.delta**2 for t in ts])
    assert theta == pytest.approx(integrate.trapezoid(g, ts), rel=1e-6)


# --------------------------------------------------- two-level testbed

def test_two_level_zero_coupling():
    r = two_level_diabatic_sim(1.0, lambda t: 0.0, 10.0)
    assert np.max(r["P_D"]) < 1e-20


def test_two_level_matches_closed_form():
    g_max, delta, tr = from_hz(34e6), from_hz(0.5e9), 20e-9
    ts = np.linspace(0, tr, 401)
    num = two_level_diabatic_sim(delta, lambda t: g_max * t / tr, tr, ts)["P_D"]
    cf = leakage_estimate(g_max, delta, tr, ts)
    assert np.max(cf["P_D"]) == pytest.approx(np.max(num), rel=0.10)
    assert np.max(cf["P_D_small"]) == pytest.approx(np.max(num), rel=0.10)
    assert np.max(np.abs(cf["P_D"] - num)) < 0.10 * np.max(num)


@given(st.floats(0.02, 0.1), st.floats(5.0, 40.0))
@settings(max_examples=10, deadline=None)
def test_two_level_delta_doubling(ratio, cycles):
    delta = 1.0
    tr = cycles * 2 * math.pi / delta
    g_max = ratio * delta
    env = []
    for d in (delta, 2 * delta):
        r = two_level_diabatic_sim(d, lambda t: g_max * t / tr, tr, np.linspace(0, tr, 2001))
        env.append(np.max(r["P_D"]))
    assert env[0] / env[1] == pytest.approx(16.0, rel=0.05)


def test_two_level_rejects_nonzero_start():
    with pytest.raises(ParameterError):
        two_level_diabatic_sim(1.0, lambda t: 1.0, 1.0)
