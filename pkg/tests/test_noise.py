import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erasure_qec.noise import (PAULI_2Q_ALL, NoiseParams, ParameterError, effective_params,
                               imperfect_detection_adjust, make_rng, sample_faults,
                               standard_equivalent_rate)


def test_pm_default():
    assert NoiseParams(p=0.003).p_m == pytest.approx(0.002)
    assert NoiseParams(p=0.003, p_m=0.01).p_m == 0.01


@pytest.mark.parametrize("kw", [dict(p=-0.1), dict(p=1.5), dict(e=2.0), dict(p_m=-1e-9),
                                dict(q_plus=1.1), dict(p=float("nan")), dict(scheme="other")])
def test_validation(kw):
    with pytest.raises(ParameterError):
        NoiseParams(**kw)


def test_from_dict_rejects_unknown():
    with pytest.raises(ParameterError):
        NoiseParams.from_dict({"p": 0.1, "bogus": 1})
    assert NoiseParams.from_dict(NoiseParams(p=0.1, e=0.2).to_dict()) == NoiseParams(p=0.1, e=0.2)


def test_standard_equivalent_rate_values():
    assert standard_equivalent_rate(0.0, 0.0) == 0.0
    assert standard_equivalent_rate(0.0, 1.0) == pytest.approx(15 / 16)
    assert standard_equivalent_rate(0.001, 0.01) == pytest.approx(0.001 + 0.009375 - 1e-5)


def _compose(p, e):
    """Rate of a uniform 2Q Pauli channel followed by full depolarization w.p. e."""
    dist = np.full(16, p / 15)
    dist[0] = 1 - p
    full = np.full(16, 1 / 16)
    # composition of Pauli channels: depolarization absorbs everything
    out = (1 - e) * dist + e * full
    return 1 - out[0], out[1:]


@given(st.floats(0, 1), st.floats(0, 1))
def test_standard_rate_matches_channel_composition(p, e):
    rate, rest = _compose(p, e)
    assert standard_equivalent_rate(p, e) == pytest.approx(rate, abs=1e-12)
    assert np.allclose(rest, rest[0])


def test_imperfect_detection():
    par = NoiseParams(p=0.001, e=0.01, q_plus=0.002, q_minus=0.1)
    adj = imperfect_detection_adjust(par)
    assert adj.p == pytest.approx(0.001 + 0.001)
    assert adj.e == pytest.approx(0.012)
    assert effective_params(par) == adj
    plain = NoiseParams(p=0.001, e=0.01)
    assert effective_params(plain) is plain
    with pytest.raises(ParameterError):
        imperfect_detection_adjust(NoiseParams(p=0.9, e=1.0, q_minus=0.5))


def test_rng_reproducible_and_independent():
    a = make_rng(5, 3).random(4)
    b = make_rng(5, 3).random(4)
    c = make_rng(5, 4).random(4)
    d = make_rng(5, 3, stream=1).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_zero_noise_samples_nothing(circuit3):
    s = sample_faults(circuit3, NoiseParams(), make_rng(0, 0))
    assert s.is_empty()


def test_erasure_only_on_cnots(circuit3):
    s = sample_faults(circuit3, NoiseParams(e=1.0), make_rng(0, 0))
    assert sorted(s.erased_cnots) == sorted(circuit3.cnot_locations())
    assert all(circuit3.op_at(loc).kind == "cnot" for loc, _ in s.pauli_faults)
    assert all(pauli in PAULI_2Q_ALL[1:] for _, pauli in s.pauli_faults)


def test_standard_scheme_has_no_erasures(circuit3):
    s = sample_faults(circuit3, NoiseParams(p=0.01, e=0.5, scheme="standard"), make_rng(0, 1))
    assert s.erased_cnots == []


def test_noiseless_final_round(circuit3):
    s = sample_faults(circuit3, NoiseParams(p=1.0, p_m=1.0, e=0.3), make_rng(0, 2))
    last = {t for t, step in enumerate(circuit3.timesteps) if not step.noisy}
    locs = [loc for loc, _ in s.pauli_faults] + s.erased_cnots + s.flipped_measurements
    assert locs and not any(t in last for t, _ in locs)
