import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erasure_qec.analysis import (FitError, PfailEstimate, ansatz, binomial_stderr, collapse_residual,
                                  estimate_code_capacity, estimate_pfail, fit_threshold, read_csv,
                                  sweep, write_csv)
from erasure_qec.layout import ParameterError
from erasure_qec.noise import NoiseParams


def synthetic(th=0.005, mu=1.0, a=40.0, b=3.0, c=0.05, ds=(3, 5, 7), grid=None, axis="p"):
    grid = np.linspace(0.6 * th, 1.4 * th, 6) if grid is None else grid
    out = []
    for d in ds:
        for v in grid:
            y = float(ansatz([a, b, c, th, mu], v, d))
            p, e = (v, 0.0) if axis == "p" else (0.0, v)
            out.append(PfailEstimate("erasure", d, p, 2 * p / 3, e, 10**6, int(y * 1e6), y, 1e-4))
    return out


def test_fit_round_trip():
    fit = fit_threshold(synthetic(), axis="p", threshold_guess=0.0045)
    assert abs(fit.threshold - 0.005) < 1e-6
    assert abs(fit.mu - 1.0) < 1e-6
    assert fit.a == pytest.approx(40.0, rel=1e-5)
    assert fit.residual < 1e-10
    data = json.loads(fit.to_json())
    assert set(["a", "b", "c", "threshold", "mu", "covariance", "residual"]) <= set(data)


@given(st.floats(0.002, 0.05), st.floats(0.6, 1.4))
@settings(max_examples=15, deadline=None)
def test_fit_round_trip_property(th, mu):
    fit = fit_threshold(synthetic(th=th, mu=mu, a=1.0 / th**2 / 40, b=0.5 / th, axis="e"), axis="e")
    assert fit.threshold == pytest.approx(th, rel=1e-5)
    assert fit.mu == pytest.approx(mu, abs=1e-4)


def test_fit_needs_enough_data():
    with pytest.raises(FitError):
        fit_threshold(synthetic(ds=(3, 5)))
    with pytest.raises(FitError):
        fit_threshold(synthetic(grid=np.linspace(0.004, 0.006, 3)))


def test_zero_noise_gives_zero():
    for scheme in ("erasure", "standard"):
        est = estimate_pfail(NoiseParams(scheme=scheme), 3, shots=500)
        assert est.p_fail == 0.0 and est.failures == 0 and est.stderr == 0.0


def test_shots_validation():
    with pytest.raises(ParameterError):
        estimate_pfail(NoiseParams(p=0.001), 3, shots=0)
    with pytest.raises(ParameterError):
        estimate_pfail(NoiseParams(p=0.001, e=0.01), 3, shots=0)


def test_nested_sampling_counts():
    est = estimate_pfail(NoiseParams(p=0.003, e=0.02), 3, shots=1000, seed=1)
    assert est.shots == 1000                       # 10 realizations x 100
    est = estimate_pfail(NoiseParams(p=0.003, e=0.02), 3, realizations=7, n_rep=13, seed=1)
    assert est.shots == 91
    assert est.p_fail == pytest.approx(est.failures / est.shots)


def test_thread_count_does_not_change_results():
    par = NoiseParams(p=0.004, e=0.02)
    a = estimate_pfail(par, 3, shots=3000, seed=5, threads=1)
    b = estimate_pfail(par, 3, shots=3000, seed=5, threads=3)
    assert a == b
    par = NoiseParams(p=0.004, e=0.02, scheme="standard")
    assert estimate_pfail(par, 3, shots=25000, seed=5, threads=1) == estimate_pfail(par, 3, shots=25000, seed=5,
                                                                                    threads=2)


def test_below_threshold_larger_distance_is_better():
    par = NoiseParams(p=0.001, e=0.01)
    e3 = estimate_pfail(par, 3, shots=100_000, seed=3)
    e5 = estimate_pfail(par, 5, shots=100_000, seed=3)
    sep = (e3.p_fail - e5.p_fail) / np.hypot(e3.stderr, e5.stderr)
    assert sep >= 3.0


@pytest.mark.slow
def test_binomial_coverage_d3():
    """The 1-sigma interval covers a high-statistics reference about 68% of the time."""
    par = NoiseParams(p=0.004, scheme="standard")
    ref = estimate_pfail(par, 3, shots=400_000, seed=1000).p_fail
    hits = 0
    n = 200
    for s in range(n):
        est = estimate_pfail(par, 3, shots=2000, seed=s)
        hits += abs(est.p_fail - ref) <= est.stderr
    # binomial(200, 0.68) has sd 3.3%; allow 4 sd
    assert 0.68 - 0.14 <= hits / n <= 0.68 + 0.14


def test_binomial_stderr():
    assert binomial_stderr(0, 10) == 0.0
    assert binomial_stderr(5, 10) == pytest.approx(np.sqrt(0.025))


def test_csv_round_trip(tmp_path):
    ests = synthetic()[:4]
    write_csv(ests, tmp_path / "x.csv")
    assert read_csv(tmp_path / "x.csv") == ests
    header = (tmp_path / "x.csv").read_text().splitlines()[0]
    assert header == "scheme,d,p,p_m,e,shots,failures,p_fail,stderr"


def test_sweep_rejects_non_monotone():
    with pytest.raises(ParameterError):
        sweep("p", [0.002, 0.001], 0.01, [3], shots=10)


def test_sweep_small_run_and_collapse():
    res = sweep("p", [0.003, 0.0045, 0.006, 0.0075], 0.01, [3, 5, 7], shots=3000, seed=2,
                threshold_guess=0.0055)
    assert len(res.estimates) == 12
    key = ("erasure", 0.01)
    assert key in res.fits or key in res.errors
    if key in res.fits:
        assert collapse_residual(res.fits[key], res.estimates) < 10.0


def test_code_capacity_estimates():
    assert estimate_code_capacity(5, 0.0, 200).p_fail == 0.0
    # any d-1 = 2 erasures at d=3 are fine; at rate 1 the logical is lost half the time
    est = estimate_code_capacity(3, 1.0, 2000, seed=1)
    assert est.p_fail == pytest.approx(0.5, abs=0.05)
