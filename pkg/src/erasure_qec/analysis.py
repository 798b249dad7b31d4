"""Logical error rate estimation and finite-size-scaling threshold fits.

Nested sampling for the erasure scheme: erasure layouts ("realizations") are
drawn once per (d, e, seed) and each is reused ``n_rep`` times with fresh
Pauli and measurement noise. Because the layout stream does not depend on
``p``, a vertical sweep reuses the same layouts at every ``p``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .frame import fault_table, sample_erasures, sample_syndromes
from .layout import ParameterError, build_layout, syndrome_circuit
from .matching import FastDecoder, build_code_capacity_graph, build_graph
from .noise import (STREAM_BLOCK, STREAM_ERASURE, STREAM_PAULI, NoiseParams,
                    effective_params, make_rng)

DEFAULT_NREP = {3: 100, 5: 100, 7: 100, 9: 50, 11: 25}
BLOCK_SHOTS = 10_000
CSV_COLUMNS = ("scheme", "d", "p", "p_m", "e", "shots", "failures", "p_fail", "stderr")


class FitError(RuntimeError):
    """Threshold fit failed; ``diagnostics`` holds what is known."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class PfailEstimate:
    scheme: str
    d: int
    p: float
    p_m: float
    e: float
    shots: int
    failures: int
    p_fail: float
    stderr: float

    def row(self) -> dict:
        return dataclasses.asdict(self)


def default_nrep(d: int) -> int:
    return DEFAULT_NREP.get(d, max(1, 25 * 11 // d))


def binomial_stderr(failures: int, shots: int) -> float:
    pf = failures / shots
    return math.sqrt(pf * (1.0 - pf) / shots)


# ------------------------------------------------------------ work units

def _realization_failures(d: int, params: NoiseParams, seed: int, start: int, stop: int, n_rep: int,
                          weighting: str = "log"):
    """Failure count of each erasure realization in ``[start, stop)``."""
    circuit = syndrome_circuit(build_layout(d), d)
    table = fault_table(circuit)
    decoder = FastDecoder(build_graph(circuit.layout, circuit, params, weighting))
    e = effective_params(params).erasure_rate
    out = np.zeros(stop - start, dtype=np.int64)
    for k, r in enumerate(range(start, stop)):
        erased = sample_erasures(table, e, make_rng(seed, r, STREAM_ERASURE))
        synd, logical = sample_syndromes(table, params, n_rep, make_rng(seed, r, STREAM_PAULI), erased)
        locs = [table.cnot_locations[i] for i in np.flatnonzero(erased)]
        out[k] = int(np.sum(decoder.decode_batch(synd, locs) != logical))
    return out


def _block_failures(d: int, params: NoiseParams, seed: int, blocks, shots: int, weighting: str = "log"):
    """Failure counts of flat-sampling blocks (standard scheme or no erasures)."""
    circuit = syndrome_circuit(build_layout(d), d)
    table = fault_table(circuit)
    decoder = FastDecoder(build_graph(circuit.layout, circuit, params, weighting))
    out = []
    for b in blocks:
        n = min(BLOCK_SHOTS, shots - b * BLOCK_SHOTS)
        synd, logical = sample_syndromes(table, params, n, make_rng(seed, b, STREAM_BLOCK))
        out.append(int(np.sum(decoder.decode_batch(synd) != logical)))
    return np.array(out, dtype=np.int64)


def _chunks(n: int, parts: int):
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _pool_map(fn, arg_list, threads: int):
    if threads <= 1 or len(arg_list) <= 1:
        return [fn(*args) for args in arg_list]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *args) for args in arg_list]
        return [f.result() for f in futures]


def estimate_pfail(params: NoiseParams, d: int, *, shots: int | None = None,
                   realizations: int | None = None, n_rep: int | None = None,
                   seed: int = 0, threads: int = 1, weighting: str = "log") -> PfailEstimate:
    """Logical failure rate of a distance-``d`` memory with ``d`` noisy rounds.

    Parameters
    ----------
    shots : int, optional
        Total shots. For nested sampling this fixes ``realizations`` as
        ``ceil(shots / n_rep)`` unless ``realizations`` is given.
    realizations, n_rep : int, optional
        Erasure layouts and reuses per layout (erasure scheme with ``e > 0``).
    threads : int
        Worker processes. Results do not depend on it.
    weighting : {"log", "uniform"}
        Edge weighting of the decoder, see :func:`build_graph`.
    """
    if params.scheme == "code_capacity":
        raise ParameterError("use estimate_code_capacity for code-capacity noise")
    eff = effective_params(params)
    nested = eff.scheme == "erasure" and eff.e > 0
    if nested:
        n_rep = n_rep or default_nrep(d)
        if realizations is None:
            if not shots:
                raise ParameterError("shots must be positive")
            realizations = -(-shots // n_rep)
        if realizations < 1 or n_rep < 1:
            raise ParameterError("realizations and n_rep must be positive")
        chunks = _chunks(realizations, 4 * threads)
        parts = _pool_map(_realization_failures,
                          [(d, params, seed, a, b, n_rep, weighting) for a, b in chunks], threads)
        per = np.concatenate(parts)
        total = realizations * n_rep
        failures = int(per.sum())
        rates = per / n_rep
        p_fail = float(rates.mean())
        if realizations > 1:
            # clustered error: realizations are the independent units
            stderr = float(rates.std(ddof=1) / math.sqrt(realizations))
            stderr = max(stderr, binomial_stderr(failures, total)) if failures else 0.0
        else:
            stderr = binomial_stderr(failures, total)
    else:
        if not shots or shots < 1:
            raise ParameterError("shots must be positive")
        n_blocks = -(-shots // BLOCK_SHOTS)
        chunks = _chunks(n_blocks, 4 * threads)
        parts = _pool_map(_block_failures,
                          [(d, params, seed, list(range(a, b)), shots, weighting) for a, b in chunks], threads)
        failures = int(np.concatenate(parts).sum())
        total = shots
        p_fail = failures / total
        stderr = binomial_stderr(failures, total)
    return PfailEstimate(params.scheme, d, params.p, params.p_m, params.e, total, failures, p_fail, stderr)


# ----------------------------------------------------------- code capacity

def _code_capacity_failures(d: int, erasure_rate: float, pauli_rate: float, seed: int, start: int, stop: int):
    layout = build_layout(d)
    graph = build_code_capacity_graph(layout, pauli_rate)
    decoder = FastDecoder(graph)
    if pauli_rate == 0:
        # erasure-only: un-erased qubits carry no error and are not usable paths
        graph.weight[:] = np.inf
    H = decoder._H[:graph.n_detectors].toarray()
    lz = np.zeros(layout.n_data, dtype=np.uint8)
    lz[list(layout.logical_z)] = 1
    fails = 0
    for s in range(start, stop):
        rng = make_rng(seed, s, STREAM_BLOCK)
        erased = rng.random(layout.n_data) < erasure_rate
        x_err = np.where(erased, rng.random(layout.n_data) < 0.5,
                         rng.random(layout.n_data) < 2.0 * pauli_rate / 3.0).astype(np.uint8)
        if not x_err.any():
            continue
        synd = (H @ x_err) & 1
        logical = int(x_err @ lz) & 1
        if not synd.any():
            fails += logical
            continue
        pred = decoder.decode_batch(synd.reshape(1, -1), np.flatnonzero(erased))[0]
        fails += int(pred != logical)
    return fails


def estimate_code_capacity(d: int, erasure_rate: float, shots: int, pauli_rate: float = 0.0,
                           seed: int = 0, threads: int = 1) -> PfailEstimate:
    """Single perfect round with i.i.d. data-qubit erasures (and optional Pauli noise)."""
    if shots < 1:
        raise ParameterError("shots must be positive")
    chunks = _chunks(shots, 4 * threads)
    parts = _pool_map(_code_capacity_failures,
                      [(d, erasure_rate, pauli_rate, seed, a, b) for a, b in chunks], threads)
    failures = int(sum(parts))
    return PfailEstimate("code_capacity", d, pauli_rate, 0.0, erasure_rate, shots, failures,
                         failures / shots, binomial_stderr(failures, shots))


# ------------------------------------------------------------------- fitting

@dataclass
class ThresholdFit:
    a: float
    b: float
    c: float
    threshold: float
    mu: float
    covariance: list
    residual: float
    axis: str = "p"
    n_points: int = 0
    threshold_stderr: float = float("nan")
    mu_stderr: float = float("nan")
    bootstrap_stderr: float | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1)


def ansatz(params, v, d):
    a, b, c, th, mu = params
    x = (v - th) * np.power(d, mu)
    return a * x * x + b * x + c


def _fit_once(v, d, y, sigma, th0):
    best = None
    for mu0 in (0.5, 1.0, 1.5):
        x = (v - th0) * d ** mu0
        a0, b0, c0 = np.polyfit(x, y, 2, w=1.0 / sigma)
        x0 = np.array([a0, b0, c0, th0, mu0])
        try:
            res = least_squares(lambda t: (ansatz(t, v, d) - y) / sigma, x0, method="lm",
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000,
                                x_scale="jac")
        except ValueError:
            continue
        if res.status <= 0 or not np.all(np.isfinite(res.x)):
            continue
        if best is None or res.cost < best.cost - 1e-15:
            best = res
    return best


def _crossing_guess(v, d, y):
    """Axis value where the largest and smallest distance curves cross."""
    ds = np.unique(d)
    lo, hi = ds.min(), ds.max()
    grid = np.unique(v)
    ya = np.array([np.mean(y[(d == lo) & (v == g)]) if np.any((d == lo) & (v == g)) else np.nan for g in grid])
    yb = np.array([np.mean(y[(d == hi) & (v == g)]) if np.any((d == hi) & (v == g)) else np.nan for g in grid])
    diff = yb - ya
    ok = np.isfinite(diff)
    g, diff = grid[ok], diff[ok]
    for i in range(len(g) - 1):
        if diff[i] <= 0 <= diff[i + 1]:
            if diff[i + 1] == diff[i]:
                return float(g[i])
            return float(g[i] - diff[i] * (g[i + 1] - g[i]) / (diff[i + 1] - diff[i]))
    return float(np.median(grid))


def fit_threshold(estimates, axis: str = "p", threshold_guess: float | None = None,
                  window: tuple[float, float] | None = (0.2, 1.8),
                  bootstrap: int = 0, seed: int = 0,
                  min_distances: int = 3, min_points: int = 4) -> ThresholdFit:
    """Fit ``p_fail = a x^2 + b x + c`` with ``x = (v - v_th) d^mu``.

    Parameters
    ----------
    estimates : sequence of PfailEstimate
    axis : {"p", "e"}
        Which noise parameter varies.
    threshold_guess : float, optional
        Centre of the initial scaling window; estimated from the crossing of
        the smallest and largest distance when omitted.
    window : (lo, hi) or None
        Keep points with ``lo * v_th <= v <= hi * v_th``; applied around the
        guess, then once more around the preliminary fit.
    bootstrap : int
        Parametric bootstrap resamples of the failure counts.

    Raises
    ------
    FitError
        Too few distances or points, or the optimizer did not converge.
    """
    if axis not in ("p", "e"):
        raise ParameterError("axis must be 'p' or 'e'")
    ests = list(estimates)
    v_all = np.array([getattr(x, axis) for x in ests], dtype=float)
    d_all = np.array([x.d for x in ests], dtype=float)
    y_all = np.array([x.p_fail for x in ests], dtype=float)
    s_all = np.array([x.stderr for x in ests], dtype=float)
    n_all = np.array([x.shots for x in ests], dtype=float)
    if len(ests) == 0:
        raise FitError("no data")
    # floor the error bars so zero-failure points do not dominate
    floor = np.maximum(1.0 / n_all, 1e-12)
    s_all = np.where(s_all > 0, s_all, np.sqrt(floor * (1 - floor) / n_all) + 1e-15)
    if np.all(np.array([x.stderr for x in ests]) == 0):
        s_all = np.ones_like(s_all)

    th = threshold_guess if threshold_guess is not None else _crossing_guess(v_all, d_all, y_all)

    def select(center):
        if window is None:
            return np.ones(len(ests), dtype=bool)
        return (v_all >= window[0] * center) & (v_all <= window[1] * center)

    def check(mask):
        counts = {}
        for dd in d_all[mask]:
            counts[dd] = counts.get(dd, 0) + 1
        good = [dd for dd, k in counts.items() if k >= min_points]
        if len(good) < min_distances:
            raise FitError(f"need >= {min_distances} distances with >= {min_points} points in the window",
                           {"window_center": center_used, "counts": {int(k): v for k, v in counts.items()}})

    center_used = th
    mask = select(th)
    check(mask)
    res = _fit_once(v_all[mask], d_all[mask], y_all[mask], s_all[mask], th)
    if res is None:
        raise FitError("preliminary fit did not converge", {"threshold_guess": th})
    if window is not None:
        center_used = float(res.x[3])
        mask2 = select(center_used)
        try:
            check(mask2)
            res2 = _fit_once(v_all[mask2], d_all[mask2], y_all[mask2], s_all[mask2], center_used)
            if res2 is not None:
                res, mask = res2, mask2
        except FitError:
            pass
    if not (np.min(v_all[mask]) <= res.x[3] <= np.max(v_all[mask])):
        raise FitError("fitted threshold lies outside the data range",
                       {"threshold": float(res.x[3]), "range": [float(v_all[mask].min()), float(v_all[mask].max())]})
    J = res.jac
    n_pts, n_par = int(mask.sum()), 5
    dof = max(n_pts - n_par, 1)
    chi2 = float(2 * res.cost)
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian at the optimum", {"x": res.x.tolist()}) from exc
    red = chi2 / dof
    if red > 1.0:
        cov = cov * red
    fit = ThresholdFit(
        a=float(res.x[0]), b=float(res.x[1]), c=float(res.x[2]), threshold=float(res.x[3]),
        mu=float(res.x[4]), covariance=cov.tolist(), residual=red, axis=axis, n_points=n_pts,
        threshold_stderr=float(np.sqrt(max(cov[3, 3], 0.0))), mu_stderr=float(np.sqrt(max(cov[4, 4], 0.0))),
    )
    if bootstrap:
        rng = np.random.default_rng(seed)
        v, d, y, s, n = v_all[mask], d_all[mask], y_all[mask], s_all[mask], n_all[mask]
        ths = []
        for _ in range(bootstrap):
            yb = rng.binomial(n.astype(np.int64), np.clip(y, 0, 1)) / n
            rb = _fit_once(v, d, yb, s, fit.threshold)
            if rb is not None:
                ths.append(rb.x[3])
        if len(ths) >= 2:
            fit.bootstrap_stderr = float(np.std(ths, ddof=1))
    return fit


def collapse_residual(fit: ThresholdFit, estimates) -> float:
    """Reduced chi-square of the data about the fitted quadratic."""
    ests = list(estimates)
    v = np.array([getattr(x, fit.axis) for x in ests])
    d = np.array([x.d for x in ests], dtype=float)
    y = np.array([x.p_fail for x in ests])
    s = np.array([x.stderr for x in ests])
    s = np.where(s > 0, s, s[s > 0].min() if np.any(s > 0) else 1.0)
    r = (ansatz([fit.a, fit.b, fit.c, fit.threshold, fit.mu], v, d) - y) / s
    return float(np.sum(r * r) / max(len(ests) - 5, 1))


# -------------------------------------------------------------------- sweeps

@dataclass
class SweepResult:
    estimates: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)      # (scheme, fixed value) -> ThresholdFit
    errors: dict = field(default_factory=dict)    # (scheme, fixed value) -> message


def sweep(axis: str, values, fixed: float, distances, schemes=("erasure",), *,
          shots: int, seed: int = 0, threads: int = 1, p_m_ratio: float = 2.0 / 3.0,
          threshold_guess: float | None = None, window=(0.2, 1.8), fit: bool = True,
          weighting: str = "log", progress=None) -> SweepResult:
    """One vertical (``axis="p"``, fixed ``e``) or horizontal (``axis="e"``, fixed ``p``) sweep."""
    values = [float(x) for x in values]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ParameterError("sweep values must be strictly increasing")
    out = SweepResult()
    for scheme in schemes:
        line = []
        for d in distances:
            for val in values:
                p, e = (val, fixed) if axis == "p" else (fixed, val)
                params = NoiseParams(p=p, p_m=p_m_ratio * p, e=e, scheme=scheme)
                est = estimate_pfail(params, d, shots=shots, seed=seed, threads=threads,
                                     weighting=weighting)
                line.append(est)
                if progress:
                    progress(est)
        out.estimates.extend(line)
        if fit:
            try:
                out.fits[(scheme, fixed)] = fit_threshold(line, axis=axis, threshold_guess=threshold_guess,
                                                          window=window)
            except FitError as exc:
                out.errors[(scheme, fixed)] = str(exc)
    return out


# ------------------------------------------------------------------------ IO

def write_csv(estimates, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for est in estimates:
            w.writerow(est.row())


def read_csv(path) -> list[PfailEstimate]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(PfailEstimate(
                scheme=row["scheme"], d=int(row["d"]), p=float(row["p"]), p_m=float(row["p_m"]),
                e=float(row["e"]), shots=int(row["shots"]), failures=int(row["failures"]),
                p_fail=float(row["p_fail"]), stderr=float(row["stderr"])))
    return out


def cpu_threads(requested: int | None) -> int:
    if requested is None or requested <= 0:
        return os.cpu_count() or 1
    return requested
