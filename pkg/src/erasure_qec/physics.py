"""Closed-form device physics of dual-rail and g-f erasure qubits.

All frequencies, couplings and rates are angular (rad/s) internally. Use
:func:`from_hz` / :func:`to_hz` at the boundary when a value is quoted as
``f = omega / 2 pi``.

Contents:

* dephasing of a qubit whose splitting is first-order insensitive to
  transmon frequency noise (:func:`decoherence_w`, :func:`tphi_summary`);
* effective two-qubit Hamiltonians for dual-rail and g-f pairs;
* dispersive readout shifts and the photon-number dependence of the qubit
  splitting, with an exact-diagonalization oracle;
* measurement-induced dephasing, gate leakage, two-photon spin-locking;
* the erasure channels of both encodings with Kraus and Lindblad oracles;
* the erasure / Pauli error budget fed to the surface-code simulation.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, linalg, special

from .layout import ParameterError

TWO_PI = 2.0 * math.pi
DISPERSIVE_RATIO = 5.0


def from_hz(f: float) -> float:
    """Angular frequency (rad/s) of an ordinary frequency ``f`` in Hz."""
    return TWO_PI * f


def to_hz(omega: float) -> float:
    """Ordinary frequency (Hz) of an angular frequency in rad/s."""
    return omega / TWO_PI


def _nonzero(name: str, value: float) -> None:
    if value == 0 or not np.isfinite(value):
        raise ParameterError(f"{name} must be finite and non-zero, got {value!r}")


# ---------------------------------------------------------------------------
# Parameter containers


@dataclass(frozen=True)
class DephasingNoiseSpec:
    """Gaussian frequency noise on the qubit-defining splitting.

    Attributes
    ----------
    mean_sq_delta : float
        ``<delta^2>`` in (rad/s)^2.
    spectral_density_zero : float or None
        ``S_delta(0)`` in (rad/s)^2 s; needed for the long-time regime.
    correlation_time : float or None
        ``tau_c`` in s; needed for the long-time regime.
    """

    mean_sq_delta: float
    spectral_density_zero: float | None = None
    correlation_time: float | None = None

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is not None and (v < 0 or not np.isfinite(v)):
                raise ParameterError(f"{f.name} must be finite and non-negative, got {v!r}")

    @classmethod
    def composite(cls, first: "DephasingNoiseSpec", second: "DephasingNoiseSpec") -> "DephasingNoiseSpec":
        """Noise on ``delta_1 - delta_2`` for independent transmons.

        Variances and zero-frequency spectral densities add; the correlation
        time must agree if both sides carry one.
        """
        s = None
        if first.spectral_density_zero is not None and second.spectral_density_zero is not None:
            s = first.spectral_density_zero + second.spectral_density_zero
        tau = first.correlation_time
        if tau is None:
            tau = second.correlation_time
        elif second.correlation_time is not None and second.correlation_time != tau:
            raise ParameterError("composite noise requires a common correlation time")
        return cls(first.mean_sq_delta + second.mean_sq_delta, s, tau)

    @classmethod
    def from_transmon_tphi(cls, t_trans: float, correlation_time: float | None = None,
                           regime: str = "short") -> "DephasingNoiseSpec":
        """Single-transmon noise reproducing a given transmon dephasing time.

        ``short``: ``<delta_j^2> = 2 / T^2``; ``long``: ``S_delta_j(0) = 2 / T``
        (the variance is then left at zero).
        """
        if t_trans <= 0:
            raise ParameterError("t_trans must be positive")
        if regime == "short":
            return cls(2.0 / t_trans**2, None, correlation_time)
        if regime == "long":
            return cls(0.0, 2.0 / t_trans, correlation_time)
        raise ParameterError(f"regime must be 'short' or 'long', got {regime!r}")


_HZ_FIELDS = ("omega0", "eta", "delta", "g_c", "g_12", "g_rt1", "g_rt2", "kappa", "eps_d")


@dataclass(frozen=True)
class DeviceParams:
    """Device parameters; frequencies in rad/s, times in s.

    Use :meth:`from_hz` to build from ``/2 pi`` values in Hz.
    """

    omega0: float = 0.0
    eta: float = 0.0
    delta: float = 0.0
    g_c: float = 0.0
    g_12: float = 0.0
    g_rt1: float = 0.0
    g_rt2: float = 0.0
    kappa: float = 0.0
    n_bar: float = 0.0
    eps_d: float = 0.0
    t1: float = 0.0
    t_g: float = 0.0
    t_meas: float = 0.0
    t_ramp: float = 0.0
    q_minus: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ParameterError(f"{f.name} must be finite")
        for name in ("kappa", "n_bar", "t1", "t_g", "t_meas", "t_ramp", "q_minus"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")

    @classmethod
    def from_hz(cls, **values) -> "DeviceParams":
        """Construct from frequencies given as ``omega / 2 pi`` in Hz."""
        unknown = set(values) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ParameterError(f"unknown device keys: {sorted(unknown)}")
        return cls(**{k: from_hz(v) if k in _HZ_FIELDS else v for k, v in values.items()})

    @classmethod
    def gate_example(cls) -> "DeviceParams":
        """Four-transmon dual-rail gate parameters."""
        return cls.from_hz(omega0=80e6, eta=-250e6, delta=500e6, g_c=34e6, g_12=40e6,
                           t_g=110e-9, t_ramp=20e-9)

    @classmethod
    def readout_example(cls) -> "DeviceParams":
        """Readout with 20 % coupling asymmetry around 70 MHz."""
        return cls.from_hz(omega0=100e6, eta=-250e6, delta=3e9, g_rt1=63e6, g_rt2=77e6,
                           g_12=50e6, kappa=10e6, n_bar=20.0)

    def dispersive_valid(self) -> bool:
        """Whether ``|delta|`` exceeds 5x the largest of ``|eta|`` and the couplings."""
        scale = max(abs(self.eta), abs(self.g_c), abs(self.g_rt1), abs(self.g_rt2))
        return abs(self.delta) > DISPERSIVE_RATIO * scale


# ---------------------------------------------------------------------------
# Dephasing

REGIMES = ("short", "long", "single_transmon_short", "single_transmon_long")


def decoherence_w(t, spec: DephasingNoiseSpec, omega0: float, regime: str = "short"):
    """Decoherence function ``W(t)`` in one of four regimes.

    Parameters
    ----------
    t : float or array_like
        Time(s) in s, non-negative.
    spec : DephasingNoiseSpec
        For the dual-rail regimes, the noise on ``delta_1 - delta_2``; for
        the single-transmon regimes, the noise on one transmon.
    omega0 : float
        Qubit splitting in rad/s (unused for single-transmon regimes).
    regime : str
        ``short`` (``t << tau_c``), ``long`` (``t >> tau_c``) or their
        ``single_transmon_`` counterparts.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("t must be non-negative")
    if regime == "short":
        _nonzero("omega0", omega0)
        out = (1.0 + (spec.mean_sq_delta * t / omega0) ** 2) ** -0.25
    elif regime == "long":
        _nonzero("omega0", omega0)
        if spec.spectral_density_zero is None or not spec.correlation_time:
            raise ParameterError("long regime needs spectral_density_zero and a positive correlation_time")
        s = spec.spectral_density_zero
        out = np.exp(-s**2 * t / (4.0 * math.pi * omega0**2 * spec.correlation_time))
    elif regime == "single_transmon_short":
        out = np.exp(-spec.mean_sq_delta * t**2 / 2.0)
    elif regime == "single_transmon_long":
        if spec.spectral_density_zero is None:
            raise ParameterError("single_transmon_long needs spectral_density_zero")
        out = np.exp(-spec.spectral_density_zero * t / 2.0)
    else:
        raise ParameterError(f"regime must be one of {REGIMES}, got {regime!r}")
    return float(out) if out.ndim == 0 else out


def decoherence_w_monte_carlo(t, spec: DephasingNoiseSpec, omega0: float, n_samples: int,
                              rng: np.random.Generator, stratified: bool = True):
    """Short-regime ``W(t)`` by averaging ``exp(-i delta^2 t / 2 omega0)`` over Gaussian ``delta``.

    With ``stratified`` each draw comes from its own equal-probability slice
    of the normal distribution (inverse-CDF of jittered uniforms), which
    removes most of the sampling variance while keeping the estimator
    unbiased.
    """
    if n_samples < 1:
        raise ParameterError("n_samples must be positive")
    sigma = math.sqrt(spec.mean_sq_delta)
    if stratified:
        u = (np.arange(n_samples) + rng.random(n_samples)) / n_samples
        delta = sigma * special.ndtri(u)
    else:
        delta = rng.normal(0.0, sigma, size=n_samples)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    phases = np.exp(-1j * np.outer(t, delta**2) / (2.0 * omega0))
    return np.abs(phases.mean(axis=1))


def tphi_summary(spec: DephasingNoiseSpec, omega0: float, t_trans: float) -> dict:
    """Dephasing times of the dual-rail qubit and their ratios to the transmon time.

    Returns
    -------
    dict
        ``T_phi_short = 2 omega0 / <delta^2>`` (``inf`` when the variance is
        zero), ``T_phi_long = 4 pi (omega0 / S(0))^2 tau_c`` (``None`` without
        long-regime data), ``ratio_short = omega0 t_trans / 2``,
        ``ratio_long = pi omega0^2 tau_c t_trans / 4`` (follows from the two
        long-regime formulas with identical transmons) and
        ``ratio_long_quoted = 2 pi omega0^2 t_trans tau_c`` (the printed
        value, kept for comparison).
    """
    _nonzero("omega0", omega0)
    if t_trans <= 0:
        raise ParameterError("t_trans must be positive")
    short = math.inf if spec.mean_sq_delta == 0 else 2.0 * omega0 / spec.mean_sq_delta
    long_ = None
    ratio_long = ratio_long_quoted = None
    tau = spec.correlation_time
    if spec.spectral_density_zero is not None and tau:
        s = spec.spectral_density_zero
        long_ = math.inf if s == 0 else 4.0 * math.pi * (omega0 / s) ** 2 * tau
    if tau:
        ratio_long = math.pi * omega0**2 * tau * t_trans / 4.0
        ratio_long_quoted = 2.0 * math.pi * omega0**2 * t_trans * tau
    return {
        "T_phi_short": short,
        "T_phi_long": long_,
        "ratio_short": omega0 * t_trans / 2.0,
        "ratio_long": ratio_long,
        "ratio_long_quoted": ratio_long_quoted,
    }


# ---------------------------------------------------------------------------
# Effective two-qubit Hamiltonians

G_XX_CONVENTIONS = ("projected", "magnus_quoted")


def dual_rail_eff_params(g_c: float, delta: float, eta: float, omega0: float,
                         convention: str = "projected") -> dict:
    """Effective parameters of two capacitively coupled dual-rail qubits.

    ``Omega = omega0 (1 + 6 g^2 / delta^2)``,
    ``h_Xj = -g^2 / (2 delta) [1 + (-1)^j (omega0/2 - eta) / delta]`` and
    ``g_XX = eta g^2 / delta^2`` (``projected``) or
    ``4 g^2 eta / (delta^2 - eta^2)`` (``magnus_quoted``).
    """
    _nonzero("delta", delta)
    if convention == "projected":
        g_xx = eta * g_c**2 / delta**2
    elif convention == "magnus_quoted":
        if delta**2 == eta**2:
            raise ParameterError("delta^2 = eta^2 is a pole of g_XX")
        g_xx = 4.0 * g_c**2 * eta / (delta**2 - eta**2)
    else:
        raise ParameterError(f"convention must be one of {G_XX_CONVENTIONS}")
    h = [-g_c**2 / (2.0 * delta) * (1.0 + (-1) ** j * (omega0 / 2.0 - eta) / delta) for j in (1, 2)]
    return {
        "Omega": omega0 * (1.0 + 6.0 * g_c**2 / delta**2),
        "g_XX": g_xx,
        "h_X1": h[0],
        "h_X2": h[1],
        "dispersive_ok": abs(delta) > DISPERSIVE_RATIO * abs(g_c),
    }


def gf_eff_params(g_c: float, delta: float, eta: float) -> dict:
    """Effective parameters of two coupled, spin-locked g-f qubits."""
    den = delta**2 - eta**2
    if den == 0:
        raise ParameterError("delta^2 = eta^2 is a pole of the g-f effective couplings")
    return {
        "g_XX": 4.0 * g_c**2 * eta / den,
        "h_X1": 2.0 * g_c**2 * (delta - 3.0 * eta) / den,
        "h_X2": -2.0 * g_c**2 * (delta + 3.0 * eta) / den,
        "dispersive_ok": abs(delta) > DISPERSIVE_RATIO * abs(g_c),
    }


# ---------------------------------------------------------------------------
# Dispersive readout


def dispersive_shifts(g_rt1: float, g_rt2: float, delta: float, eta: float) -> dict:
    """Leading-order cavity pull of the dual-rail states.

    ``chi_0 = chi_1 = (g1^2 + g2^2) eta / delta^2``,
    ``chi' = (g1^2 - g2^2) eta / delta^2``.
    """
    _nonzero("delta", delta)
    chi = (g_rt1**2 + g_rt2**2) * eta / delta**2
    return {
        "chi0": chi,
        "chi1": chi,
        "chi_prime": (g_rt1**2 - g_rt2**2) * eta / delta**2,
        "dispersive_ok": abs(delta) > DISPERSIVE_RATIO * max(abs(g_rt1), abs(g_rt2)),
    }


def fourth_order_slope(g_rt: float, g_12: float, delta: float, eta: float) -> float:
    """``dOmega/dn_c`` for symmetric couplings: ``-4 eta g^4/delta^4 - 4 eta^2 g^2 g_12/delta^4``."""
    _nonzero("delta", delta)
    return (-4.0 * eta * g_rt**4 - 4.0 * eta**2 * g_rt**2 * g_12) / delta**4


def qubit_freq_vs_photons(n_c, omega0: float, chi0: float, chi1: float, chi_prime: float,
                          fourth_order: dict | None = None):
    """Qubit splitting and its slope versus cavity photon number.

    ``Omega(n) = sqrt([omega0 + (chi1 - chi0) n]^2 + chi'^2 n^2)``, plus
    ``s n`` with ``s`` from :func:`fourth_order_slope` when
    ``fourth_order = {"g_rt", "g_12", "delta", "eta"}`` is given.

    Returns
    -------
    (Omega, dOmega_dn) : tuple of float or ndarray
    """
    n = np.asarray(n_c, dtype=float)
    if np.any(n < 0):
        raise ParameterError("n_c must be non-negative")
    a = omega0 + (chi1 - chi0) * n
    root = np.sqrt(a**2 + chi_prime**2 * n**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where(root > 0, (a * (chi1 - chi0) + chi_prime**2 * n) / np.where(root > 0, root, 1.0),
                         abs(chi_prime))
    omega = root
    if fourth_order is not None:
        s4 = fourth_order_slope(**fourth_order)
        omega = omega + s4 * n
        slope = slope + s4
    if omega.ndim == 0:
        return float(omega), float(slope)
    return omega, slope


def readout_slope_budget(params: DeviceParams, n_c: float | None = None) -> dict:
    """Photon-number slope of the splitting for asymmetric readout couplings.

    The asymmetric ``chi'`` contribution and the symmetric fourth-order
    contribution (evaluated at the mean coupling) are reported separately,
    together with their sum of magnitudes and their signed sum.
    """
    n = params.n_bar if n_c is None else n_c
    sh = dispersive_shifts(params.g_rt1, params.g_rt2, params.delta, params.eta)
    _, s_chi = qubit_freq_vs_photons(n, params.omega0, sh["chi0"], sh["chi1"], sh["chi_prime"])
    g_mean = 0.5 * (params.g_rt1 + params.g_rt2)
    s4 = fourth_order_slope(g_mean, params.g_12, params.delta, params.eta)
    return {
        "slope_chi_prime": s_chi,
        "slope_fourth_order": s4,
        "slope_magnitude_sum": abs(s_chi) + abs(s4),
        "slope_signed_sum": s_chi + s4,
        **sh,
    }


def _sector_basis(n_total: int, levels: int) -> list[tuple[int, int, int]]:
    """Fock states ``(n1, n2, nc)`` with ``n1 + n2 + nc = n_total`` and transmons below ``levels``."""
    out = []
    for n1 in range(min(levels - 1, n_total) + 1):
        for n2 in range(min(levels - 1, n_total - n1) + 1):
            out.append((n1, n2, n_total - n1 - n2))
    return out


def _sector_hamiltonian(basis, g_rt1, g_rt2, g_12, delta, eta):
    """Readout Hamiltonian in one excitation sector, rotating at the transmon frequency."""
    index = {s: i for i, s in enumerate(basis)}
    h = np.zeros((len(basis), len(basis)))
    for i, (n1, n2, nc) in enumerate(basis):
        h[i, i] = delta * nc + 0.5 * eta * (n1 * (n1 - 1) + n2 * (n2 - 1))
        # a1^dag a2, c^dag a1, c^dag a2 and their conjugates (added via symmetry)
        for (m1, m2, mc), amp in (
            ((n1 + 1, n2 - 1, nc), g_12 * math.sqrt((n1 + 1) * n2)),
            ((n1 - 1, n2, nc + 1), g_rt1 * math.sqrt(n1 * (nc + 1))),
            ((n1, n2 - 1, nc + 1), g_rt2 * math.sqrt(n2 * (nc + 1))),
        ):
            j = index.get((m1, m2, mc))
            if j is not None and amp != 0.0:
                h[j, i] += amp
                h[i, j] += amp
    return h


def _bare_state(basis, state) -> np.ndarray:
    v = np.zeros(len(basis))
    v[basis.index(state)] = 1.0
    return v


def _track(basis, start: list[np.ndarray], couplings, steps: int, label: str):
    """Follow eigenvectors overlapping ``start`` as the cavity couplings ramp from zero.

    ``couplings(lam)`` returns the sector Hamiltonian at ramp fraction ``lam``.
    """
    tracked = list(start)
    energies = [0.0] * len(start)
    for lam in np.linspace(0.0, 1.0, steps + 1):
        w, v = np.linalg.eigh(couplings(lam))
        chosen = set()
        for k, prev in enumerate(tracked):
            ov = np.abs(v.T @ prev) ** 2
            order = np.argsort(ov)[::-1]
            if ov[order[0]] < 0.5 or (len(ov) > 1 and ov[order[1]] > 0.25):
                raise ParameterError(f"ambiguous dressed-state identification ({label}, coupling fraction {lam:.3f})")
            j = int(order[0])
            if j in chosen:
                raise ParameterError(f"dressed states collided ({label})")
            chosen.add(j)
            tracked[k] = v[:, j] * np.sign(v[:, j] @ prev)
            energies[k] = w[j]
    return tracked, energies


def _effective_2x2(vectors, energies, bare) -> np.ndarray:
    """Hermitian effective Hamiltonian on the bare pair via symmetric orthonormalization."""
    m = np.array([[b @ v for v in vectors] for b in bare])
    u, _, vh = np.linalg.svd(m)
    ortho = u @ vh
    return ortho @ np.diag(energies) @ ortho.T


def dispersive_numeric_oracle(g_rt1: float, g_rt2: float, g_12: float, delta: float, eta: float,
                              n_c_max: int, levels: int = 6, continuation_steps: int = 24,
                              check_convergence: bool = True) -> dict:
    """Exact qubit splitting versus photon number for a dual-rail qubit plus cavity.

    Diagonalizes the three-mode Hamiltonian (two Kerr transmons at common
    frequency coupled by ``g_12``, each coupled to a cavity detuned by
    ``delta``) in each conserved-excitation sector. The cavity is exact within
    a sector; transmons are truncated to ``levels`` states. The dressed
    states ``|1_a 0_b n>`` and ``|0_a 1_b n>`` (``a``/``b`` the in-phase and
    out-of-phase transmon modes) and the dressed vacuum ``|0_a 0_b n>`` are
    followed by adiabatic continuation of the cavity couplings from zero.

    Returns
    -------
    dict
        ``n_c``; ``Omega`` (splitting, rad/s); ``E_vac`` (dressed vacuum
        energies); ``H_eff`` (``n x 2 x 2`` effective qubit Hamiltonian in the
        bare ``(1, 0)`` basis, with the vacuum energy subtracted);
        ``convergence`` (largest change of ``Omega - Omega[0]`` when
        ``levels`` is doubled, or ``None``).

    Raises
    ------
    ParameterError
        On bad truncation or when continuation cannot tell states apart.
    """
    if levels < 4:
        raise ParameterError("levels must be at least 4")
    if n_c_max < 0:
        raise ParameterError("n_c_max must be non-negative")
    _nonzero("delta", delta)
    scale = abs(delta)
    args = (g_12 / scale, delta / scale, eta / scale)
    omegas = np.empty(n_c_max + 1)
    e_vac = np.empty(n_c_max + 1)
    h_eff = np.empty((n_c_max + 1, 2, 2))

    def ramp(basis):
        return lambda lam: _sector_hamiltonian(basis, lam * g_rt1 / scale, lam * g_rt2 / scale, *args)

    for n in range(n_c_max + 1):
        vac_basis = _sector_basis(n, levels)
        _, ev = _track(vac_basis, [_bare_state(vac_basis, (0, 0, n))], ramp(vac_basis),
                       continuation_steps, f"vacuum, n_c={n}")
        basis = _sector_basis(n + 1, levels)
        e1, e2 = _bare_state(basis, (1, 0, n)), _bare_state(basis, (0, 1, n))
        a_mode, b_mode = (e1 + e2) / math.sqrt(2.0), (e1 - e2) / math.sqrt(2.0)
        one, zero = (a_mode, b_mode) if g_12 >= 0 else (b_mode, a_mode)
        vecs, en = _track(basis, [one, zero], ramp(basis), continuation_steps, f"qubit, n_c={n}")
        e_vac[n] = ev[0] * scale
        omegas[n] = (en[0] - en[1]) * scale
        h_eff[n] = _effective_2x2(vecs, [(x - ev[0]) * scale for x in en], [one, zero])
    conv = None
    if check_convergence:
        fine = dispersive_numeric_oracle(g_rt1, g_rt2, g_12, delta, eta, n_c_max, 2 * levels,
                                         continuation_steps, check_convergence=False)["Omega"]
        conv = float(np.max(np.abs((fine - fine[0]) - (omegas - omegas[0]))))
    return {"n_c": np.arange(n_c_max + 1), "Omega": omegas, "E_vac": e_vac, "H_eff": h_eff,
            "convergence": conv}


def oracle_shifts(result: dict) -> dict:
    """``chi_0``, ``chi_1``, ``chi'`` as per-photon slopes of the oracle's effective Hamiltonian.

    Slopes are taken between ``n_c = 0`` and ``n_c = 1`` so that photon
    nonlinearity does not enter.
    """
    h = result["H_eff"]
    if len(h) < 2:
        raise ParameterError("need n_c_max >= 1")
    d = h[1] - h[0]
    return {"chi1": float(d[0, 0]), "chi0": float(d[1, 1]), "chi_prime": float(d[0, 1])}


def oracle_slope(result: dict, n_c: float | None = None) -> float:
    """Slope ``dOmega/dn_c`` from an oracle table: linear fit, or a central difference at ``n_c``."""
    n, om = result["n_c"], result["Omega"]
    if n_c is None:
        return float(np.polyfit(n, om, 1)[0])
    k = int(round(n_c))
    if not 1 <= k < len(n) - 1:
        raise ParameterError("n_c must be an interior point of the table")
    return float((om[k + 1] - om[k - 1]) / 2.0)


# ---------------------------------------------------------------------------
# Measurement dephasing, leakage, spin-locking


def measurement_dephasing_rate(kappa: float, d_omega_dn: float, n_bar: float) -> dict:
    """Pure dephasing rate during readout, ``2 (dOmega/dn)^2 n_bar / kappa``.

    ``kappa`` and ``d_omega_dn`` are taken in the same unit system as given;
    the result carries the unit of ``d_omega_dn^2 / kappa``.
    """
    _nonzero("kappa", kappa)
    if n_bar < 0:
        raise ParameterError("n_bar must be non-negative")
    return {
        "Gamma": 2.0 * d_omega_dn**2 * n_bar / kappa,
        "slow_noise_ok": abs(d_omega_dn) < 0.1 * abs(kappa),
    }


def pd_closed_form(t, delta: float, g: Callable, g_dot: Callable, g_ddot: Callable | None = None) -> np.ndarray:
    """Diabatic transition probability of ``H = delta/2 tau_z + g(t)/2 tau_x``.

    Two successive adiabatic-frame rotations, dropping the residual
    ``phi_dot`` term. ``theta = atan(g/delta)``, ``eps = sqrt(delta^2+g^2)``,
    ``tan phi = theta_dot / eps``, ``nu = sqrt(eps^2 + theta_dot^2)``,
    ``xi = int nu``. ``g_ddot`` is not needed and accepted for symmetry.
    """
    _nonzero("delta", delta)
    t = np.atleast_1d(np.asarray(t, dtype=float))

    def parts(s):
        gv, gd = g(s), g_dot(s)
        eps = math.hypot(delta, gv)
        th_dot = delta * gd / (delta**2 + gv**2)
        return eps, th_dot

    def nu(s):
        eps, th_dot = parts(s)
        return math.hypot(eps, th_dot)

    def phi(s):
        eps, th_dot = parts(s)
        return math.atan(th_dot / eps)

    phi0 = phi(0.0)
    out = np.empty_like(t)
    for i, ti in enumerate(t):
        xi = integrate.quad(nu, 0.0, ti, limit=200)[0] if ti > 0 else 0.0
        ph = phi(ti)
        out[i] = (math.cos(xi / 2) ** 2 * math.sin((ph - phi0) / 2) ** 2
                  + math.sin(xi / 2) ** 2 * math.sin((ph + phi0) / 2) ** 2)
    return out


def leakage_estimate(g_max: float, delta: float, t_ramp: float, t=None) -> dict:
    """Leakage of the dual-rail two-qubit gate for a linear coupling ramp.

    ``P_leak = 2 [g_max / (delta^2 T_ramp)]^2``. When ``t`` is given, the
    closed-form single-channel ``P_D(t)`` for ``g(t) = g_max t / T_ramp`` and
    its small-coupling envelope ``g_max^2 / (delta^4 T_ramp^2) sin^2(delta t/2)``
    are also returned.
    """
    _nonzero("delta", delta)
    _nonzero("t_ramp", t_ramp)
    rate = g_max / t_ramp
    out = {
        "P_leak": 2.0 * (g_max / (delta**2 * t_ramp)) ** 2,
        "adiabatic_ok": abs(g_max) < 0.1 * abs(delta),
    }
    if t is not None:
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        out["t"] = tt
        out["P_D"] = pd_closed_form(tt, delta, lambda s: rate * s, lambda s: rate)
        out["P_D_small"] = (g_max**2 / (delta**4 * t_ramp**2)) * np.sin(delta * tt / 2.0) ** 2
    return out


def spinlock_params(eps_d: float, eta: float) -> dict:
    """Two-photon spin-locking of the g-f transition.

    ``Omega0 = 4 sqrt(2) eps^2 / eta``; mean virtual populations
    ``P_e = 6 eps^2 / eta^2`` and ``P_h = 4 eps^2 / (3 eta^2)``; per-state
    ``P_e(b) = 2 (1 + (-1)^b sqrt 2)^2 eps^2 / eta^2``.
    """
    _nonzero("eta", eta)
    r2 = eps_d**2 / eta**2
    return {
        "Omega0": 4.0 * math.sqrt(2.0) * eps_d**2 / eta,
        "P_e": 6.0 * r2,
        "P_h": 4.0 * r2 / 3.0,
        "P_e0": 2.0 * (1.0 + math.sqrt(2.0)) ** 2 * r2,
        "P_e1": 2.0 * (1.0 - math.sqrt(2.0)) ** 2 * r2,
        "weak_drive_ok": abs(eps_d) < 0.2 * abs(eta),
    }


# ---------------------------------------------------------------------------
# Erasure channels

# Dual-rail ordering {gg, ge, eg, ee}; g-f ordering {g, e, f}.
DUAL_RAIL_LEVELS = ("gg", "ge", "eg", "ee")
GF_LEVELS = ("g", "e", "f")
CHANNEL_KINDS = ("dual_rail", "gf")


def dual_rail_basis() -> np.ndarray:
    """Columns ``|0>, |1>`` with ``|b> = (|ge> - (-1)^b |eg>) / sqrt 2``."""
    s = 1.0 / math.sqrt(2.0)
    return np.array([[0, 0], [s, s], [-s, s], [0, 0]], dtype=complex)


def gf_basis() -> np.ndarray:
    """Columns ``|0>, |1>`` with ``|b> = (|g> - (-1)^b |f>) / sqrt 2``."""
    s = 1.0 / math.sqrt(2.0)
    return np.array([[s, s], [0, 0], [-s, s]], dtype=complex)


def check_density(rho: np.ndarray, tol: float = 1e-10) -> None:
    """Raise unless ``rho`` is Hermitian, PSD and unit-trace within ``tol``."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ParameterError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ParameterError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ParameterError("density matrix trace differs from 1")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -tol:
        raise ParameterError("density matrix is not positive semidefinite")


def _codespace(kind: str):
    if kind == "dual_rail":
        return dual_rail_basis(), 0
    if kind == "gf":
        return gf_basis(), 1
    raise ParameterError(f"kind must be one of {CHANNEL_KINDS}, got {kind!r}")


def erasure_channel_apply(rho: np.ndarray, gamma: float, kind: str = "dual_rail",
                          tol: float = 1e-10) -> np.ndarray:
    """Heralded-erasure channel ``(1 - gamma) rho + gamma |flag><flag|``.

    The flag state is ``|gg>`` for the dual-rail qubit and ``|e>`` for the
    g-f qubit. ``rho`` must be supported on the codespace.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError("gamma must lie in [0, 1]")
    basis, flag = _codespace(kind)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (basis.shape[0],) * 2:
        raise ParameterError(f"{kind} density matrices are {basis.shape[0]}x{basis.shape[0]}")
    check_density(rho, tol)
    proj = basis @ basis.conj().T
    if np.max(np.abs(proj @ rho @ proj - rho)) > tol:
        raise ParameterError("rho has support outside the codespace")
    out = (1.0 - gamma) * rho
    out[flag, flag] += gamma
    return out


def amplitude_damping_kraus(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Single-transmon amplitude-damping Kraus pair on ``{g, e}``."""
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]], dtype=complex)
    k1 = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]], dtype=complex)
    return k0, k1


def dual_rail_kraus_oracle(rho: np.ndarray, gamma_pair: float) -> np.ndarray:
    """Amplitude damping on both transmons, each with the same decay probability.

    ``gamma_pair`` is the per-transmon probability; on a single-excitation
    input the result equals the erasure channel with the same ``gamma``.
    """
    ks = amplitude_damping_kraus(gamma_pair)
    out = np.zeros((4, 4), dtype=complex)
    for a in ks:
        for b in ks:
            k = np.kron(a, b)
            out += k @ rho @ k.conj().T
    return out


def _lindblad_superop(h: np.ndarray, jumps: list[np.ndarray]) -> np.ndarray:
    """Column-stacking Liouvillian of ``-i[h, .] + sum D[L]``."""
    n = h.shape[0]
    eye = np.eye(n)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for l in jumps:
        ld = l.conj().T @ l
        sup += np.kron(l.conj(), l) - 0.5 * (np.kron(eye, ld) + np.kron(ld.T, eye))
    return sup


def lindblad_gf_oracle(omega0: float, gamma1: float, dt: float, rho0: np.ndarray,
                       n_checkpoints: int = 8) -> dict:
    """Spin-locked three-level transmon with amplitude damping.

    Solves ``d rho/dt = -i omega0/2 [|g><f| + |f><g|, rho] + gamma1 D[a] rho``
    exactly by exponentiating the Liouvillian, for the frame co-rotating
    with the bare transmon. ``a = |g><e| + sqrt 2 |e><f|``.

    Returns
    -------
    dict
        ``rho`` (state at ``dt``), ``rho_frame`` (same state with the coherent
        spin-lock rotation undone, directly comparable to the erasure
        channel), ``trace_error`` (largest ``|tr rho - 1|`` over
        ``n_checkpoints`` evenly spaced times) and ``purity``.
    """
    if dt < 0 or gamma1 < 0:
        raise ParameterError("dt and gamma1 must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    check_density(rho0)
    h = np.zeros((3, 3), dtype=complex)
    h[0, 2] = h[2, 0] = omega0 / 2.0
    a = np.zeros((3, 3), dtype=complex)
    a[0, 1] = 1.0
    a[1, 2] = math.sqrt(2.0)
    sup = _lindblad_superop(h, [math.sqrt(gamma1) * a] if gamma1 > 0 else [])
    vec0 = rho0.reshape(-1, order="F")
    trace_err = 0.0
    rho = rho0
    for k in range(1, n_checkpoints + 1):
        tk = dt * k / n_checkpoints
        rho = (linalg.expm(sup * tk) @ vec0).reshape(3, 3, order="F")
        trace_err = max(trace_err, abs(np.trace(rho) - 1.0))
    u = linalg.expm(1j * h * dt)
    rho_frame = u @ rho @ u.conj().T
    return {
        "rho": rho,
        "rho_frame": rho_frame,
        "trace_error": float(trace_err),
        "purity": float(np.real(np.trace(rho @ rho))),
    }


# ---------------------------------------------------------------------------
# Error budget


def error_budget(t_g: float, t_meas: float, t1: float, t_phi_meas: float, q_minus: float = 0.0) -> dict:
    """Erasure and Pauli rates for one gate-plus-check cycle.

    ``e = (T_g + T_meas) / T1`` and ``p = T_meas / T_phi_meas + e q_minus``.
    """
    if min(t_g, t_meas) < 0 or t1 <= 0 or t_phi_meas <= 0:
        raise ParameterError("times must be positive")
    if not 0.0 <= q_minus <= 1.0:
        raise ParameterError("q_minus must lie in [0, 1]")
    e = t_g / t1 + t_meas / t1
    dephasing = t_meas / t_phi_meas
    return {
        "e": e,
        "p": dephasing + e * q_minus,
        "p_dephasing": dephasing,
        "p_false_negative": e * q_minus,
    }
