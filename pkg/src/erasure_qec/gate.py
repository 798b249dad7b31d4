"""Time-dependent simulation of the dual-rail sqrt(iSWAP) gate.

Four transmons (two dual-rail pairs) with Kerr nonlinearity are simulated
in a truncated Fock space, in the frame rotating at the first pair's
frequency. The inter-pair coupling follows a smooth pulse and the
single-transmon corrective shifts that cancel the induced ``sigma_x`` terms
follow it in time. The gate infidelity is minimized over single-qubit Z and
two-qubit ZZ gauge rotations.

A two-level testbed reproduces the diabatic transition probability used to
estimate leakage.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .layout import ParameterError
from .physics import DeviceParams, dual_rail_eff_params

PULSE_FORMS = ("sin4", "linear_ramp", "square")


# ---------------------------------------------------------------------------
# Pulses


@dataclass(frozen=True)
class PulseShape:
    """Coupling envelope ``g(t)`` on ``[0, t_g]``, zero outside.

    Forms
    -----
    ``sin4``
        ``g_max {1 - [1 - sin(pi t / t_g)]^4}^2``.
    ``linear_ramp``
        ``g_max min(t / t_ramp, 1)``.
    ``square``
        ``g_max``.
    """

    g_max: float
    t_g: float
    form: str = "sin4"
    t_ramp: float = 0.0

    def __post_init__(self):
        if self.form not in PULSE_FORMS:
            raise ParameterError(f"form must be one of {PULSE_FORMS}, got {self.form!r}")
        if self.t_g <= 0:
            raise ParameterError("t_g must be positive")
        if self.form == "linear_ramp" and self.t_ramp <= 0:
            raise ParameterError("linear_ramp needs a positive t_ramp")

    def __call__(self, t: float) -> float:
        return pulse_value(self, t)

    def derivative(self, t: float) -> float:
        """``dg/dt``, analytic."""
        if t < 0 or t > self.t_g:
            return 0.0
        if self.form == "square":
            return 0.0
        if self.form == "linear_ramp":
            return self.g_max / self.t_ramp if t < self.t_ramp else 0.0
        w = math.pi / self.t_g
        u = 1.0 - math.sin(w * t)
        inner = 1.0 - u**4
        return self.g_max * 2.0 * inner * 4.0 * u**3 * w * math.cos(w * t)


def pulse_value(shape: PulseShape, t: float) -> float:
    """Evaluate the envelope at ``t``; zero outside ``[0, t_g]``."""
    if t < 0 or t > shape.t_g:
        return 0.0
    if shape.form == "square":
        return shape.g_max
    if shape.form == "linear_ramp":
        return shape.g_max * min(t / shape.t_ramp, 1.0)
    u = 1.0 - math.sin(math.pi * t / shape.t_g)
    return shape.g_max * (1.0 - u**4) ** 2


def equivalent_ramp_time(shape: PulseShape) -> float:
    """Linear-ramp time with the same maximum slope as the envelope's rise."""
    ts = np.linspace(0.0, shape.t_g / 2.0, 2001)
    slope = max(abs(shape.derivative(t)) for t in ts)
    return shape.g_max / slope if slope > 0 else math.inf


# ---------------------------------------------------------------------------
# Hamiltonian


@dataclass
class LadderHamiltonian:
    """Number-conserving coupled Kerr oscillators.

    ``H(t) = sum_i (w_i + s_i(t)) n_i + eta/2 a_i^dag a_i^dag a_i a_i
    + sum_(i,j) g_ij (a_i^dag a_j + h.c.) + sum_k c_k(t) (a_p^dag a_q + h.c.)``.

    Attributes
    ----------
    mode_count, levels_per_mode : int
    frequencies : sequence of float
        ``w_i`` in rad/s (in whatever rotating frame the caller chooses).
    eta : float
        Anharmonicity, common to all modes, rad/s.
    couplings : dict
        Static ``{(i, j): g_ij}``.
    drives : list
        ``(i, j, envelope)`` with ``envelope(t)`` in rad/s.
    shifts : list
        ``(i, shift)`` with ``shift(t)`` in rad/s added to ``w_i``.
    """

    mode_count: int
    levels_per_mode: int
    frequencies: Sequence[float]
    eta: float
    couplings: dict = field(default_factory=dict)
    drives: list = field(default_factory=list)
    shifts: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode_count < 1 or self.levels_per_mode < 2:
            raise ParameterError("need at least one mode with two levels")
        if len(self.frequencies) != self.mode_count:
            raise ParameterError("one frequency per mode required")
        n, l = self.mode_count, self.levels_per_mode
        self.dim = l**n
        a = np.diag(np.sqrt(np.arange(1, l)), 1)
        eye = np.eye(l)
        self._a = []
        for i in range(n):
            ops = [eye] * n
            ops[i] = a
            m = ops[0]
            for op in ops[1:]:
                m = np.kron(m, op)
            self._a.append(m)
        self._n = [ai.T @ ai for ai in self._a]
        h = np.zeros((self.dim, self.dim))
        for i in range(n):
            h += self.frequencies[i] * self._n[i]
            h += 0.5 * self.eta * (self._n[i] @ self._n[i] - self._n[i])
        for (i, j), g in self.couplings.items():
            hop = self._a[i].T @ self._a[j]
            h += g * (hop + hop.T)
        self.static = h
        self._drive_ops = [(self._a[i].T @ self._a[j] + self._a[j].T @ self._a[i], f) for i, j, f in self.drives]
        self._shift_ops = [(self._n[i], f) for i, f in self.shifts]
        self.excitations = np.rint(np.diag(sum(self._n))).astype(int)

    def matrix(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for op, f in self._drive_ops:
            h += f(t) * op
        for op, f in self._shift_ops:
            h += f(t) * op
        return h

    def number(self, i: int) -> np.ndarray:
        return self._n[i]

    def fock_index(self, occupations: Sequence[int]) -> int:
        """Basis index of ``|n_1 ... n_N>`` (mode 1 most significant)."""
        idx = 0
        for n in occupations:
            if not 0 <= n < self.levels_per_mode:
                raise ParameterError("occupation exceeds truncation")
            idx = idx * self.levels_per_mode + n
        return idx

    def fock_label(self, index: int) -> tuple[int, ...]:
        occ = []
        for _ in range(self.mode_count):
            occ.append(index % self.levels_per_mode)
            index //= self.levels_per_mode
        return tuple(reversed(occ))


class EvolutionError(RuntimeError):
    """Raised when the integrator fails; carries the failing time."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.6e} s)")
        self.t = t


def evolve(h: LadderHamiltonian, psi0: np.ndarray, t_final: float, tol: float = 1e-10,
           t_eval: Sequence[float] | None = None, max_step: float | None = None):
    """Integrate ``i dpsi/dt = H(t) psi`` with adaptive DOP853.

    Parameters
    ----------
    psi0 : ndarray
        Normalized state, or a ``dim x k`` matrix of states evolved together.
    tol : float
        Target accuracy. The integrator runs at ``rtol = tol / 10`` and
        ``atol = tol / 1000``; the global norm drift then stays a few
        ``tol`` or less (local error control alone lets it grow ~20x).
    t_eval : sequence, optional
        Output times; the final state is always returned.

    Returns
    -------
    (psi_final, times, states, norm_drift)
        ``states`` is ``len(times) x dim (x k)``; ``norm_drift`` is the
        largest ``| ||psi|| - 1 |`` over output times and columns.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    psi0 = np.asarray(psi0, dtype=complex)
    shape = psi0.shape
    norms = np.linalg.norm(psi0.reshape(shape[0], -1), axis=0)
    if np.max(np.abs(norms - 1.0)) > 1e-9:
        raise ParameterError("initial state must be normalized")
    cols = 1 if psi0.ndim == 1 else shape[1]

    def rhs(t, y):
        return (-1j * (h.matrix(t) @ y.reshape(h.dim, cols))).reshape(-1)

    kwargs = {} if max_step is None else {"max_step": max_step}
    rtol, atol = tol * 0.1, tol * 1e-3
    sol = integrate.solve_ivp(rhs, (0.0, t_final), psi0.reshape(-1), method="DOP853", rtol=rtol,
                              atol=atol, t_eval=t_eval, **kwargs)
    if sol.status != 0:
        raise EvolutionError(sol.message, float(sol.t[-1]) if sol.t.size else 0.0)
    if t_eval is None:
        times, ys = sol.t[-1:], sol.y[:, -1:]
    else:
        times, ys = sol.t, sol.y
    states = ys.T.reshape((len(times),) + shape)
    if t_eval is not None and (len(times) == 0 or times[-1] != t_final):
        final = integrate.solve_ivp(rhs, (0.0, t_final), psi0.reshape(-1), method="DOP853", rtol=rtol,
                                    atol=atol, **kwargs)
        psi_final = final.y[:, -1].reshape(shape)
    else:
        psi_final = states[-1]
    flat = states.reshape(len(times), shape[0], cols)
    drift = float(np.max(np.abs(np.linalg.norm(flat, axis=1) - 1.0)))
    return psi_final, times, states, drift


# ---------------------------------------------------------------------------
# Dual-rail sqrt(iSWAP)

COMP_LABELS = ("00", "01", "10", "11")


SHIFT_MODES = ("exact", "formula", "none")


def _pair_hamiltonian(params: DeviceParams, levels: int, g: float = 0.0, s2: float = 0.0,
                      s3: float = 0.0) -> LadderHamiltonian:
    """Static four-transmon Hamiltonian with coupling ``g`` and shifts on transmons 2 and 3."""
    g12 = params.omega0 / 2.0
    couplings = {(0, 1): g12, (2, 3): g12}
    if g:
        couplings[(1, 2)] = g
    return LadderHamiltonian(4, levels, [0.0, s2, -params.delta + s3, -params.delta], params.eta, couplings)


def static_effective_hamiltonian(params: DeviceParams, levels: int, g: float, s2: float = 0.0,
                                 s3: float = 0.0) -> np.ndarray:
    """Exact effective Hamiltonian on the computational states at constant coupling ``g``.

    Dressed eigenvectors continuously connected to ``|00>..|11>`` are
    symmetrically orthonormalized onto the bare computational states.
    """
    comp = computational_states(_pair_hamiltonian(params, levels)).real
    w, v = np.linalg.eigh(_pair_hamiltonian(params, levels, g, s2, s3).static)
    overlap = np.abs(v.T @ comp) ** 2
    rows, cols = optimize.linear_sum_assignment(-overlap)
    idx = [int(rows[list(cols).index(k)]) for k in range(4)]
    if min(overlap[idx[k], k] for k in range(4)) < 0.25:
        raise ParameterError("dressed computational states not identifiable")
    u, _, vh = np.linalg.svd(comp.T @ v[:, idx])
    ortho = u @ vh
    return ortho @ np.diag(w[idx]) @ ortho.T


@functools.lru_cache(maxsize=16)
def exact_corrective_shifts(params: DeviceParams, levels: int, n_grid: int = 25):
    """Shifts of transmons 2 and 3 that null both single-qubit ``sigma_x`` terms.

    The ``sigma_x`` amplitude of each qubit (averaged over the other qubit's
    state) is read off :func:`static_effective_hamiltonian` and set to zero
    by root finding on a grid of couplings up to ``params.g_c``; the result
    is a pair of cubic splines in the instantaneous coupling.
    """
    from scipy.interpolate import CubicSpline

    unit = max(abs(params.g_c), 1.0)

    def residual(s, g):
        h = static_effective_hamiltonian(params, levels, g, s[0] * unit, s[1] * unit)
        return [0.5 * (h[0, 2] + h[1, 3]) / unit, 0.5 * (h[0, 1] + h[2, 3]) / unit]

    grid = np.linspace(0.0, params.g_c, n_grid)
    prev = np.zeros(2)
    sol = [prev]
    for g in grid[1:]:
        r = optimize.root(residual, prev, args=(g,))
        if np.max(np.abs(residual(r.x, g))) > 1e-9:
            raise ParameterError(f"corrective-shift root finding failed at g = {g:.4e}: {r.message}")
        prev = r.x
        sol.append(r.x * unit)
    sol = np.array(sol)
    if params.g_c == 0:
        return (lambda g: 0.0), (lambda g: 0.0)
    f2, f3 = CubicSpline(grid, sol[:, 0]), CubicSpline(grid, sol[:, 1])
    return (lambda g: float(f2(g))), (lambda g: float(f3(g)))


def dual_rail_hamiltonian(params: DeviceParams, levels: int, pulse: PulseShape,
                          corrective_shifts: str = "exact") -> LadderHamiltonian:
    """Four transmons, pairs (1,2) and (3,4), in the frame rotating at ``w_1``.

    ``w_1 = w_2 = w_3 + delta = w_4 + delta``; ``g_12 = g_34 = omega0 / 2``;
    the pulse drives ``a_2 a_3^dag + h.c.``. Transmons 2 and 3 receive
    time-dependent shifts that follow the instantaneous coupling:

    ``exact``
        shifts that null the induced ``sigma_x`` terms of the exact static
        effective Hamiltonian (:func:`exact_corrective_shifts`);
    ``formula``
        ``w_2 -> w_2 + h_X1(t)`` and ``w_3 -> w_3 - h_X2(t)`` with the
        second-order ``h_X`` of :func:`dual_rail_eff_params`;
    ``none``
        no shifts.
    """
    if corrective_shifts not in SHIFT_MODES:
        raise ParameterError(f"corrective_shifts must be one of {SHIFT_MODES}")
    g12 = params.omega0 / 2.0
    freqs = [0.0, 0.0, -params.delta, -params.delta]
    shifts = []
    if corrective_shifts == "formula":
        def h_x(t, j):
            return dual_rail_eff_params(pulse(t), params.delta, params.eta, params.omega0)[f"h_X{j}"]
        shifts = [(1, lambda t: h_x(t, 1)), (2, lambda t: -h_x(t, 2))]
    elif corrective_shifts == "exact":
        f2, f3 = exact_corrective_shifts(params, levels)
        shifts = [(1, lambda t: f2(pulse(t))), (2, lambda t: f3(pulse(t)))]
    return LadderHamiltonian(4, levels, freqs, params.eta, {(0, 1): g12, (2, 3): g12},
                             [(1, 2, pulse)], shifts)


def computational_states(h: LadderHamiltonian) -> np.ndarray:
    """Columns ``|00>, |01>, |10>, |11>`` from exact diagonalization of the static Hamiltonian.

    ``|b>`` of a pair is ``(|ge> - (-1)^b |eg>) / sqrt 2``. Each column is
    the projection of that product state onto the static eigenspace it
    overlaps most, normalized. Eigenspaces group degenerate eigenvalues,
    since ``|01>`` and ``|10>`` are degenerate.
    """
    s = 1.0 / math.sqrt(2.0)
    pair = {0: {(0, 1): s, (1, 0): -s}, 1: {(0, 1): s, (1, 0): s}}
    w, v = np.linalg.eigh(h.static)
    scale = max(1.0, float(np.max(np.abs(w))))
    out = np.zeros((h.dim, 4), dtype=complex)
    for k, (b, c) in enumerate(itertools.product((0, 1), repeat=2)):
        bare = np.zeros(h.dim)
        for (n1, n2), x in pair[b].items():
            for (n3, n4), y in pair[c].items():
                bare[h.fock_index((n1, n2, n3, n4))] = x * y
        j = int(np.argmax(np.abs(v.T @ bare)))
        space = v[:, np.abs(w - w[j]) <= 1e-9 * scale]
        vec = space @ (space.T @ bare)
        weight = float(vec @ vec)
        if weight < 0.5:
            raise ParameterError("computational state not identifiable in the static spectrum")
        out[:, k] = vec / math.sqrt(weight)
    return out


def sqrt_iswap_target() -> np.ndarray:
    c = s = 1.0 / math.sqrt(2.0)
    return np.array([[1, 0, 0, 0], [0, c, -1j * s, 0], [0, -1j * s, c, 0], [0, 0, 0, 1]], dtype=complex)


_Z1 = np.array([1, 1, -1, -1])
_Z2 = np.array([1, -1, 1, -1])


def _gauge_target(x: np.ndarray, target: np.ndarray) -> np.ndarray:
    d1, d2, e1, e2, zz = x
    left = np.exp(-1j * (d1 * _Z1 + d2 * _Z2))
    right = np.exp(-1j * (e1 * _Z1 + e2 * _Z2 + zz * _Z1 * _Z2))
    return left[:, None] * target * right[None, :]


def gauge_infidelity(m: np.ndarray, target: np.ndarray | None = None,
                     grid: int = 8) -> tuple[float, np.ndarray, bool]:
    """``min 1 - |Tr(M^dag V(gauge))|^2 / 16`` over Z and ZZ gauge angles.

    ``V = U_Z(d) target U_Z(d') exp(-i d_ZZ Z Z)``. A coarse grid over
    ``(d1, d2, d_ZZ)`` seeds a Nelder-Mead refinement over all five angles.

    Returns
    -------
    (IF, angles, converged)
    """
    target = sqrt_iswap_target() if target is None else target

    def cost(x):
        return 1.0 - abs(np.trace(m.conj().T @ _gauge_target(x, target))) ** 2 / 16.0

    axis = np.linspace(-math.pi / 2, math.pi / 2, grid, endpoint=False)
    best = None
    for d1, d2, zz in itertools.product(axis, axis, axis):
        x = np.array([d1, d2, 0.0, 0.0, zz])
        c = cost(x)
        if best is None or c < best[0]:
            best = (c, x)
    res = optimize.minimize(cost, best[1], method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 20000, "maxfev": 40000})
    res2 = optimize.minimize(cost, res.x, method="Nelder-Mead",
                             options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000, "maxfev": 40000})
    return float(max(res2.fun, 0.0)), res2.x, bool(res2.success)


@dataclass
class GateResult:
    unitary: np.ndarray          # 4 x 4 block <i|U|j> on the computational states
    infidelity: float
    gauge: np.ndarray
    converged: bool
    leakage: float               # mean population outside the computational subspace
    leakage_per_state: np.ndarray
    outside_sector: float        # largest population outside the initial excitation sector
    norm_drift: float
    t_g: float
    levels: int
    tol: float
    final_states: np.ndarray = field(repr=False)
    hamiltonian: LadderHamiltonian = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "infidelity": self.infidelity,
            "leakage": self.leakage,
            "leakage_per_state": self.leakage_per_state.tolist(),
            "outside_sector": self.outside_sector,
            "norm_drift": self.norm_drift,
            "converged": self.converged,
            "t_g": self.t_g,
            "levels": self.levels,
            "tol": self.tol,
            "gauge": self.gauge.tolist(),
            "unitary_real": self.unitary.real.tolist(),
            "unitary_imag": self.unitary.imag.tolist(),
        }


def sqrt_iswap_sim(params: DeviceParams, levels_per_mode: int = 3, tol: float = 1e-10,
                   corrective_shifts: str = "exact", t_eval: Sequence[float] | None = None) -> GateResult:
    """Simulate the gate on all four computational inputs.

    Uses ``params.g_c`` as the pulse peak, ``params.t_g`` as the pulse length
    and the ``sin4`` envelope.
    """
    if params.t_g <= 0:
        raise ParameterError("params.t_g must be positive")
    pulse = PulseShape(params.g_c, params.t_g, "sin4")
    h = dual_rail_hamiltonian(params, levels_per_mode, pulse, corrective_shifts)
    comp = computational_states(h)
    final, times, states, drift = evolve(h, comp, params.t_g, tol, t_eval=t_eval)
    m = comp.conj().T @ final
    inf, gauge, ok = gauge_infidelity(m)
    # population in the orthogonal complement, not 1 - P_comp, so norm drift is not counted
    leak = np.sum(np.abs(final) ** 2, axis=0) - np.sum(np.abs(m) ** 2, axis=0)
    sector = h.excitations == 2
    outside = float(np.max(np.sum(np.abs(final[~sector]) ** 2, axis=0)))
    return GateResult(m, inf, gauge, ok, float(np.mean(leak)), leak, outside, drift, params.t_g,
                      levels_per_mode, tol, final, h)


def effective_angle(params: DeviceParams, t_g: float | None = None, convention: str = "projected") -> float:
    """``theta = int g_XX(t) dt`` with ``g_XX`` from the effective model, for the ``sin4`` pulse."""
    t_g = params.t_g if t_g is None else t_g
    pulse = PulseShape(params.g_c, t_g, "sin4")
    def gxx(t):
        return dual_rail_eff_params(pulse(t), params.delta, params.eta, params.omega0, convention)["g_XX"]
    return float(integrate.quad(gxx, 0.0, t_g, limit=200)[0])


def simulated_angle(result: GateResult) -> float:
    """Swap angle of the simulated odd block: ``atan(|U_01,10| / |U_01,01|)``."""
    m = result.unitary
    return float(math.atan2(0.5 * (abs(m[1, 2]) + abs(m[2, 1])), 0.5 * (abs(m[1, 1]) + abs(m[2, 2]))))


def tune_gate_time(params: DeviceParams, levels_per_mode: int = 3, tol: float = 1e-10,
                   corrective_shifts: str = "exact", bracket: tuple[float, float] | None = None,
                   xtol: float = 1e-13) -> float:
    """Pulse length at which the simulated swap angle equals ``pi/4``.

    The default bracket is ``params.t_g`` +/- 10 %.
    """
    if bracket is None:
        bracket = (0.9 * params.t_g, 1.1 * params.t_g)

    def f(t_g):
        p = dataclasses.replace(params, t_g=t_g)
        return simulated_angle(sqrt_iswap_sim(p, levels_per_mode, tol, corrective_shifts)) - math.pi / 4.0

    fa, fb = f(bracket[0]), f(bracket[1])
    if fa * fb > 0:
        raise ParameterError(f"swap angle pi/4 not bracketed by {bracket}")
    return float(optimize.brentq(f, *bracket, xtol=xtol))


def strip_single_qubit_gauge(m: np.ndarray, gauge: np.ndarray) -> np.ndarray:
    """Remove the fitted single-qubit Z rotations, keeping any ZZ part.

    With ``m ~ L T R`` as fitted by :func:`gauge_infidelity`, returns
    ``L^dag m R_1^dag`` where ``R_1`` is the single-qubit part of ``R``.
    """
    d1, d2, e1, e2, _ = gauge
    left = np.exp(1j * (d1 * _Z1 + d2 * _Z2))
    right = np.exp(1j * (e1 * _Z1 + e2 * _Z2))
    return left[:, None] * m * right[None, :]


def cx_composition_check(m: np.ndarray, gauge: np.ndarray | None = None) -> dict:
    """Compose ``S X_1 S`` and compare with ``X_1 exp(-i pi X1 X2 / 4)``.

    ``S`` is ``m`` with its single-qubit Z gauge stripped (fitted by
    :func:`gauge_infidelity` unless ``gauge`` is given); any ``exp(-i d Z1 Z2)``
    left in ``S`` cancels because ``X_1`` anticommutes with ``Z1 Z2``. The
    returned infidelity is minimized over single-qubit Z rotations before and
    after the composite gate. The leftover ``X_1`` is a local Pauli, so the
    composite is a CNOT up to single-qubit Clifford gates.
    """
    if gauge is None:
        _, gauge, _ = gauge_infidelity(m)
    s = strip_single_qubit_gauge(m, gauge)
    x1 = np.kron(np.array([[0, 1], [1, 0]]), np.eye(2)).astype(complex)
    xx = np.kron(np.array([[0, 1], [1, 0]]), np.array([[0, 1], [1, 0]]))
    target = x1 @ (np.eye(4) - 1j * xx) / math.sqrt(2.0)
    comp = s @ x1 @ s

    def cost(x):
        d1, d2, e1, e2 = x
        left = np.exp(-1j * (d1 * _Z1 + d2 * _Z2))
        right = np.exp(-1j * (e1 * _Z1 + e2 * _Z2))
        v = left[:, None] * target * right[None, :]
        return 1.0 - abs(np.trace(comp.conj().T @ v)) ** 2 / 16.0

    start = np.zeros(4)
    best = cost(start)
    axis = np.linspace(-math.pi / 2, math.pi / 2, 4, endpoint=False)
    for x in itertools.product(axis, repeat=4):
        c = cost(np.array(x))
        if c < best - 1e-12:
            best, start = c, np.array(x)
    res = optimize.minimize(cost, start, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-17, "maxiter": 20000, "maxfev": 40000})
    return {"infidelity": float(max(min(res.fun, best), 0.0)), "gauge": res.x, "composite": comp,
            "zz_angle": float(gauge[4])}


def ideal_sqrt_iswap(delta_zz: float = 0.0) -> np.ndarray:
    """``sqrt(iSWAP) exp(-i d_ZZ Z1 Z2)``."""
    return sqrt_iswap_target() * np.exp(-1j * delta_zz * _Z1 * _Z2)[None, :]


def population_trace(result: GateResult, params: DeviceParams, input_label: str, n_times: int = 201,
                     tol: float | None = None) -> tuple[np.ndarray, dict]:
    """Populations of the computational states and every leaked Fock state versus time.

    Returns ``(times, {label: populations})``; computational states are
    labelled ``00``..``11``, other states by their Fock occupations.
    """
    if input_label not in COMP_LABELS:
        raise ParameterError(f"input must be one of {COMP_LABELS}")
    h = result.hamiltonian
    comp = computational_states(h)
    psi0 = comp[:, COMP_LABELS.index(input_label)]
    times = np.linspace(0.0, result.t_g, n_times)
    _, ts, states, _ = evolve(h, psi0, result.t_g, tol or result.tol, t_eval=times)
    pops = {lab: np.abs(states @ comp[:, k].conj()) ** 2 for k, lab in enumerate(COMP_LABELS)}
    proj = comp @ comp.conj().T
    rest = states - states @ proj.T
    for idx in np.flatnonzero(h.excitations == 2):
        p = np.abs(rest[:, idx]) ** 2
        if p.max() > 1e-14:
            pops["".join(map(str, h.fock_label(idx)))] = p
    return ts, pops


def write_trace_csv(path, times: np.ndarray, pops: dict) -> None:
    """CSV with a ``t`` column and one population column per labelled state."""
    labels = list(pops)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + labels)
        for i, t in enumerate(times):
            w.writerow([repr(float(t))] + [repr(float(pops[l][i])) for l in labels])


# ---------------------------------------------------------------------------
# Two-level diabatic testbed


def two_level_diabatic_sim(delta: float, g: Callable[[float], float], t_final: float,
                           times: Sequence[float] | None = None, tol: float = 1e-11) -> dict:
    """Exact ``P_D(t)`` for ``H = delta/2 tau_z + g(t)/2 tau_x`` started in ``|0>``.

    ``P_D`` is the population of the adiabatically continued excited state,
    ``|<1| exp(i theta tau_y / 2) |psi(t)>|^2`` with ``tan theta = g / delta``.
    """
    if delta == 0:
        raise ParameterError("delta must be non-zero")
    times = np.linspace(0.0, t_final, 401) if times is None else np.asarray(times, dtype=float)
    sz = np.diag([1.0, -1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])

    def rhs(t, y):
        return -0.5j * ((delta * sz + g(t) * sx) @ y)

    if abs(g(0.0)) > 0:
        raise ParameterError("g(0) must vanish")
    sol = integrate.solve_ivp(rhs, (0.0, t_final), np.array([1.0, 0.0], dtype=complex), method="DOP853",
                              rtol=tol, atol=tol * 1e-2, t_eval=times, max_step=abs(math.pi / delta) / 4)
    if sol.status != 0:
        raise EvolutionError(sol.message, float(sol.t[-1]) if sol.t.size else 0.0)
    out = np.empty(len(sol.t))
    for k, t in enumerate(sol.t):
        th = math.atan(g(t) / delta)
        # exp(i th tau_y / 2) = cos(th/2) I + i sin(th/2) tau_y; row <1| is (-sin, cos)
        out[k] = abs(-math.sin(th / 2) * sol.y[0, k] + math.cos(th / 2) * sol.y[1, k]) ** 2
    return {"t": sol.t, "P_D": out}
