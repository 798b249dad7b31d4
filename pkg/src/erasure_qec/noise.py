"""Heralded-erasure-plus-Pauli (HEP) circuit noise.

Rates:

* ``p``: preparation, idling and CNOTs are followed by a uniform one- or
  two-qubit Pauli channel with total error rate ``p``;
* ``p_m``: each measurement outcome is flipped with probability ``p_m``
  (defaults to ``2p/3``);
* ``e``: each CNOT is independently erased with probability ``e``; an erased
  CNOT is followed by a fully depolarizing two-qubit channel (each of the 16
  two-qubit Paulis, identity included, with probability 1/16) and the decoder
  is told where it happened.

Idle noise is applied per timestep to every qubit with no other operation in
that timestep.

Random streams are counter based (Philox) and keyed by ``(seed, stream,
index)`` so that any shot or erasure realization can be regenerated on its
own, independent of how work is split across processes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .layout import Circuit, ParameterError

SCHEMES = ("erasure", "standard", "code_capacity")

PAULI_1Q = ("X", "Y", "Z")
PAULI_2Q_ALL = tuple(a + b for a in "IXYZ" for b in "IXYZ")
PAULI_2Q = PAULI_2Q_ALL[1:]

# Independent stream families drawn from the same master seed.
STREAM_SHOT = 0
STREAM_ERASURE = 1
STREAM_PAULI = 2
STREAM_BLOCK = 3


def make_rng(seed: int, index: int, stream: int = STREAM_SHOT) -> np.random.Generator:
    """Counter-based generator for work unit ``index`` of ``stream``."""
    if seed < 0 or index < 0:
        raise ParameterError("seed and index must be non-negative")
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(stream), int(index)]))


def _check_rate(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or not np.isfinite(value):
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class NoiseParams:
    p: float = 0.0
    p_m: float | None = None
    e: float = 0.0
    q_plus: float = 0.0
    q_minus: float = 0.0
    scheme: str = "erasure"

    def __post_init__(self):
        if self.p_m is None:
            object.__setattr__(self, "p_m", 2.0 * self.p / 3.0)
        for name in ("p", "p_m", "e", "q_plus", "q_minus"):
            _check_rate(name, getattr(self, name))
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    def replace(self, **changes) -> "NoiseParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseParams":
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ParameterError(f"unknown noise keys: {sorted(unknown)}")
        return cls(**data)

    @property
    def cnot_pauli_rate(self) -> float:
        """Two-qubit Pauli rate after CNOTs actually simulated for this scheme."""
        if self.scheme == "standard":
            return standard_equivalent_rate(self.p, self.e)
        return self.p

    @property
    def erasure_rate(self) -> float:
        return self.e if self.scheme == "erasure" else 0.0


@dataclass
class FaultSample:
    pauli_faults: list = field(default_factory=list)   # [(location, pauli_string)]
    erased_cnots: list = field(default_factory=list)   # [location]
    flipped_measurements: list = field(default_factory=list)   # [location]

    def is_empty(self) -> bool:
        return not (self.pauli_faults or self.erased_cnots or self.flipped_measurements)


def standard_equivalent_rate(p: float, e: float) -> float:
    """CNOT error rate of the standard scheme: ``p + 15e/16 - e p``.

    A Pauli channel of rate ``p`` followed, with probability ``e``, by full
    depolarization is again a uniform two-qubit Pauli channel with this rate.
    """
    _check_rate("p", p)
    _check_rate("e", e)
    return p + 15.0 * e / 16.0 - e * p


def imperfect_detection_adjust(params: NoiseParams) -> NoiseParams:
    """Fold erasure-detection errors into the HEP rates.

    False negatives act like ordinary Pauli errors after CNOTs
    (``p -> p + e q_minus``); false positives only disturb the decoder weights
    and are approximated by extra erasures (``e -> e + q_plus``).
    """
    if params.scheme != "erasure":
        raise ParameterError("imperfect detection applies to the erasure scheme only")
    p = params.p + params.e * params.q_minus
    e = params.e + params.q_plus
    if p > 1.0 or e > 1.0:
        raise ParameterError(f"adjusted rates exceed 1 (p={p}, e={e})")
    return params.replace(p=p, e=e, q_plus=0.0, q_minus=0.0)


def effective_params(params: NoiseParams) -> NoiseParams:
    """Params with detection errors folded in; identity when ``q_plus = q_minus = 0``."""
    if params.q_plus == 0.0 and params.q_minus == 0.0:
        return params
    return imperfect_detection_adjust(params)


def sample_faults(circuit: Circuit, params: NoiseParams, rng: np.random.Generator) -> FaultSample:
    """Draw one shot's faults for every noisy location of ``circuit``."""
    if params.scheme == "code_capacity":
        raise ParameterError("code-capacity noise has no circuit locations")
    params = effective_params(params)
    p, p_cnot, e, p_m = params.p, params.cnot_pauli_rate, params.erasure_rate, params.p_m
    sample = FaultSample()
    for t, step in enumerate(circuit.timesteps):
        if not step.noisy:
            continue
        n_ops = len(step.ops)
        u = rng.random(n_ops)
        erase_u = rng.random(n_ops)
        pick16 = rng.integers(0, 16, size=n_ops)
        pick15 = rng.integers(0, 15, size=n_ops)
        pick3 = rng.integers(0, 3, size=n_ops)
        for i, op in enumerate(step.ops):
            loc = (t, i)
            if op.kind == "cnot":
                if erase_u[i] < e:
                    sample.erased_cnots.append(loc)
                    if pick16[i]:
                        sample.pauli_faults.append((loc, PAULI_2Q_ALL[pick16[i]]))
                elif u[i] < p_cnot:
                    sample.pauli_faults.append((loc, PAULI_2Q[pick15[i]]))
            elif op.kind == "measure":
                if u[i] < p_m:
                    sample.flipped_measurements.append(loc)
            elif u[i] < p:
                sample.pauli_faults.append((loc, PAULI_1Q[pick3[i]]))
    return sample
