"""Unrotated square-lattice surface code and its syndrome-extraction circuit.

Lattice convention, on a (2d-1) x (2d-1) grid with coordinates (row, col):

* data qubits sit at ``row + col`` even,
* X-stabilizer ancillas at (even row, odd col): truncated at the top and
  bottom edges,
* Z-stabilizer ancillas at (odd row, even col): truncated at the left and
  right edges.

The logical Z operator is the top row of data qubits and the logical X
operator is the left column. X errors are detected by Z stabilizers and form
strings from the top boundary to the bottom boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

# Interaction order shared by both stabilizer types: north, west, east, south.
SCHEDULE_ORDER = ((-1, 0), (0, -1), (0, 1), (1, 0))


class ParameterError(ValueError):
    """Raised when a constructor receives parameters outside its domain."""


@dataclass(frozen=True)
class SurfaceCodeLayout:
    distance: int
    data_qubits: tuple[tuple[int, int], ...]
    x_ancillas: tuple[tuple[int, int], ...]
    z_ancillas: tuple[tuple[int, int], ...]
    x_stabilizers: tuple[tuple[int, ...], ...]
    z_stabilizers: tuple[tuple[int, ...], ...]
    logical_x: tuple[int, ...]
    logical_z: tuple[int, ...]
    # cnot_schedule[k] lists (ancilla_qubit, data_qubit) pairs active at step k
    cnot_schedule: tuple[tuple[tuple[int, int], ...], ...]
    coord_index: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_data(self) -> int:
        return len(self.data_qubits)

    @property
    def n_qubits(self) -> int:
        return self.n_data + len(self.x_ancillas) + len(self.z_ancillas)

    def x_ancilla_qubit(self, i: int) -> int:
        return self.n_data + i

    def z_ancilla_qubit(self, i: int) -> int:
        return self.n_data + len(self.x_ancillas) + i

    def is_x_ancilla(self, q: int) -> bool:
        return self.n_data <= q < self.n_data + len(self.x_ancillas)

    def is_z_ancilla(self, q: int) -> bool:
        return q >= self.n_data + len(self.x_ancillas)

    def coordinates(self, q: int) -> tuple[int, int]:
        if q < self.n_data:
            return self.data_qubits[q]
        q -= self.n_data
        if q < len(self.x_ancillas):
            return self.x_ancillas[q]
        return self.z_ancillas[q - len(self.x_ancillas)]

    def to_json(self) -> str:
        """Debug dump: coordinates, stabilizer supports and CNOT schedule."""
        return json.dumps({
            "distance": self.distance,
            "data_qubits": [list(c) for c in self.data_qubits],
            "x_ancillas": [list(c) for c in self.x_ancillas],
            "z_ancillas": [list(c) for c in self.z_ancillas],
            "x_stabilizers": [list(s) for s in self.x_stabilizers],
            "z_stabilizers": [list(s) for s in self.z_stabilizers],
            "logical_x": list(self.logical_x),
            "logical_z": list(self.logical_z),
            "cnot_schedule": [[list(pair) for pair in step] for step in self.cnot_schedule],
        }, indent=1)


def build_layout(d: int) -> SurfaceCodeLayout:
    """Construct the distance-``d`` unrotated surface code.

    Parameters
    ----------
    d : int
        Odd code distance, at least 3.

    Returns
    -------
    SurfaceCodeLayout
        ``d**2 + (d-1)**2`` data qubits and ``d*(d-1)`` stabilizers of each type.
    """
    if not isinstance(d, int) or isinstance(d, bool) or d < 3 or d % 2 == 0:
        raise ParameterError(f"distance must be an odd integer >= 3, got {d!r}")
    size = 2 * d - 1
    data = [(r, c) for r in range(size) for c in range(size) if (r + c) % 2 == 0]
    x_anc = [(r, c) for r in range(0, size, 2) for c in range(1, size, 2)]
    z_anc = [(r, c) for r in range(1, size, 2) for c in range(0, size, 2)]
    index = {rc: i for i, rc in enumerate(data)}

    def support(anc):
        r, c = anc
        return tuple(index[(r + dr, c + dc)] for dr, dc in SCHEDULE_ORDER
                     if (r + dr, c + dc) in index)

    n_data = len(data)
    schedule = []
    for dr, dc in SCHEDULE_ORDER:
        step = []
        for i, (r, c) in enumerate(x_anc):
            if (r + dr, c + dc) in index:
                step.append((n_data + i, index[(r + dr, c + dc)]))
        for i, (r, c) in enumerate(z_anc):
            if (r + dr, c + dc) in index:
                step.append((n_data + len(x_anc) + i, index[(r + dr, c + dc)]))
        schedule.append(tuple(step))

    return SurfaceCodeLayout(
        distance=d,
        data_qubits=tuple(data),
        x_ancillas=tuple(x_anc),
        z_ancillas=tuple(z_anc),
        x_stabilizers=tuple(support(a) for a in x_anc),
        z_stabilizers=tuple(support(a) for a in z_anc),
        logical_x=tuple(index[(r, 0)] for r in range(0, size, 2)),
        logical_z=tuple(index[(0, c)] for c in range(0, size, 2)),
        cnot_schedule=tuple(schedule),
        coord_index=index,
    )


class Op(NamedTuple):
    """One circuit operation.

    ``kind`` is one of ``prepare``, ``idle``, ``cnot``, ``measure``. For
    ``cnot`` the qubits are ``(control, target)``. ``basis`` is ``"Z"`` or
    ``"X"`` for prepare/measure and empty otherwise.
    """
    kind: str
    qubits: tuple
    basis: str = ""


@dataclass(frozen=True)
class Timestep:
    ops: tuple[Op, ...]
    round: int
    noisy: bool


@dataclass(frozen=True)
class Circuit:
    """Memory experiment: ``rounds`` noisy rounds plus one noiseless round.

    Locations are ``(timestep, op_index)`` pairs.
    """
    layout: SurfaceCodeLayout
    rounds: int
    timesteps: tuple[Timestep, ...]

    @property
    def total_rounds(self) -> int:
        return self.rounds + 1

    def locations(self, kind: str | None = None, noisy_only: bool = True):
        for t, step in enumerate(self.timesteps):
            if noisy_only and not step.noisy:
                continue
            for i, op in enumerate(step.ops):
                if kind is None or op.kind == kind:
                    yield (t, i)

    def op_at(self, location) -> Op:
        t, i = location
        return self.timesteps[t].ops[i]

    def cnot_locations(self) -> list[tuple[int, int]]:
        """CNOT locations of the noisy rounds, in circuit order."""
        return list(self.locations("cnot"))


def syndrome_circuit(layout: SurfaceCodeLayout, rounds: int) -> Circuit:
    """Build the syndrome-extraction circuit.

    Each round is six timesteps: ancilla preparation, the four scheduled CNOT
    layers, ancilla measurement. Any qubit not acted on in a timestep gets an
    explicit ``idle`` operation so that it is a noise location. Data qubits are
    prepared in ``|0>`` during the first timestep. The final round is noiseless.
    """
    if not isinstance(rounds, int) or rounds < 1:
        raise ParameterError(f"rounds must be >= 1, got {rounds!r}")
    n = layout.n_qubits
    data = range(layout.n_data)
    x_q = [layout.x_ancilla_qubit(i) for i in range(len(layout.x_ancillas))]
    z_q = [layout.z_ancilla_qubit(i) for i in range(len(layout.z_ancillas))]

    steps = []
    for rnd in range(rounds + 1):
        noisy = rnd < rounds
        ops = [Op("prepare", (q,), "X") for q in x_q] + [Op("prepare", (q,), "Z") for q in z_q]
        if rnd == 0:
            ops += [Op("prepare", (q,), "Z") for q in data]
        else:
            ops += [Op("idle", (q,)) for q in data]
        steps.append(Timestep(tuple(ops), rnd, noisy))

        for layer in layout.cnot_schedule:
            ops = []
            busy = set()
            for anc, dq in layer:
                if layout.is_x_ancilla(anc):
                    ops.append(Op("cnot", (anc, dq)))
                else:
                    ops.append(Op("cnot", (dq, anc)))
                busy.update((anc, dq))
            ops += [Op("idle", (q,)) for q in range(n) if q not in busy]
            steps.append(Timestep(tuple(ops), rnd, noisy))

        ops = [Op("measure", (q,), "X") for q in x_q] + [Op("measure", (q,), "Z") for q in z_q]
        ops += [Op("idle", (q,)) for q in data]
        steps.append(Timestep(tuple(ops), rnd, noisy))
    return Circuit(layout=layout, rounds=rounds, timesteps=tuple(steps))
