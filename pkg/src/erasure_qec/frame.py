"""Pauli-frame propagation through the syndrome-extraction circuit.

All operations are Clifford and all noise is Pauli (an erasure is a uniformly
random Pauli at a flagged location), so tracking the X and Z flip bits of each
qubit relative to the noiseless run is exact. Frames are propagated in
batches: column ``f`` of the frame arrays is an independent frame, which lets
the same routine simulate one shot, many shots, or every single-fault
mechanism at once.

The decoded sector is the one protecting logical Z: X flips, detected by the
Z stabilizers. :class:`FaultTable` lists, for every X-type fault mechanism of
the circuit, the Z detectors it triggers and whether it flips logical Z; it is
the basis of the fast batched sampler and of the decoding graph.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .layout import Circuit, SurfaceCodeLayout, build_layout, syndrome_circuit
from .noise import FaultSample, NoiseParams, effective_params, make_rng, sample_faults

_PAULI_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}

# X-part patterns after a CNOT, over its (control, target) pair
CNOT_X_PATTERNS = ((1, 0), (0, 1), (1, 1))


@dataclass
class PauliFrame:
    """Per-qubit X and Z flip bits for a batch of ``n_frames`` frames."""
    x: np.ndarray
    z: np.ndarray

    @classmethod
    def zeros(cls, n_qubits: int, n_frames: int = 1) -> "PauliFrame":
        return cls(np.zeros((n_qubits, n_frames), dtype=bool),
                   np.zeros((n_qubits, n_frames), dtype=bool))

    def cnot(self, controls, targets) -> None:
        self.x[targets] ^= self.x[controls]
        self.z[controls] ^= self.z[targets]

    def reset(self, qubits) -> None:
        self.x[qubits] = False
        self.z[qubits] = False


@dataclass
class ShotRecord:
    """Outcome of one shot.

    ``detection_events[r, s]`` is the XOR of Z-stabilizer ``s`` outcomes in
    rounds ``r`` and ``r-1`` (round -1 is the ideal +1 eigenvalue);
    ``x_detection_events`` holds the other sector, starting from the second
    round. ``logical_flip`` is the parity of X flips on the logical-Z support
    at the end of the circuit, before any correction.
    """
    detection_events: np.ndarray
    x_detection_events: np.ndarray
    logical_flip: int
    erased_cnots: tuple = ()
    erased_qubits: tuple = ()

    @property
    def defects(self) -> np.ndarray:
        return np.flatnonzero(self.detection_events.ravel())


@dataclass
class _Program:
    """Circuit compiled into per-timestep index arrays."""
    n_qubits: int
    steps: list
    z_meas_slots: np.ndarray
    x_meas_slots: np.ndarray


@functools.lru_cache(maxsize=32)
def _compile_cached(distance: int, rounds: int) -> _Program:
    return _compile(syndrome_circuit(build_layout(distance), rounds))


def _compile(circuit: Circuit) -> _Program:
    layout = circuit.layout
    n_x = len(layout.x_ancillas)
    steps = []
    for step in circuit.timesteps:
        ctrl, targ, reset, mz, mx = [], [], [], [], []
        for i, op in enumerate(step.ops):
            if op.kind == "cnot":
                ctrl.append(op.qubits[0])
                targ.append(op.qubits[1])
            elif op.kind == "prepare":
                reset.append(op.qubits[0])
            elif op.kind == "measure":
                q = op.qubits[0]
                if op.basis == "Z":
                    mz.append((i, q, q - layout.z_ancilla_qubit(0)))
                else:
                    mx.append((i, q, q - layout.x_ancilla_qubit(0)))
        steps.append(dict(
            ctrl=np.array(ctrl, dtype=np.intp), targ=np.array(targ, dtype=np.intp),
            reset=np.array(reset, dtype=np.intp),
            mz=np.array(mz, dtype=np.intp).reshape(-1, 3),
            mx=np.array(mx, dtype=np.intp).reshape(-1, 3),
            round=step.round,
        ))
    return _Program(layout.n_qubits, steps, np.arange(len(layout.z_ancillas)), np.arange(n_x))


def _program(circuit: Circuit) -> _Program:
    return _compile_cached(circuit.layout.distance, circuit.rounds)


def propagate(circuit: Circuit, n_frames: int, paulis=None, meas_flips=None):
    """Propagate a batch of frames through ``circuit``.

    Parameters
    ----------
    paulis : dict, optional
        ``timestep -> (frames, qubits, xbits, zbits)`` arrays of Pauli
        injections applied after the operations of that timestep.
    meas_flips : dict, optional
        ``timestep -> (frames, op_indices)`` measurement outcome flips.

    Returns
    -------
    z_meas, x_meas : ndarray
        Outcome flips of shape ``(total_rounds, n_stabilizers, n_frames)``.
    final : PauliFrame
    """
    prog = _program(circuit)
    layout = circuit.layout
    paulis = paulis or {}
    meas_flips = meas_flips or {}
    frame = PauliFrame.zeros(prog.n_qubits, n_frames)
    R = circuit.total_rounds
    z_meas = np.zeros((R, len(layout.z_ancillas), n_frames), dtype=bool)
    x_meas = np.zeros((R, len(layout.x_ancillas), n_frames), dtype=bool)
    for t, st in enumerate(prog.steps):
        if st["ctrl"].size:
            frame.cnot(st["ctrl"], st["targ"])
        if st["reset"].size:
            frame.reset(st["reset"])
        if t in paulis:
            f, q, xb, zb = paulis[t]
            frame.x[q, f] ^= xb.astype(bool)
            frame.z[q, f] ^= zb.astype(bool)
        r = st["round"]
        if st["mz"].size or st["mx"].size:
            flip_ops = None
            if t in meas_flips:
                flip_ops = meas_flips[t]
            for rows, out, bits in ((st["mz"], z_meas, frame.x), (st["mx"], x_meas, frame.z)):
                if not rows.size:
                    continue
                out[r, rows[:, 2]] = bits[rows[:, 1]]
                if flip_ops is not None:
                    f, ops = flip_ops
                    slot_of = dict(zip(rows[:, 0].tolist(), rows[:, 2].tolist()))
                    for fi, oi in zip(f.tolist(), ops.tolist()):
                        if oi in slot_of:
                            out[r, slot_of[oi], fi] ^= True
    return z_meas, x_meas, frame


def _events(z_meas, x_meas):
    z_prev = np.concatenate([np.zeros_like(z_meas[:1]), z_meas[:-1]], axis=0)
    z_events = z_meas ^ z_prev
    x_events = x_meas[1:] ^ x_meas[:-1]
    return z_events, x_events


def _injections_from_sample(circuit: Circuit, sample: FaultSample):
    paulis, flips = {}, {}
    for (t, i), pauli in sample.pauli_faults:
        op = circuit.op_at((t, i))
        qubits = op.qubits
        for q, letter in zip(qubits, pauli):
            xb, zb = _PAULI_BITS[letter]
            if xb or zb:
                paulis.setdefault(t, []).append((0, q, xb, zb))
    for (t, i) in sample.flipped_measurements:
        flips.setdefault(t, []).append((0, i))
    paulis = {t: tuple(np.array(col, dtype=np.intp) for col in zip(*rows)) for t, rows in paulis.items()}
    flips = {t: tuple(np.array(col, dtype=np.intp) for col in zip(*rows)) for t, rows in flips.items()}
    return paulis, flips


def record_from_faults(circuit: Circuit, sample: FaultSample) -> ShotRecord:
    """Propagate one shot's faults and collect its detection events."""
    paulis, flips = _injections_from_sample(circuit, sample)
    z_meas, x_meas, frame = propagate(circuit, 1, paulis, flips)
    z_events, x_events = _events(z_meas, x_meas)
    logical = int(np.bitwise_xor.reduce(frame.x[list(circuit.layout.logical_z), 0].astype(np.uint8)))
    return ShotRecord(
        detection_events=z_events[:, :, 0].astype(np.uint8),
        x_detection_events=x_events[:, :, 0].astype(np.uint8),
        logical_flip=logical,
        erased_cnots=tuple(sample.erased_cnots),
    )


def run_shot(circuit: Circuit, params: NoiseParams, shot_index: int, seed: int = 0) -> ShotRecord:
    """Sample and simulate shot ``shot_index`` of the stream keyed by ``seed``."""
    sample = sample_faults(circuit, params, make_rng(seed, shot_index))
    return record_from_faults(circuit, sample)


def run_batch(circuit: Circuit, params: NoiseParams, shots: int, master_seed: int):
    """Stream ``shots`` records; shot ``i`` depends only on ``(master_seed, i)``."""
    for i in range(shots):
        yield run_shot(circuit, params, i, master_seed)


# ---------------------------------------------------------------- code capacity

def code_capacity_z_checks(layout: SurfaceCodeLayout) -> np.ndarray:
    """Z-stabilizer parity-check matrix (n_z x n_data) as uint8."""
    H = np.zeros((len(layout.z_stabilizers), layout.n_data), dtype=np.uint8)
    for s, supp in enumerate(layout.z_stabilizers):
        H[s, list(supp)] = 1
    return H


def code_capacity_shot(layout: SurfaceCodeLayout, rng: np.random.Generator,
                       erasure_rate: float = 0.0, pauli_rate: float = 0.0) -> ShotRecord:
    """One perfect round with i.i.d. data-qubit noise.

    An erased qubit receives a uniformly random single-qubit Pauli (identity
    included), so its X part is flipped with probability 1/2. Un-erased qubits
    see a uniform Pauli channel of rate ``pauli_rate``.
    """
    n = layout.n_data
    erased = rng.random(n) < erasure_rate
    x_err = np.where(erased, rng.random(n) < 0.5, rng.random(n) < 2.0 * pauli_rate / 3.0)
    return code_capacity_record(layout, x_err, np.flatnonzero(erased))


def code_capacity_record(layout: SurfaceCodeLayout, x_errors, erased_qubits=()) -> ShotRecord:
    x_err = np.asarray(x_errors, dtype=np.uint8)
    H = code_capacity_z_checks(layout)
    syndrome = (H @ x_err) % 2
    logical = int(x_err[list(layout.logical_z)].sum() % 2)
    return ShotRecord(
        detection_events=syndrome.reshape(1, -1).astype(np.uint8),
        x_detection_events=np.zeros((0, len(layout.x_stabilizers)), dtype=np.uint8),
        logical_flip=logical,
        erased_qubits=tuple(int(q) for q in erased_qubits),
    )


# ------------------------------------------------------------------ fault table

@dataclass
class FaultTable:
    """Every X-type single-fault mechanism of a circuit.

    Mechanism classes: ``0`` one-qubit location (prepare/idle) carrying X,
    ``1`` CNOT location with one of :data:`CNOT_X_PATTERNS`, ``2`` flipped
    Z-basis measurement. ``signatures`` is a CSR matrix (mechanisms x
    detectors) and ``logical`` the logical-Z flip of each mechanism.
    """
    circuit: Circuit
    n_detectors: int
    mech_class: np.ndarray
    mech_location: list
    mech_pattern: np.ndarray
    signatures: sp.csr_matrix
    logical: np.ndarray
    cnot_locations: list
    cnot_index: dict
    # mechanism ids grouped for sampling
    one_qubit: np.ndarray = field(repr=False, default=None)
    measurement: np.ndarray = field(repr=False, default=None)
    cnot_mechs: np.ndarray = field(repr=False, default=None)   # (n_cnot, 3)

    def detector_sets(self) -> list[tuple[int, ...]]:
        S = self.signatures
        return [tuple(S.indices[S.indptr[m]:S.indptr[m + 1]].tolist()) for m in range(S.shape[0])]

    def detector_coords(self, det: int) -> tuple[int, int]:
        """(round, z-stabilizer index) of detector ``det``."""
        n_z = len(self.circuit.layout.z_stabilizers)
        return divmod(det, n_z)


@functools.lru_cache(maxsize=16)
def _fault_table_cached(distance: int, rounds: int) -> FaultTable:
    return _build_fault_table(syndrome_circuit(build_layout(distance), rounds))


def fault_table(circuit: Circuit) -> FaultTable:
    return _fault_table_cached(circuit.layout.distance, circuit.rounds)


def _build_fault_table(circuit: Circuit) -> FaultTable:
    cls, locs, pats = [], [], []
    inj_f, inj_q, inj_t = [], [], []
    flip_f, flip_i, flip_t = [], [], []
    cnot_locations = []
    for t, step in enumerate(circuit.timesteps):
        if not step.noisy:
            continue
        for i, op in enumerate(step.ops):
            if op.kind == "cnot":
                cnot_locations.append((t, i))
                for k, (xc, xt) in enumerate(CNOT_X_PATTERNS):
                    f = len(cls)
                    cls.append(1)
                    locs.append((t, i))
                    pats.append(k)
                    for q, b in ((op.qubits[0], xc), (op.qubits[1], xt)):
                        if b:
                            inj_f.append(f)
                            inj_q.append(q)
                            inj_t.append(t)
            elif op.kind == "measure":
                if op.basis == "Z":
                    f = len(cls)
                    cls.append(2)
                    locs.append((t, i))
                    pats.append(-1)
                    flip_f.append(f)
                    flip_i.append(i)
                    flip_t.append(t)
            else:
                f = len(cls)
                cls.append(0)
                locs.append((t, i))
                pats.append(-1)
                inj_f.append(f)
                inj_q.append(op.qubits[0])
                inj_t.append(t)

    n_mech = len(cls)
    paulis, flips = {}, {}
    inj_t = np.array(inj_t)
    inj_f = np.array(inj_f, dtype=np.intp)
    inj_q = np.array(inj_q, dtype=np.intp)
    for t in np.unique(inj_t):
        sel = inj_t == t
        ones = np.ones(sel.sum(), dtype=np.intp)
        paulis[int(t)] = (inj_f[sel], inj_q[sel], ones, 0 * ones)
    flip_t = np.array(flip_t)
    flip_f = np.array(flip_f, dtype=np.intp)
    flip_i = np.array(flip_i, dtype=np.intp)
    for t in np.unique(flip_t):
        sel = flip_t == t
        flips[int(t)] = (flip_f[sel], flip_i[sel])

    z_meas, x_meas, frame = propagate(circuit, n_mech, paulis, flips)
    z_events, _ = _events(z_meas, x_meas)
    n_det = z_events.shape[0] * z_events.shape[1]
    ev = z_events.reshape(n_det, n_mech).T
    signatures = sp.csr_matrix(ev.astype(np.uint8))
    signatures.sort_indices()
    logical = np.bitwise_xor.reduce(frame.x[list(circuit.layout.logical_z)].astype(np.uint8), axis=0)

    cls = np.array(cls, dtype=np.int8)
    table = FaultTable(
        circuit=circuit, n_detectors=n_det, mech_class=cls, mech_location=locs,
        mech_pattern=np.array(pats, dtype=np.int8), signatures=signatures,
        logical=logical.astype(np.uint8), cnot_locations=cnot_locations,
        cnot_index={loc: k for k, loc in enumerate(cnot_locations)},
    )
    table.one_qubit = np.flatnonzero(cls == 0)
    table.measurement = np.flatnonzero(cls == 2)
    table.cnot_mechs = np.flatnonzero(cls == 1).reshape(-1, 3)
    return table


# --------------------------------------------------------------- fast sampling

def _bernoulli_positions(n_total: int, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of successes among ``n_total`` i.i.d. Bernoulli trials."""
    if prob <= 0.0 or n_total == 0:
        return np.zeros(0, dtype=np.int64)
    if prob >= 0.2:
        return np.flatnonzero(rng.random(n_total) < prob)
    out = []
    pos = -1
    expected = n_total * prob
    while True:
        k = int(expected + 5.0 * np.sqrt(expected) + 16)
        gaps = rng.geometric(prob, size=k)
        hits = pos + np.cumsum(gaps)
        out.append(hits[hits < n_total])
        if hits[-1] >= n_total:
            break
        pos = hits[-1]
    return np.concatenate(out)


def sample_syndromes(table: FaultTable, params: NoiseParams, n_shots: int,
                     rng: np.random.Generator, erased=None):
    """Batched X-sector sampling straight from the fault table.

    Equivalent in distribution to :func:`run_shot` restricted to the
    Z-detectors and logical Z, but vectorized over shots.

    Parameters
    ----------
    erased : array_like of bool, optional
        Erasure flag per CNOT location, shared by all ``n_shots`` shots (one
        erasure realization). Ignored outside the erasure scheme.

    Returns
    -------
    syndromes : ndarray, uint8, shape (n_shots, n_detectors)
    logical : ndarray, uint8, shape (n_shots,)
    """
    params = effective_params(params)
    p = params.p
    rows, mechs = [], []

    def add_group(ids, prob, choices=None):
        n = len(ids)
        pos = _bernoulli_positions(n_shots * n, prob, rng)
        if not pos.size:
            return
        shot, unit = np.divmod(pos, n)
        if choices is None:
            m = ids[unit]
        else:
            m = ids[unit, rng.integers(0, choices, size=unit.size)]
        rows.append(shot)
        mechs.append(m)

    add_group(table.one_qubit, 2.0 * p / 3.0)
    add_group(table.measurement, params.p_m)
    cnots = table.cnot_mechs
    p_cnot = params.cnot_pauli_rate
    if params.scheme == "erasure" and erased is not None and np.any(erased):
        erased = np.asarray(erased, dtype=bool)
        add_group(cnots[~erased], 12.0 * p_cnot / 15.0, 3)
        add_group(cnots[erased], 0.75, 3)
    else:
        add_group(cnots, 12.0 * p_cnot / 15.0, 3)

    n_mech = table.signatures.shape[0]
    if rows:
        r = np.concatenate(rows)
        m = np.concatenate(mechs)
        F = sp.csr_matrix((np.ones(r.size, dtype=np.int32), (r, m)), shape=(n_shots, n_mech))
        synd = (F @ table.signatures.astype(np.int32)).toarray() & 1
        logical = (F @ table.logical.astype(np.int32)) & 1
    else:
        synd = np.zeros((n_shots, table.n_detectors), dtype=np.int32)
        logical = np.zeros(n_shots, dtype=np.int32)
    return synd.astype(np.uint8), np.asarray(logical, dtype=np.uint8).ravel()


def sample_erasures(table: FaultTable, e: float, rng: np.random.Generator) -> np.ndarray:
    """Erasure flags for every noisy CNOT location."""
    return rng.random(len(table.cnot_locations)) < e


# ---------------------------------------------------------------- binary dump

_DUMP_MAGIC = b"EQSHOT1\0"


def dump_shots(records, circuit: Circuit, path) -> int:
    """Write fixed-length binary shot records; returns the number written.

    Each record packs (Z detection events, erasure flag per noisy CNOT,
    logical flip) into ``ceil(n_bits / 8)`` bytes. The header stores the
    distance, the number of rounds and the record length in bytes.
    """
    table = fault_table(circuit)
    n_bits = table.n_detectors + len(table.cnot_locations) + 1
    rec_len = (n_bits + 7) // 8
    count = 0
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC + struct.pack("<III", circuit.layout.distance, circuit.rounds, rec_len))
        for rec in records:
            bits = np.zeros(n_bits, dtype=np.uint8)
            bits[:table.n_detectors] = rec.detection_events.ravel()
            for loc in rec.erased_cnots:
                bits[table.n_detectors + table.cnot_index[tuple(loc)]] = 1
            bits[-1] = rec.logical_flip
            fh.write(np.packbits(bits).tobytes())
            count += 1
    return count


def load_shots(path):
    """Read a shot dump; returns ``(distance, rounds, events, erased, logical)``."""
    with open(path, "rb") as fh:
        head = fh.read(len(_DUMP_MAGIC) + 12)
        if head[:len(_DUMP_MAGIC)] != _DUMP_MAGIC:
            raise ValueError(f"{path}: not a shot dump")
        d, rounds, rec_len = struct.unpack("<III", head[len(_DUMP_MAGIC):])
        raw = np.frombuffer(fh.read(), dtype=np.uint8)
    table = fault_table(syndrome_circuit(build_layout(d), rounds))
    n_bits = table.n_detectors + len(table.cnot_locations) + 1
    bits = np.unpackbits(raw.reshape(-1, rec_len), axis=1)[:, :n_bits]
    return d, rounds, bits[:, :table.n_detectors], bits[:, table.n_detectors:-1].astype(bool), bits[:, -1]
