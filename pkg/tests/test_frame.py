import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erasure_qec.frame import (CNOT_X_PATTERNS, code_capacity_record, code_capacity_shot, dump_shots,
                               fault_table, load_shots, record_from_faults, run_batch, run_shot,
                               sample_erasures, sample_syndromes)
from erasure_qec.layout import build_layout, syndrome_circuit
from erasure_qec.noise import FaultSample, NoiseParams, make_rng, sample_faults

_X = {"I": 0, "X": 1, "Y": 1, "Z": 0}


def test_zero_noise_trivial(circuit3):
    rec = run_shot(circuit3, NoiseParams(), 0, seed=4)
    assert not rec.detection_events.any() and not rec.x_detection_events.any()
    assert rec.logical_flip == 0
    assert rec.detection_events.shape == (4, 6)
    assert rec.x_detection_events.shape == (3, 6)


def _data_one_qubit_locations(circuit, min_round):
    n_data = circuit.layout.n_data
    for t, step in enumerate(circuit.timesteps):
        if not step.noisy or step.round < min_round:
            continue
        for i, op in enumerate(step.ops):
            if op.kind in ("idle", "prepare") and op.qubits[0] < n_data:
                yield (t, i)


def test_single_data_z_fault_gives_one_or_two_events(circuit3):
    lay = circuit3.layout
    for loc in _data_one_qubit_locations(circuit3, 1):
        rec = record_from_faults(circuit3, FaultSample(pauli_faults=[(loc, "Z")]))
        q = circuit3.op_at(loc).qubits[0]
        n_stabs = sum(q in s for s in lay.x_stabilizers)
        assert rec.x_detection_events.sum() == n_stabs in (1, 2)
        assert not rec.detection_events.any()


def test_single_data_x_fault_gives_one_or_two_events(circuit3):
    lay = circuit3.layout
    for loc in _data_one_qubit_locations(circuit3, 0):
        rec = record_from_faults(circuit3, FaultSample(pauli_faults=[(loc, "X")]))
        q = circuit3.op_at(loc).qubits[0]
        assert rec.detection_events.sum() == sum(q in s for s in lay.z_stabilizers)
        assert rec.logical_flip == int(q in lay.logical_z)


def test_measurement_flip_gives_consecutive_pair(circuit3):
    n_z = len(circuit3.layout.z_stabilizers)
    for loc in circuit3.locations("measure"):
        op = circuit3.op_at(loc)
        rec = record_from_faults(circuit3, FaultSample(flipped_measurements=[loc]))
        if op.basis == "X":
            assert not rec.detection_events.any()
            continue
        r = circuit3.timesteps[loc[0]].round
        s = op.qubits[0] - circuit3.layout.z_ancilla_qubit(0)
        events = set(map(tuple, np.argwhere(rec.detection_events)))
        assert events == {(r, s), (r + 1, s)}
        assert s < n_z and rec.logical_flip == 0


def _merge(a, b):
    used = {loc for loc, _ in a.pauli_faults} | set(a.erased_cnots) | set(a.flipped_measurements)
    b = FaultSample([f for f in b.pauli_faults if f[0] not in used], [],
                    [m for m in b.flipped_measurements if m not in used])
    return b, FaultSample(a.pauli_faults + b.pauli_faults, [], a.flipped_measurements + b.flipped_measurements)


@given(st.integers(0, 10_000), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_linearity(seed_a, seed_b):
    circ = syndrome_circuit(build_layout(3), 3)
    par = NoiseParams(p=0.02, p_m=0.02)
    a = sample_faults(circ, par, make_rng(seed_a, 0))
    b, both = _merge(a, sample_faults(circ, par, make_rng(seed_b, 1)))
    ra, rb, rab = (record_from_faults(circ, s) for s in (a, b, both))
    assert np.array_equal(ra.detection_events ^ rb.detection_events, rab.detection_events)
    assert np.array_equal(ra.x_detection_events ^ rb.x_detection_events, rab.x_detection_events)
    assert ra.logical_flip ^ rb.logical_flip == rab.logical_flip


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_css_separation(seed):
    circ = syndrome_circuit(build_layout(3), 2)
    s = sample_faults(circ, NoiseParams(p=0.05), make_rng(seed, 0))
    only_x = FaultSample([(loc, "".join("X" if _X[c] else "I" for c in pauli)) for loc, pauli in s.pauli_faults])
    only_z = FaultSample([(loc, "".join("Z" if c in "YZ" else "I" for c in pauli)) for loc, pauli in s.pauli_faults])
    assert not record_from_faults(circ, only_x).x_detection_events.any()
    rz = record_from_faults(circ, only_z)
    assert not rz.detection_events.any() and rz.logical_flip == 0


def _table_prediction(circ, sample):
    """Z-sector events implied by the fault table, by linearity."""
    table = fault_table(circ)
    index = {}
    for m, (cls, loc, pat) in enumerate(zip(table.mech_class, table.mech_location, table.mech_pattern)):
        index[(loc, int(pat))] = m
    S = table.signatures.toarray()
    events = np.zeros(table.n_detectors, dtype=np.uint8)
    logical = 0
    for loc, pauli in sample.pauli_faults:
        xs = tuple(_X[c] for c in pauli)
        if not any(xs):
            continue
        m = index[(loc, CNOT_X_PATTERNS.index(xs))] if len(xs) == 2 else index[(loc, -1)]
        events ^= S[m]
        logical ^= int(table.logical[m])
    for loc in sample.flipped_measurements:
        if (loc, -1) in index:
            events ^= S[index[(loc, -1)]]
    return events, logical


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_fault_table_matches_direct_propagation(seed):
    circ = syndrome_circuit(build_layout(3), 3)
    s = sample_faults(circ, NoiseParams(p=0.03, e=0.05), make_rng(seed, 0))
    rec = record_from_faults(circ, s)
    events, logical = _table_prediction(circ, s)
    assert np.array_equal(rec.detection_events.ravel(), events)
    assert rec.logical_flip == logical


def test_signatures_have_at_most_two_detectors():
    for d in (3, 5):
        table = fault_table(syndrome_circuit(build_layout(d), d))
        assert np.diff(table.signatures.indptr).max() <= 2


def test_batched_sampler_matches_shot_sampler_statistically():
    circ = syndrome_circuit(build_layout(3), 3)
    table = fault_table(circ)
    par = NoiseParams(p=0.01, e=0.05)
    n = 4000
    direct = np.array([run_shot(circ, par, i, seed=11).detection_events.sum() for i in range(n)])
    rng = make_rng(12, 0)
    batched = []
    for r in range(n // 100):
        erased = sample_erasures(table, par.e, rng)
        synd, _ = sample_syndromes(table, par, 100, rng, erased)
        batched.append(synd.sum(axis=1))
    batched = np.concatenate(batched)
    se = np.sqrt(direct.var() / n + batched.var() / n)
    assert abs(direct.mean() - batched.mean()) < 5 * se


def test_batched_sampler_zero_noise():
    table = fault_table(syndrome_circuit(build_layout(3), 3))
    synd, logical = sample_syndromes(table, NoiseParams(), 50, make_rng(0, 0))
    assert not synd.any() and not logical.any()


def test_run_batch_deterministic(circuit3):
    par = NoiseParams(p=0.01, e=0.02)
    a = list(run_batch(circuit3, par, 5, 9))
    b = list(run_batch(circuit3, par, 5, 9))
    c = list(run_batch(circuit3, par, 5, 10))
    assert list(run_batch(circuit3, par, 0, 9)) == []
    for x, y in zip(a, b):
        assert np.array_equal(x.detection_events, y.detection_events)
        assert x.erased_cnots == y.erased_cnots and x.logical_flip == y.logical_flip
    assert any(not np.array_equal(x.detection_events, y.detection_events) or x.erased_cnots != y.erased_cnots
               for x, y in zip(a, c))


def test_code_capacity_shot(layout3):
    rec = code_capacity_shot(layout3, make_rng(0, 0))
    assert not rec.detection_events.any() and rec.erased_qubits == ()
    rec = code_capacity_shot(layout3, make_rng(0, 1), erasure_rate=1.0)
    assert rec.erased_qubits == tuple(range(layout3.n_data))
    rec = code_capacity_record(layout3, np.eye(layout3.n_data, dtype=np.uint8)[0])
    assert rec.detection_events.sum() == 1 and rec.logical_flip == 1


def test_shot_dump_roundtrip(tmp_path, circuit3):
    recs = list(run_batch(circuit3, NoiseParams(p=0.02, e=0.05), 7, 3))
    path = tmp_path / "shots.bin"
    assert dump_shots(recs, circuit3, path) == 7
    d, rounds, events, erased, logical = load_shots(path)
    assert (d, rounds) == (3, 3)
    table = fault_table(circuit3)
    for k, rec in enumerate(recs):
        assert np.array_equal(events[k], rec.detection_events.ravel())
        assert logical[k] == rec.logical_flip
        assert [table.cnot_locations[i] for i in np.flatnonzero(erased[k])] == sorted(
            rec.erased_cnots, key=table.cnot_index.get)
    with pytest.raises(ValueError):
        (tmp_path / "junk").write_bytes(b"nope" * 10)
        load_shots(tmp_path / "junk")
