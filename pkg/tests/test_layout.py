import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erasure_qec.layout import ParameterError, build_layout, syndrome_circuit


def check_matrix(layout, stabs):
    H = np.zeros((len(stabs), layout.n_data), dtype=np.uint8)
    for i, s in enumerate(stabs):
        H[i, list(s)] = 1
    return H


def gf2_rank(M):
    M = M.copy() % 2
    rank = 0
    for col in range(M.shape[1]):
        piv = [r for r in range(rank, M.shape[0]) if M[r, col]]
        if not piv:
            continue
        M[[rank, piv[0]]] = M[[piv[0], rank]]
        for r in range(M.shape[0]):
            if r != rank and M[r, col]:
                M[r] ^= M[rank]
        rank += 1
    return rank


@pytest.mark.parametrize("d", [3, 5, 7, 9])
def test_counts(d):
    lay = build_layout(d)
    assert lay.n_data == d * d + (d - 1) ** 2
    assert len(lay.x_stabilizers) == len(lay.z_stabilizers) == d * (d - 1)
    assert len(lay.logical_x) == len(lay.logical_z) == d


@pytest.mark.parametrize("bad", [1, 2, 4, 0, -3, 3.0, True, "5"])
def test_rejects_bad_distance(bad):
    with pytest.raises(ParameterError):
        build_layout(bad)


@pytest.mark.parametrize("d", [3, 5, 7])
def test_stabilizers_commute_and_logicals(d):
    lay = build_layout(d)
    Hx = check_matrix(lay, lay.x_stabilizers)
    Hz = check_matrix(lay, lay.z_stabilizers)
    assert not ((Hx.astype(int) @ Hz.T.astype(int)) % 2).any()
    lx = np.zeros(lay.n_data, dtype=np.uint8)
    lx[list(lay.logical_x)] = 1
    lz = np.zeros(lay.n_data, dtype=np.uint8)
    lz[list(lay.logical_z)] = 1
    assert not ((Hz.astype(int) @ lx) % 2).any()
    assert not ((Hx.astype(int) @ lz) % 2).any()
    assert int(lx @ lz) % 2 == 1
    # independent generators: one logical qubit
    assert gf2_rank(Hx) + gf2_rank(Hz) == lay.n_data - 1


def test_d3_minimum_weight_logical_is_3():
    lay = build_layout(3)
    Hz = check_matrix(lay, lay.z_stabilizers).astype(int)
    lz = np.zeros(lay.n_data, dtype=int)
    lz[list(lay.logical_z)] = 1
    best = None
    for w in range(1, 4):
        for supp in itertools.combinations(range(lay.n_data), w):
            x = np.zeros(lay.n_data, dtype=int)
            x[list(supp)] = 1
            if not (Hz @ x % 2).any() and (x @ lz) % 2:
                best = w
                break
        if best:
            break
    assert best == 3


def test_schedule_each_qubit_once_per_layer():
    lay = build_layout(5)
    for layer in lay.cnot_schedule:
        qubits = [q for pair in layer for q in pair]
        assert len(qubits) == len(set(qubits))
    pairs = sorted(p for layer in lay.cnot_schedule for p in layer)
    expected = sorted((lay.x_ancilla_qubit(i), q) for i, s in enumerate(lay.x_stabilizers) for q in s)
    expected += sorted((lay.z_ancilla_qubit(i), q) for i, s in enumerate(lay.z_stabilizers) for q in s)
    assert pairs == sorted(expected)


def test_json_dump_roundtrips():
    lay = build_layout(3)
    data = json.loads(lay.to_json())
    assert data["distance"] == 3
    assert len(data["cnot_schedule"]) == 4


def test_circuit_every_qubit_acted_on_each_timestep():
    lay = build_layout(3)
    circ = syndrome_circuit(lay, 2)
    assert len(circ.timesteps) == 6 * 3
    for step in circ.timesteps:
        qubits = [q for op in step.ops for q in op.qubits]
        assert sorted(qubits) == list(range(lay.n_qubits))
    assert [s.noisy for s in circ.timesteps] == [True] * 12 + [False] * 6


@given(st.integers(1, 4))
@settings(max_examples=4, deadline=None)
def test_cnot_count_scales_with_rounds(r):
    lay = build_layout(3)
    circ = syndrome_circuit(lay, r)
    per_round = sum(len(s) for s in lay.cnot_schedule)
    assert len(circ.cnot_locations()) == per_round * r


def test_rounds_validated():
    with pytest.raises(ParameterError):
        syndrome_circuit(build_layout(3), 0)
