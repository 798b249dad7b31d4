"""Space-time decoding graph and minimum-weight perfect matching.

Nodes are the Z-sector detectors, indexed ``round * n_z + stabilizer``, plus
one boundary node with index ``n_detectors``. Every X-type fault mechanism of
the circuit triggers at most two detectors and so maps to one edge; the
probabilities of mechanisms sharing an edge are XOR-composed.

Edges whose base probability is zero (for example CNOT edges when ``p = 0``)
are kept as *dormant*: they take no part in matching unless an erasure
overlay activates them at weight 0.

Two matchers are provided. :func:`mwpm` is self-contained (Dijkstra over the
overlay, then a blossom matching on the defect graph with boundary copies)
and returns the full correction. :class:`FastDecoder` wraps PyMatching for
bulk Monte Carlo.
"""

from __future__ import annotations

import functools
import heapq
import json
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .frame import FaultTable, ShotRecord, code_capacity_z_checks, fault_table
from .layout import Circuit, ParameterError, SurfaceCodeLayout
from .noise import NoiseParams, effective_params

EDGE_CLASSES = ("data", "measurement", "cnot")


@dataclass
class _Structure:
    """Parameter-independent edge structure of a circuit's fault table."""
    u: np.ndarray
    v: np.ndarray
    logical: np.ndarray
    fault_class: list
    mech_edge: np.ndarray           # edge index of each mechanism (-1: no detector)
    cnot_edges: dict                 # CNOT location -> edge indices
    edge_cnots: list                 # edge -> frozenset of CNOT locations
    logical_conflicts: int


@functools.lru_cache(maxsize=16)
def _structure_cached(distance: int, rounds: int) -> _Structure:
    from .layout import build_layout, syndrome_circuit
    return _structure(fault_table(syndrome_circuit(build_layout(distance), rounds)))


def _structure(table: FaultTable) -> _Structure:
    n_det = table.n_detectors
    n_z = len(table.circuit.layout.z_stabilizers)
    S = table.signatures
    keys = {}
    u, v, logical, kinds, cnots = [], [], [], [], []
    mech_edge = np.full(S.shape[0], -1, dtype=np.intp)
    conflicts = 0
    for m in range(S.shape[0]):
        dets = S.indices[S.indptr[m]:S.indptr[m + 1]]
        if len(dets) == 0:
            continue
        if len(dets) > 2:
            raise ParameterError(f"mechanism {m} triggers {len(dets)} detectors; graph-like decomposition needed")
        a = int(dets[0])
        b = int(dets[1]) if len(dets) == 2 else n_det
        k = keys.get((a, b))
        if k is None:
            k = keys[(a, b)] = len(u)
            u.append(a)
            v.append(b)
            logical.append(int(table.logical[m]))
            kinds.append(set())
            cnots.append(set())
        elif logical[k] != int(table.logical[m]):
            conflicts += 1
        mech_edge[m] = k
        kinds[k].add(int(table.mech_class[m]))
        if table.mech_class[m] == 1:
            cnots[k].add(table.mech_location[m])

    fault_class = []
    for a, b, kind in zip(u, v, kinds):
        if b != n_det and a % n_z == b % n_z:
            fault_class.append("measurement")
        elif kind == {1}:
            fault_class.append("cnot")
        else:
            fault_class.append("data")
    cnot_edges = {}
    for k, locs in enumerate(cnots):
        for loc in locs:
            cnot_edges.setdefault(loc, []).append(k)
    return _Structure(
        u=np.array(u, dtype=np.intp), v=np.array(v, dtype=np.intp),
        logical=np.array(logical, dtype=np.uint8), fault_class=fault_class,
        mech_edge=mech_edge,
        cnot_edges={loc: np.array(ks, dtype=np.intp) for loc, ks in cnot_edges.items()},
        edge_cnots=[frozenset(c) for c in cnots], logical_conflicts=conflicts,
    )


def weight_from_probability(q):
    """Log-likelihood weight ``ln((1-q)/q)``; 0 at ``q >= 1/2``, inf at ``q = 0``."""
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        w = np.log1p(-np.minimum(q, 0.5)) - np.log(q)
    return np.where(q >= 0.5, 0.0, w)


@dataclass
class DecodingGraph:
    """Weighted matching graph of one sector.

    Attributes
    ----------
    u, v : ndarray
        Edge endpoints; ``v == boundary`` for boundary edges.
    probability, weight : ndarray
        Base XOR-composed probability and ``ln((1-q)/q)`` weight per edge.
    logical : ndarray
        1 where the edge crosses the logical operator support.
    fault_class : list of str
        ``data``, ``measurement`` or ``cnot``.
    erasure_edges : dict
        Erasure key (CNOT location, or data qubit for code capacity) to the
        edges it activates.
    """
    n_detectors: int
    u: np.ndarray
    v: np.ndarray
    probability: np.ndarray
    weight: np.ndarray
    logical: np.ndarray
    fault_class: list
    erasure_edges: dict
    edge_keys: list = field(default_factory=list)
    clamped: int = 0
    logical_conflicts: int = 0

    @property
    def boundary(self) -> int:
        return self.n_detectors

    @property
    def n_edges(self) -> int:
        return len(self.u)

    @property
    def active(self) -> np.ndarray:
        return np.isfinite(self.weight)

    def edges(self) -> list[tuple[int, int, float, float, int, str]]:
        """Active edges as ``(u, v, q, w, logical, class)``."""
        return [(int(self.u[k]), int(self.v[k]), float(self.probability[k]), float(self.weight[k]),
                 int(self.logical[k]), self.fault_class[k]) for k in np.flatnonzero(self.active)]

    def to_json(self) -> str:
        """Adjacency export: one entry per edge, dormant edges included."""
        rows = []
        for k in range(self.n_edges):
            rows.append({
                "u": int(self.u[k]), "v": int(self.v[k]),
                "probability": float(self.probability[k]),
                "weight": None if not np.isfinite(self.weight[k]) else float(self.weight[k]),
                "logical": int(self.logical[k]), "class": self.fault_class[k],
                "erasure_keys": sorted([list(x) if isinstance(x, tuple) else x for x in self.edge_keys[k]])
                if self.edge_keys else [],
            })
        return json.dumps({"n_detectors": self.n_detectors, "boundary": self.boundary, "edges": rows})


WEIGHTINGS = ("log", "uniform")


def build_graph(layout: SurfaceCodeLayout, circuit: Circuit, params: NoiseParams,
                weighting: str = "log") -> DecodingGraph:
    """Decoding graph of ``circuit`` for fixed ``params``.

    The graph is the same for every shot of a batch; per-shot erasures are
    applied through :func:`apply_erasure_weights`.

    Parameters
    ----------
    weighting : {"log", "uniform"}
        ``log`` gives each edge ``ln((1-q)/q)``. ``uniform`` gives every
        active edge weight 1 (erasure overlays still set 0), a
        noise-agnostic baseline.
    """
    if circuit.layout.distance != layout.distance:
        raise ParameterError("layout and circuit distances differ")
    if weighting not in WEIGHTINGS:
        raise ParameterError(f"weighting must be one of {WEIGHTINGS}")
    params = effective_params(params)
    table = fault_table(circuit)
    st = _structure_cached(layout.distance, circuit.rounds)
    p, p_cnot = params.p, params.cnot_pauli_rate
    rate = np.zeros(len(table.mech_class))
    rate[table.mech_class == 0] = 2.0 * p / 3.0
    rate[table.mech_class == 2] = params.p_m
    rate[table.mech_class == 1] = 4.0 * p_cnot / 15.0
    keep = st.mech_edge >= 0
    # 1 - 2 q_edge = prod (1 - 2 q_mech)
    prod = np.ones(len(st.u))
    np.multiply.at(prod, st.mech_edge[keep], 1.0 - 2.0 * rate[keep])
    q = 0.5 * (1.0 - prod)
    clamped = int(np.sum(q >= 0.5))
    if clamped:
        warnings.warn(f"{clamped} edges have probability >= 1/2; weights clamped to 0", RuntimeWarning)
    weight = weight_from_probability(q)
    if weighting == "uniform":
        weight = np.where(q > 0, 1.0, np.inf)
    return DecodingGraph(
        n_detectors=table.n_detectors, u=st.u, v=st.v, probability=q,
        weight=weight, logical=st.logical,
        fault_class=st.fault_class,
        erasure_edges=st.cnot_edges if params.scheme == "erasure" else {},
        edge_keys=st.edge_cnots, clamped=clamped, logical_conflicts=st.logical_conflicts,
    )


def build_code_capacity_graph(layout: SurfaceCodeLayout, pauli_rate: float = 0.0) -> DecodingGraph:
    """Single-round graph: one edge per data qubit between its Z stabilizers.

    With ``pauli_rate = 0`` all edges get unit weight, so the erasure-free
    decoder is plain minimum-distance matching.
    """
    H = code_capacity_z_checks(layout)
    n_z = H.shape[0]
    u, v = [], []
    for q in range(layout.n_data):
        dets = np.flatnonzero(H[:, q])
        u.append(int(dets[0]))
        v.append(int(dets[1]) if len(dets) == 2 else n_z)
    logical = np.zeros(layout.n_data, dtype=np.uint8)
    logical[list(layout.logical_z)] = 1
    if pauli_rate > 0:
        q = np.full(layout.n_data, 2.0 * pauli_rate / 3.0)
        w = weight_from_probability(q)
    else:
        q = np.zeros(layout.n_data)
        w = np.ones(layout.n_data)
    return DecodingGraph(
        n_detectors=n_z, u=np.array(u, dtype=np.intp), v=np.array(v, dtype=np.intp),
        probability=q, weight=w, logical=logical, fault_class=["data"] * layout.n_data,
        erasure_edges={q_: np.array([q_], dtype=np.intp) for q_ in range(layout.n_data)},
        edge_keys=[frozenset([q_]) for q_ in range(layout.n_data)],
    )


def apply_erasure_weights(graph: DecodingGraph, erased) -> np.ndarray:
    """Per-shot weight overlay: edges activated by any erased location get weight 0.

    Returns a fresh weight array; ``graph`` is not modified.
    """
    w = graph.weight.copy()
    for loc in erased:
        key = tuple(loc) if isinstance(loc, (list, tuple)) else int(loc)
        try:
            w[graph.erasure_edges[key]] = 0.0
        except KeyError:
            raise ParameterError(f"unknown erasure location {loc!r}") from None
    return w


def erased_keys(record: ShotRecord):
    return record.erased_cnots if record.erased_cnots else record.erased_qubits


# ---------------------------------------------------------------- matching

@dataclass
class Correction:
    """Matched defect pairs (partner ``boundary`` for boundary matches)."""
    pairs: tuple
    logical: int
    weight: float
    boundary: int


def _adjacency(graph: DecodingGraph, weights):
    adj = [[] for _ in range(graph.n_detectors + 1)]
    for k in np.flatnonzero(np.isfinite(weights)):
        a, b, w, l = int(graph.u[k]), int(graph.v[k]), float(weights[k]), int(graph.logical[k])
        adj[a].append((b, w, l))
        adj[b].append((a, w, l))
    return adj


def _dijkstra(adj, source: int, boundary: int):
    """Distances and logical parities of shortest paths from ``source``.

    The boundary node is a sink: paths never continue through it. Ties are
    broken toward the lower node index.
    """
    dist = {source: 0.0}
    parity = {source: 0}
    done = set()
    heap = [(0.0, source)]
    while heap:
        d, a = heapq.heappop(heap)
        if a in done:
            continue
        done.add(a)
        if a == boundary and a != source:
            continue
        for b, w, l in adj[a]:
            nd = d + w
            if b not in dist or nd < dist[b]:
                dist[b] = nd
                parity[b] = parity[a] ^ l
                heapq.heappush(heap, (nd, b))
    return dist, parity


def defect_distances(graph: DecodingGraph, defects, weights=None):
    """Shortest-path weight and logical parity between defects and to the boundary.

    Returns ``(D, P, Db, Pb)``: pairwise matrices and boundary vectors; ``inf``
    marks unreachable pairs.
    """
    weights = graph.weight if weights is None else weights
    adj = _adjacency(graph, weights)
    n = len(defects)
    D = np.full((n, n), np.inf)
    P = np.zeros((n, n), dtype=np.uint8)
    Db = np.full(n, np.inf)
    Pb = np.zeros(n, dtype=np.uint8)
    index = {int(x): i for i, x in enumerate(defects)}
    for i, s in enumerate(defects):
        dist, par = _dijkstra(adj, int(s), graph.boundary)
        for node, dd in dist.items():
            j = index.get(node)
            if j is not None:
                D[i, j] = dd
                P[i, j] = par[node]
        if graph.boundary in dist:
            Db[i] = dist[graph.boundary]
            Pb[i] = par[graph.boundary]
    return D, P, Db, Pb


def mwpm(graph: DecodingGraph, defects, weights=None) -> Correction:
    """Minimum-weight perfect matching of ``defects`` with an open boundary.

    Each defect ``i`` gets a boundary copy ``b_i``; edges ``i-j`` and
    ``i-b_i`` carry shortest-path weights and boundary copies are joined to
    each other at zero cost, so any number of defects may end on the boundary.
    """
    defects = sorted(int(x) for x in defects)
    n = len(defects)
    if n == 0:
        return Correction((), 0, 0.0, graph.boundary)
    D, P, Db, Pb = defect_distances(graph, defects, weights)
    finite = np.concatenate([D[np.isfinite(D)], Db[np.isfinite(Db)]])
    big = 1.0 + (finite.max() if finite.size else 0.0) * 2 * n
    G = nx.Graph()
    for i in range(n):
        if np.isfinite(Db[i]):
            G.add_edge(i, n + i, weight=big - Db[i])
        for j in range(i + 1, n):
            if np.isfinite(D[i, j]):
                G.add_edge(i, j, weight=big - D[i, j])
            G.add_edge(n + i, n + j, weight=big)
    matching = nx.max_weight_matching(G, maxcardinality=True)
    pairs, logical, total = [], 0, 0.0
    for a, b in matching:
        a, b = min(a, b), max(a, b)
        if a >= n:
            continue
        if b >= n:
            if b != n + a:
                raise RuntimeError("malformed boundary match")
            pairs.append((defects[a], graph.boundary))
            logical ^= int(Pb[a])
            total += Db[a]
        else:
            pairs.append((defects[a], defects[b]))
            logical ^= int(P[a, b])
            total += D[a, b]
    if 2 * len([p for p in pairs if p[1] != graph.boundary]) + \
            len([p for p in pairs if p[1] == graph.boundary]) != n:
        raise RuntimeError("no perfect matching of the defects exists")
    return Correction(tuple(sorted(pairs)), logical, float(total), graph.boundary)


def brute_force_matching(D, Db) -> float:
    """Exact minimum over all boundary-augmented matchings (small inputs only)."""
    n = len(Db)

    @functools.lru_cache(maxsize=None)
    def best(mask: int) -> float:
        if mask == 0:
            return 0.0
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        out = Db[i] + best(rest)
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            out = min(out, D[i, j] + best(rest & ~(1 << j)))
        return out

    return best((1 << n) - 1)


def decode_shot(graph: DecodingGraph, record: ShotRecord) -> bool:
    """True when the correction's logical parity equals the shot's logical flip."""
    weights = apply_erasure_weights(graph, erased_keys(record))
    corr = mwpm(graph, record.defects, weights)
    return corr.logical == record.logical_flip


# ------------------------------------------------------------ bulk decoding

class FastDecoder:
    """PyMatching-backed decoder for batches sharing one erasure overlay."""

    def __init__(self, graph: DecodingGraph):
        self.graph = graph
        n_e = graph.n_edges
        cols = np.arange(n_e)
        rows_u = graph.u
        H_u = sp.csc_matrix((np.ones(n_e, dtype=np.uint8), (rows_u, cols)), shape=(graph.n_detectors + 1, n_e))
        inner = graph.v != graph.boundary
        H_v = sp.csc_matrix((np.ones(inner.sum(), dtype=np.uint8), (graph.v[inner], cols[inner])),
                            shape=(graph.n_detectors + 1, n_e))
        self._H = (H_u + H_v)[:graph.n_detectors].tocsc()
        self._L = sp.csc_matrix(graph.logical.reshape(1, -1).astype(np.uint8))
        self._base = self._matcher(graph.weight)

    def _matcher(self, weights):
        import pymatching
        keep = np.flatnonzero(np.isfinite(weights))
        return pymatching.Matching.from_check_matrix(
            self._H[:, keep], weights=np.asarray(weights[keep], dtype=float),
            faults_matrix=self._L[:, keep], use_virtual_boundary_node=True)

    def matcher_for(self, erased=()):
        if len(erased) == 0:
            return self._base
        return self._matcher(apply_erasure_weights(self.graph, erased))

    def decode_batch(self, syndromes, erased=()) -> np.ndarray:
        """Predicted logical flips, one per syndrome row."""
        m = self.matcher_for(erased)
        return m.decode_batch(np.asarray(syndromes, dtype=np.uint8)).reshape(-1).astype(np.uint8)
