"""Zero-temperature side computed exactly in max-plus / min-plus algebra.

For a potential of depth <= k+1 the de Bruijn graph on depth-k states carries
the whole problem: the maximizing value is the maximum cycle mean, a
calibrated subaction is a max-plus eigenvector, the Mather set is the critical
graph, and the deviation function away from it is a min-plus shortest path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .potential import LocallyConstantPotential
from .shift_space import EPPoint, EdgeStructure, ShiftSpace, edge_structure, point_edges, state_of

# Relaxations only accept improvements larger than this (times the weight scale).
TIE_EPS = 1e-15
# Karp keeps the full (n+1) x n table below this many entries.
_KARP_TABLE_LIMIT = 4_000_000


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    edges: EdgeStructure
    weights: np.ndarray

    @property
    def space(self) -> ShiftSpace:
        return self.edges.space

    @property
    def depth(self) -> int:
        return self.edges.depth

    @property
    def n_states(self) -> int:
        return self.edges.n_states

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.weights))))


def build_digraph(f: LocallyConstantPotential, k: int) -> WeightedDigraph:
    if f.depth > k + 1:
        raise ValueError(f"potential depth {f.depth} exceeds k+1 = {k + 1}")
    es = edge_structure(f.space, k)
    weights = f.values_on(es.words)
    weights.setflags(write=False)
    return WeightedDigraph(es, weights)


def digraph_from_weights(edges: EdgeStructure, weights: np.ndarray) -> WeightedDigraph:
    weights = np.array(weights, dtype=float)
    if weights.shape != (edges.n_edges,):
        raise ValueError("one weight per edge required")
    weights.setflags(write=False)
    return WeightedDigraph(edges, weights)


def _segment_max_into(es: EdgeStructure, cand: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(cand[es.by_target], es.target_starts)


def _segment_min_out(es: EdgeStructure, cand: np.ndarray) -> np.ndarray:
    return np.minimum.reduceat(cand[es.by_source], es.source_starts)


def _argmax_into(es: EdgeStructure, cand: np.ndarray, best: np.ndarray) -> np.ndarray:
    """Lowest edge id attaining the segment maximum at each target."""
    sorted_ids = es.by_target
    hit = cand[sorted_ids] == best[es.tgt[sorted_ids]]
    ids = np.where(hit, sorted_ids, np.iinfo(np.int64).max)
    return np.minimum.reduceat(ids, es.target_starts)


def _walk_cycles(vertices: Sequence[int], edges: Sequence[int]):
    """Split a walk into the simple cycles it contains (stack decomposition)."""
    stack_v = [vertices[0]]
    stack_e = []
    pos = {vertices[0]: 0}
    for v, e in zip(vertices[1:], edges):
        stack_e.append(e)
        if v in pos:
            i = pos[v]
            yield stack_e[i:]
            for u in stack_v[i + 1:]:
                del pos[u]
            del stack_v[i + 1:]
            del stack_e[i:]
        else:
            pos[v] = len(stack_v)
            stack_v.append(v)


def max_cycle_mean(G: WeightedDigraph) -> float:
    """Maximum mean edge weight over the cycles of ``G`` (Karp).

    On small graphs the optimal cycle is recovered from the predecessor walk
    and its mean is returned as an exactly rounded sum over its edges.
    """
    es, w = G.edges, G.weights
    n = es.n_states
    if (n + 1) * n > _KARP_TABLE_LIMIT:
        return _karp_lean(G)
    D = np.empty((n + 1, n))
    pred = np.empty((n + 1, n), dtype=np.int64)
    D[0] = 0.0
    for j in range(1, n + 1):
        cand = D[j - 1][es.src] + w
        D[j] = _segment_max_into(es, cand)
        pred[j] = _argmax_into(es, cand, D[j])
    with np.errstate(invalid="ignore"):
        ratios = (D[n][None, :] - D[:n]) / (n - np.arange(n))[:, None]
    karp = ratios.min(axis=0)
    v = int(np.argmax(karp))
    verts, path = [v], []
    for j in range(n, 0, -1):
        e = int(pred[j][verts[-1]])
        path.append(e)
        verts.append(int(es.src[e]))
    verts.reverse()
    path.reverse()
    means = [math.fsum(w[c]) / len(c) for c in _walk_cycles(verts, path)]
    return max(means)


def _karp_lean(G: WeightedDigraph) -> float:
    # Two passes: the first finds D_n, the second replays D_j and keeps the
    # running minimum of (D_n - D_j) / (n - j), using O(n) memory.
    es, w = G.edges, G.weights
    n = es.n_states
    D = np.zeros(n)
    for _ in range(n):
        D = _segment_max_into(es, D[es.src] + w)
    Dn = D
    best = np.full(n, np.inf)
    D = np.zeros(n)
    for j in range(n):
        best = np.minimum(best, (Dn - D) / (n - j))
        D = _segment_max_into(es, D[es.src] + w)
    return float(best.max())


@dataclass(frozen=True, eq=False)
class SubactionTable:
    """Maximizing value, subaction and R+ cocycle on a depth-k graph.

    ``r_plus[e] = -(w[e] + V[src] - V[tgt] - m)`` for tables built by the
    tropical solver; tables assembled from exact pointwise values (see
    ``from_edge_values``) store ``r_plus`` directly.
    """

    graph: WeightedDigraph
    m: float
    V: np.ndarray
    r_plus: np.ndarray
    critical: np.ndarray
    components: Tuple[Tuple[int, ...], ...]
    source: str = "tropical"

    @property
    def depth(self) -> int:
        return self.graph.depth

    @property
    def space(self) -> ShiftSpace:
        return self.graph.space

    @property
    def critical_states(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.critical))

    def calibration_residual(self) -> float:
        """``max_w |max over incoming e of (w + V(src) - V(w) - m)|``."""
        es = self.graph.edges
        cand = self.graph.weights + self.V[es.src] - self.V[es.tgt] - self.m
        return float(np.max(np.abs(_segment_max_into(es, cand))))

    def min_r_plus(self) -> float:
        return float(np.min(self.r_plus))

    def incoming_min_r_plus(self) -> np.ndarray:
        """Per state, the smallest R+ over incoming edges."""
        es = self.graph.edges
        return np.minimum.reduceat(self.r_plus[es.by_target], es.target_starts)

    def consistency_residual(self) -> float:
        """``max_e |r_plus - (V(tgt) - V(src) - w + m)|``; zero for tropical tables."""
        es = self.graph.edges
        implied = self.V[es.tgt] - self.V[es.src] - self.graph.weights + self.m
        return float(np.max(np.abs(self.r_plus - implied)))

    def component_of(self, state: int) -> Optional[int]:
        for i, comp in enumerate(self.components):
            if state in comp:
                return i
        return None

    def component_words(self) -> list:
        states = self.graph.edges.states
        return [[tuple(int(s) for s in states[i]) for i in comp] for comp in self.components]


def _relax_longest(G: WeightedDigraph, wp: np.ndarray, V: np.ndarray) -> np.ndarray:
    es = G.edges
    eps = TIE_EPS * G.scale
    for _ in range(4 * es.n_states + 8):
        cand = _segment_max_into(es, V[es.src] + wp)
        better = cand > V + eps
        if not better.any():
            break
        V = np.where(better, cand, V)
    return V


def _strong_components(n: int, src: np.ndarray, tgt: np.ndarray):
    """Nontrivial strongly connected components (size > 1 or carrying a self-loop)."""
    if len(src) == 0:
        return []
    adj = csr_matrix((np.ones(len(src)), (src, tgt)), shape=(n, n))
    _, labels = connected_components(adj, directed=True, connection="strong")
    loops = set(int(s) for s, t in zip(src, tgt) if s == t)
    groups: Dict[int, list] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    comps = []
    for members in groups.values():
        if len(members) > 1 or members[0] in loops:
            comps.append(tuple(members))
    return sorted(comps, key=lambda c: c[0])


def calibrated_subaction(G: WeightedDigraph, m: Optional[float] = None, tol: float = 1e-12) -> SubactionTable:
    """Critical-graph construction of a calibrated subaction.

    ``V(w) = max over critical u of the heaviest (w - m)-path from u to w``.
    """
    if m is None:
        m = max_cycle_mean(G)
    es = G.edges
    n = es.n_states
    wp = G.weights - m
    tight_tol = tol * G.scale
    # Any subsolution exposes the critical cycles as its tight cycles.
    V0 = _relax_longest(G, wp, np.zeros(n))
    r0 = V0[es.tgt] - V0[es.src] - wp
    tight = r0 <= tight_tol
    comps = _strong_components(n, es.src[tight], es.tgt[tight])
    critical = np.zeros(n, dtype=bool)
    for c in comps:
        critical[list(c)] = True
    V = np.where(critical, 0.0, -np.inf)
    V = _relax_longest(G, wp, V)
    r_plus = V[es.tgt] - V[es.src] - wp
    zero = critical[es.src] & critical[es.tgt] & (r_plus <= tight_tol)
    components = tuple(_strong_components(n, es.src[zero], es.tgt[zero]))
    for arr in (V, r_plus, critical):
        arr.setflags(write=False)
    return SubactionTable(G, float(m), V, r_plus, critical, components)


def solve(f: LocallyConstantPotential, k: int) -> SubactionTable:
    G = build_digraph(f, k)
    return calibrated_subaction(G, max_cycle_mean(G))


def from_edge_values(G: WeightedDigraph, V: np.ndarray, m: float, r_plus: np.ndarray,
                     tol: float = 1e-12, source: str = "walters") -> SubactionTable:
    """Table whose R+ values are supplied per edge (e.g. exact pointwise values).

    Critical states are those on cycles of zero R+.
    """
    es = G.edges
    V = np.array(V, dtype=float)
    r_plus = np.array(r_plus, dtype=float)
    zero = r_plus <= tol
    components = tuple(_strong_components(es.n_states, es.src[zero], es.tgt[zero]))
    critical = np.zeros(es.n_states, dtype=bool)
    for c in components:
        critical[list(c)] = True
    for arr in (V, r_plus, critical):
        arr.setflags(write=False)
    return SubactionTable(G, float(m), V, r_plus, critical, components, source)


def mather_states(table: SubactionTable) -> Tuple[Tuple[int, ...], ...]:
    return table.components


def r_plus_path(table: SubactionTable, p: EPPoint, n: int) -> float:
    """``R+^n(p)``: R+ summed over ``p, sigma p, ..., sigma^{n-1} p``."""
    if n <= 0:
        return 0.0
    ids = point_edges(table.space, table.depth, p, n)
    return math.fsum(table.r_plus[ids])


def _tail_cost(table: SubactionTable, p: EPPoint) -> float:
    ids = point_edges(table.space, table.depth, p, len(p.pre) + len(p.period))
    return math.fsum(table.r_plus[ids[len(p.pre):]])


def r_plus_infinity(table: SubactionTable, p: EPPoint, tol: float = 1e-12) -> float:
    if _tail_cost(table, p) > tol:
        return math.inf
    return r_plus_path(table, p, len(p.pre))


@dataclass(frozen=True, eq=False)
class DeviationTable:
    I_states: np.ndarray
    anchors: Tuple[float, ...]


def _anchor_list(table: SubactionTable, anchors: Mapping) -> Tuple[float, ...]:
    """Normalise anchors keyed by component index or by any state word in it."""
    out: Dict[int, float] = {}
    for key, val in anchors.items():
        if isinstance(key, (int, np.integer)):
            idx = int(key)
        else:
            idx = table.component_of(state_of(table.space, tuple(key)))
            if idx is None:
                raise ValueError(f"anchor state {key} is not in a Mather component")
        out[idx] = float(val)
    missing = [i for i in range(len(table.components)) if i not in out]
    if missing:
        raise ValueError(f"missing anchors for Mather components {missing}")
    return tuple(out[i] for i in range(len(table.components)))


def deviation_min_plus(table: SubactionTable, anchors: Mapping) -> DeviationTable:
    """``I(w) = min over components C of (cheapest R+ path from w into C) + anchor(C)``.

    Paths follow the orbit direction: state ``s`` steps to ``t`` along edge
    ``s -> t`` at cost ``R+`` of that edge.
    """
    values = _anchor_list(table, anchors)
    es = table.graph.edges
    cost = np.maximum(table.r_plus, 0.0)
    dist = np.full(es.n_states, np.inf)
    for comp, val in zip(table.components, values):
        dist[list(comp)] = np.minimum(dist[list(comp)], val)
    eps = TIE_EPS * table.graph.scale
    for _ in range(4 * es.n_states + 8):
        cand = _segment_min_out(es, cost + dist[es.tgt])
        better = cand < dist - eps
        if not better.any():
            break
        dist = np.where(better, cand, dist)
    dist.setflags(write=False)
    return DeviationTable(dist, values)


def deviation_at_point(table: SubactionTable, anchors: Mapping, p: EPPoint, tol: float = 1e-12):
    """``(I(p), I0(p))``: R+ over the preperiod plus the anchor of the periodic tail.

    ``I0`` is the value on the periodic tail; both are ``inf`` when the tail
    is not a zero-cost cycle.
    """
    values = _anchor_list(table, anchors)
    if _tail_cost(table, p) > tol:
        return math.inf, math.inf
    tail_state = state_of(table.space, p.tail().head(table.depth))
    comp = table.component_of(tail_state)
    if comp is None:
        raise ValueError(f"tail of {p} is a zero-cost cycle outside the Mather components")
    I0 = values[comp]
    return r_plus_path(table, p, len(p.pre)) + I0, I0
