"""Failure de-duplication and failure-mode clustering.

Two representations of a failure trace are used. The descriptive vector is a
low-level geometric embedding of the last few steps before the crash and
drives de-duplication. The event vector is a sequence of semantic event codes
and drives clustering: pairwise Levenshtein distances, a weighted kNN graph
and Leiden community detection.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import igraph
import leidenalg
import numpy as np
from rapidfuzz.distance import Levenshtein
from rapidfuzz.process import cdist
from scipy.spatial.distance import cdist as euclidean_cdist
from sklearn.metrics import adjusted_rand_score

from .errors import ConfigurationError, ContractError
from .sim import Trace
from .validity import SafeDistanceParams, eventually_ahead, evaluate_predicates

DV_STEPS = 8
DV_SCALES = (20.0, 4.0, 10.0)  # dx [m], dy [m], dv [m/s]
DEFAULT_S_TH = 0.5
DEFAULT_K = 10
COLLISION_CODE = 999

EVENT_NAMES = {
    0: "None",
    1: "CutInSideEgo",
    2: "CutInEgo",
    3: "CutOutEgo",
    4: "CutInSideAdv",
    5: "CutOutAdv",
    6: "CutInAdv",
    7: "BrakeSameLaneAdv",
    8: "BrakeDifferentLaneAdv",
    COLLISION_CODE: "Collision",
}


# ---------------------------------------------------------------- de-duplication

def descriptive_vector(trace: Trace, n: int = DV_STEPS, scales=DV_SCALES) -> np.ndarray:
    """Normalized (dx, dy, dv) of adversary relative to ego over the last ``n`` records.

    Short traces are front-padded with their first record so the vector is always ``3 n`` long.
    """
    if not trace.collided:
        raise ContractError("descriptive vectors are defined for collision traces only")
    steps = list(trace.steps[-n:])
    steps = [steps[0]] * (n - len(steps)) + steps
    rel = np.array([(r.adv.x - r.ego.x, r.adv.y - r.ego.y, r.adv.vx - r.ego.vx) for r in steps])
    return (rel / np.asarray(scales, dtype=float)).ravel()


def is_duplicate(v1, v2, s_th: float = DEFAULT_S_TH) -> bool:
    return bool(np.linalg.norm(np.asarray(v1, float) - np.asarray(v2, float)) < s_th)


def dedup_vectors(vectors, s_th: float = DEFAULT_S_TH) -> list[int]:
    """Greedy first-seen de-duplication; returns indices of the kept vectors."""
    kept: list[int] = []
    kept_vecs: list[np.ndarray] = []
    for i, v in enumerate(vectors):
        v = np.asarray(v, float)
        if kept_vecs and np.min(np.linalg.norm(np.asarray(kept_vecs) - v, axis=1)) < s_th:
            continue
        kept.append(i)
        kept_vecs.append(v)
    return kept


def dedup_pool(records, s_th: float = DEFAULT_S_TH) -> list:
    """Drop records whose descriptive vector duplicates an earlier kept record."""
    records = list(records)
    keep = dedup_vectors([descriptive_vector(r.trace) for r in records], s_th)
    return [records[i] for i in keep]


def unique_curve(records, budget: int, s_th: float = DEFAULT_S_TH) -> np.ndarray:
    """Cumulative count of unique failures by budget position (length ``budget``).

    ``records`` must be ordered by discovery; ``record.index`` is the 0-based
    budget position at which each was found.
    """
    records = list(records)
    keep = dedup_vectors([descriptive_vector(r.trace) for r in records], s_th)
    counts = np.zeros(budget, dtype=int)
    for i in keep:
        idx = records[i].index
        if not 0 <= idx < budget:
            raise ContractError(f"record index {idx} outside budget {budget}")
        counts[idx] += 1
    return np.cumsum(counts)


def calibrate_threshold(distances, similar, grid=None) -> tuple[float, float]:
    """Grid-search the S_th that best reproduces similar/distinct pair labels.

    Returns ``(s_th, accuracy)``; ties go to the smallest threshold.
    """
    d = np.asarray(distances, float)
    y = np.asarray(similar, bool)
    if d.shape != y.shape or d.size == 0:
        raise ContractError("distances and labels must be non-empty and aligned")
    grid = np.linspace(0.0, float(d.max()) * 1.05 + 1e-9, 401) if grid is None else np.asarray(grid, float)
    acc = np.array([np.mean((d < s) == y) for s in grid])
    best = int(np.argmax(acc))
    return float(grid[best]), float(acc[best])


# ---------------------------------------------------------------- event vectors

def extract_events(trace: Trace, p: SafeDistanceParams = SafeDistanceParams()) -> list[int]:
    """Per-step semantic event codes, with 999 at the collision step.

    Lane-change events (codes 1-6) are anchored at the step the lane index
    changes and look ``p.dt_window`` steps ahead for the resulting geometry;
    when several hold the lowest code is kept. Braking events (7, 8) are added
    on top.
    """
    pred = evaluate_predicates(trace, p)
    steps = trace.steps
    dx = np.array([r.adv.x - r.ego.x for r in steps])
    v_len = np.array([max(r.ego.length, r.adv.length) for r in steps])
    side = np.abs(dx) < v_len
    same = pred.same_lane
    w = p.dt_window

    def soon(sig):
        return eventually_ahead(sig, w)

    lane_events = [
        (1, pred.lanec_ego & soon(same & side)),
        (2, pred.lanec_ego & soon(pred.ahead_ego & same)),
        (3, pred.lanec_ego & soon(pred.ahead_ego & ~same)),
        (4, pred.lanec_adv & soon(same & side)),
        (5, pred.lanec_adv & soon(pred.ahead_adv & ~same)),
        (6, pred.lanec_adv & soon(pred.ahead_adv & same)),
    ]
    codes = np.zeros(len(steps), dtype=int)
    for code, sig in reversed(lane_events):
        codes[sig] = code
    brake = pred.ahead_adv & pred.brake_adv
    codes += 7 * (brake & same) + 8 * (brake & ~same)
    out = [int(c) for c in codes]
    if trace.collided:
        out[-1] = COLLISION_CODE
    return out


def event_signature(events) -> str:
    """Compact human-readable form: non-zero codes joined by '>'."""
    parts = [str(c) for c in events if c != 0]
    return ">".join(parts) if parts else "0"


def levenshtein(a, b) -> int:
    """Unit-cost edit distance; codes are compared as categorical symbols."""
    return int(Levenshtein.distance(list(a), list(b)))


def levenshtein_matrix(seqs, workers: int = 1) -> np.ndarray:
    seqs = [list(s) for s in seqs]
    return cdist(seqs, seqs, scorer=Levenshtein.distance, dtype=np.int32, workers=workers)


def distance_matrix(features, metric: str = "levenshtein") -> np.ndarray:
    if metric == "levenshtein":
        return levenshtein_matrix(features).astype(float)
    if metric == "euclidean":
        x = np.asarray(features, float)
        return euclidean_cdist(x, x)
    raise ConfigurationError(f"unknown metric {metric!r}", field="metric")


# ---------------------------------------------------------------- graph + communities

@dataclass
class SimilarityGraph:
    """Undirected weighted graph; ``edges`` maps ``(i, j)`` with ``i < j`` to a weight in (0, 1]."""

    n: int
    edges: dict = field(default_factory=dict)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for (i, j), w in self.edges.items():
            a[i, j] = a[j, i] = w
        return a

    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_igraph(self) -> igraph.Graph:
        keys = sorted(self.edges)
        g = igraph.Graph(n=self.n, edges=keys)
        g.es["weight"] = [self.edges[e] for e in keys]
        return g


def knn_graph_from_distances(dist, k: int) -> SimilarityGraph:
    d = np.asarray(dist, float)
    n = d.shape[0]
    if not 0 < k < n:
        raise ConfigurationError(f"k must satisfy 0 < k < n, got k={k}, n={n}", field="k")
    edges = {}
    for i in range(n):
        others = np.array([j for j in range(n) if j != i])
        order = np.lexsort((others, d[i, others]))  # distance first, then lower id
        for j in others[order[:k]]:
            a, b = (i, int(j)) if i < j else (int(j), i)
            edges[(a, b)] = 1.0 / (1.0 + d[a, b])
    return SimilarityGraph(n, edges)


def knn_graph(features, k: int = DEFAULT_K, metric: str = "levenshtein") -> SimilarityGraph:
    return knn_graph_from_distances(distance_matrix(features, metric), k)


@dataclass
class ClusterPartition:
    membership: list
    modularity: float

    @property
    def n_clusters(self) -> int:
        return len(set(self.membership))

    def communities(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_clusters)]
        for node, c in enumerate(self.membership):
            out[c].append(node)
        return out


def _relabel(membership) -> list[int]:
    """Contiguous ids from 0, in order of first appearance."""
    ids: dict = {}
    return [ids.setdefault(c, len(ids)) for c in membership]


def modularity(g: SimilarityGraph, membership, resolution: float = 1.0) -> float:
    """Weighted Newman modularity; 0 for a graph without edges."""
    membership = list(membership)
    if len(membership) != g.n or any(c is None for c in membership):
        raise ContractError("partition must assign every node to a community")
    m = sum(g.edges.values())
    if m == 0:
        return 0.0
    comm = np.asarray(_relabel(membership))
    k = g.adjacency().sum(axis=1)
    inner = np.zeros(comm.max() + 1)
    for (i, j), w in g.edges.items():
        if comm[i] == comm[j]:
            inner[comm[i]] += w
    tot = np.bincount(comm, weights=k)
    return float(np.sum(inner / m - resolution * (tot / (2.0 * m)) ** 2))


def leiden_cluster(g: SimilarityGraph, resolution: float = 1.0, seed: int = 0) -> ClusterPartition:
    """Leiden modularity optimisation, iterated until the partition is stable."""
    if g.n == 0:
        raise ContractError("cannot cluster an empty graph")
    part = leidenalg.find_partition(g.to_igraph(), leidenalg.RBConfigurationVertexPartition,
                                    weights="weight", resolution_parameter=resolution,
                                    n_iterations=-1, seed=int(seed))
    membership = _relabel(part.membership)
    return ClusterPartition(membership, modularity(g, membership, resolution))


@dataclass
class ClusterResult:
    partition: ClusterPartition
    exemplars: list  # medoid node per community
    events: list
    k: int
    metric: str = "levenshtein"

    def report(self, ids=None) -> dict:
        ids = list(range(len(self.events))) if ids is None else list(ids)
        clusters = []
        for c, nodes in enumerate(self.partition.communities()):
            ex = self.exemplars[c]
            clusters.append({"id": c, "size": len(nodes), "exemplar_trace_id": ids[ex],
                             "event_signature": event_signature(self.events[ex])})
        return {"clusters": clusters, "modularity": self.partition.modularity,
                "k": self.k, "metric": self.metric}


def medoids(dist: np.ndarray, membership) -> list[int]:
    """Per community, the node minimizing total intra-community distance (lowest id on ties)."""
    membership = np.asarray(membership)
    out = []
    for c in range(membership.max() + 1):
        nodes = np.flatnonzero(membership == c)
        cost = dist[np.ix_(nodes, nodes)].sum(axis=1)
        out.append(int(nodes[int(np.argmin(cost))]))
    return out


def cluster_events(events, k: int = DEFAULT_K, seed: int = 0, resolution: float = 1.0) -> ClusterResult:
    """Cluster event vectors; ``k`` is capped at ``n - 1`` for small pools."""
    events = [list(e) for e in events]
    n = len(events)
    if n == 0:
        raise ContractError("cannot cluster an empty pool")
    dist = distance_matrix(events, "levenshtein")
    if n == 1:
        part = ClusterPartition([0], 0.0)
        return ClusterResult(part, [0], events, 0)
    k_eff = min(k, n - 1)
    part = leiden_cluster(knn_graph_from_distances(dist, k_eff), resolution, seed)
    return ClusterResult(part, medoids(dist, part.membership), events, k_eff)


def cluster_failures(pool, k: int = DEFAULT_K, seed: int = 0, resolution: float = 1.0,
                     p: SafeDistanceParams = SafeDistanceParams()) -> ClusterResult:
    """Event extraction, Levenshtein kNN graph and Leiden over a de-duplicated pool."""
    return cluster_events([extract_events(r.trace, p) for r in pool], k, seed, resolution)


def adjusted_rand_index(labels_true, labels_pred) -> float:
    return float(adjusted_rand_score(labels_true, labels_pred))


def tune_k(events, labels, ks=(3, 5, 7, 10, 15, 20), seed: int = 0) -> tuple[int, float]:
    """Pick the neighbour count whose clustering agrees best with reference labels."""
    best = (None, -np.inf)
    for k in ks:
        if k >= len(events):
            continue
        ari = adjusted_rand_index(labels, cluster_events(events, k, seed).partition.membership)
        if ari > best[1]:
            best = (k, ari)
    if best[0] is None:
        raise ConfigurationError("no candidate k is smaller than the pool size", field="k")
    return best
