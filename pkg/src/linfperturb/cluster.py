"""Spectral recovery of planted cliques and planted partitions.

The free functions (:func:`fsc`, :func:`ith_clique`, :func:`clique_partition`,
:func:`hidden_partition`) take 0/1 adjacency matrices or transformed
matrices; the estimator classes wrap them for use as scikit-learn clusterers
with the adjacency matrix as ``X``.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_binary, check_symmetric
from .exceptions import (AssignmentAmbiguous, BadSpec, BlockTooSmall, NotBinary,
                         RankDeficient, UniverseMismatch, ZeroMatrix)
from .linalg import spectral_decompose
from .models import PartitionSpec, adjacency_transform, as_generator


@dataclass
class PlantedGraph:
    """A sampled graph plus its planted truth.

    ``labels[v]`` is the block of ``v``; for a planted clique it is 1 on the
    clique and 0 elsewhere, and ``members`` lists the clique.
    """

    adjacency: np.ndarray
    labels: np.ndarray
    members: np.ndarray = None
    densities: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.adjacency.shape[0]


def _sample_graph(prob, rng):
    n = prob.shape[0]
    upper = np.triu(rng.random((n, n)) < prob, 1)
    return upper | upper.T


def planted_clique_graph(n, k, q=0.5, random_state=None):
    """``G(n, q)`` with a clique planted on ``k`` uniformly chosen vertices."""
    if not 1 <= k <= n:
        raise BadSpec(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = as_generator(random_state)
    members = np.sort(rng.choice(n, size=k, replace=False))
    adj = _sample_graph(np.full((n, n), q), rng)
    adj[np.ix_(members, members)] = True
    np.fill_diagonal(adj, False)
    labels = np.zeros(n, dtype=np.int64)
    labels[members] = 1
    return PlantedGraph(adj, labels, members, {"q": q, "p": 1.0})


def planted_partition_graph(spec, random_state=None, shuffle=True):
    """Planted partition: within block ``i`` edges appear w.p. ``p_i``, across w.p. ``q``."""
    if not isinstance(spec, PartitionSpec):
        raise BadSpec("expected a PartitionSpec")
    rng = as_generator(random_state)
    labels = spec.contiguous_labels()
    if shuffle:
        labels = rng.permutation(labels)
    dens = np.asarray(spec.densities)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, dens[labels][:, None], spec.cross_density)
    adj = _sample_graph(prob, rng)
    return PlantedGraph(adj, labels, None,
                        {"q": spec.cross_density, "p": list(spec.densities)})


def _threshold_vector(M, i):
    M = check_symmetric(M)
    if not np.any(M):
        raise ZeroMatrix("cannot cluster the zero matrix")
    d = spectral_decompose(M, k=i)
    if d.value(i) <= d.rank_tol:
        raise RankDeficient(f"sigma_{i} is numerically zero")
    u = np.array(d.vector(i))
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    x = float(u.max())
    return np.flatnonzero(u >= x / 2), {"threshold": x / 2, "max": x, "index": i}


def ith_clique(M, i, return_info=False):
    """Coordinates of the ``i``-th singular vector that reach half its largest entry.

    The vector's sign is fixed so its largest-magnitude coordinate is positive.
    """
    sel, info = _threshold_vector(M, i)
    info["selected"] = int(sel.size)
    return (sel, info) if return_info else sel


def fsc(M, return_info=False):
    """First singular vector clustering: :func:`ith_clique` with ``i = 1``."""
    return ith_clique(M, 1, return_info)


def _peel(adj, vertices, r, q, steps):
    blocks = []
    rem = vertices
    for _ in range(r - 1):
        if rem.size == 0:
            raise BlockTooSmall("no vertices left to split off another block")
        sub = adjacency_transform(adj[np.ix_(rem, rem)], q)
        sel, info = ith_clique(sub, 1, return_info=True)
        info["remaining"] = int(rem.size)
        steps.append(info)
        blocks.append(rem[sel])
        rem = np.setdiff1d(rem, rem[sel])
    blocks.append(rem)
    return blocks


def _holdout(n, epsilon, rng, S):
    if S is not None:
        S = np.unique(np.asarray(S, dtype=np.int64))
    else:
        if not 0 < epsilon < 1:
            raise BadSpec("epsilon must lie in (0, 1)")
        S = np.flatnonzero(rng.random(n) < n ** (-1.0 + epsilon))
    return S, np.setdiff1d(np.arange(n), S)


def _labels_from(blocks, n):
    labels = np.full(n, -1, dtype=np.int64)
    for j, b in enumerate(blocks):
        labels[b] = j
    return labels


def clique_partition(adj, r, epsilon, random_state=None, S=None, q=0.5,
                     return_info=False):
    """Recover ``r`` planted cliques.

    Vertices are held out independently with probability ``n^(epsilon - 1)``
    (or ``S`` is used as given); blocks are peeled off the rest by repeated
    FSC on induced subgraphs, and each held-out vertex joins the unique block
    it is fully adjacent to.

    Returns block labels in ``0..r-1`` (peeling order).
    """
    adj = check_binary(adj)
    n = adj.shape[0]
    rng = as_generator(random_state)
    S, rest = _holdout(n, epsilon, rng, S)
    steps = []
    blocks = _peel(adj, rest, r, q, steps)
    labels = _labels_from(blocks, n)
    for v in S:
        hits = [j for j, b in enumerate(blocks) if b.size and adj[v, b].all()]
        if len(hits) != 1:
            raise AssignmentAmbiguous(int(v), hits, labels.copy())
        labels[v] = hits[0]
    info = {"S": S, "steps": steps, "weight_ratio": _weight_ratio(adj, blocks, q)}
    return (labels, info) if return_info else labels


def _weight_ratio(adj, blocks, q):
    # k_1 rho_1 / k_r rho_r over the recovered blocks; a guarantee hypothesis
    # the algorithm never uses, kept for diagnostics
    w = []
    for b in blocks:
        k = b.size
        p_hat = adj[np.ix_(b, b)].sum() / (k * (k - 1)) if k > 1 else 1.0
        w.append(k * (p_hat - q) / (1 - q))
    lo = min(w) if w else 0.0
    return float(max(w) / lo) if lo > 0 else float("inf")


def hidden_partition(adj, r, epsilon, c_y, q=0.5, random_state=None, S=None,
                     return_info=False):
    """Recover a planted partition with intra-block densities above ``q``.

    Held-out vertices go to the block whose representative subset ``Y_j``
    (the first ``c_y * n`` vertices of the block after a seeded shuffle) they
    have most neighbours in; ties go to the lowest block index.
    """
    adj = check_binary(adj)
    n = adj.shape[0]
    rng = as_generator(random_state)
    S, rest = _holdout(n, epsilon, rng, S)
    steps = []
    blocks = _peel(adj, rest, r, q, steps)
    m = int(c_y * n)
    if m < 1:
        raise BlockTooSmall(f"c_y * n = {c_y * n} leaves empty representative sets")
    reps = []
    for j, b in enumerate(blocks):
        if b.size < m:
            raise BlockTooSmall(f"block {j} has {b.size} < {m} vertices")
        reps.append(rng.permutation(b)[:m])
    labels = _labels_from(blocks, n)
    if S.size:
        counts = np.stack([adj[np.ix_(S, y)].sum(axis=1) for y in reps], axis=1)
        labels[S] = np.argmax(counts, axis=1)
    info = {"S": S, "steps": steps, "Y": reps, "weight_ratio": _weight_ratio(adj, blocks, q)}
    return (labels, info) if return_info else labels


@dataclass
class RecoveryResult:
    predicted: np.ndarray
    exact: bool
    misclassified: int
    mapping: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "predicted": [int(v) for v in self.predicted],
            "exact": bool(self.exact),
            "misclassified": int(self.misclassified),
            "mapping": {str(k): int(v) for k, v in self.mapping.items()},
            "diagnostics": self.diagnostics,
        }


def _best_matching(C):
    rows, cols = C.shape
    size = max(rows, cols)
    P = np.zeros((size, size), dtype=np.int64)
    P[:rows, :cols] = C
    if size <= 8:
        best, perm = -1, None
        for cand in itertools.permutations(range(size)):
            val = int(P[np.arange(size), cand].sum())
            if val > best:
                best, perm = val, cand
        return best, {i: perm[i] for i in range(rows) if perm[i] < cols}
    # greedy: repeatedly take the largest remaining overlap
    P = P.astype(np.float64)
    mapping, total = {}, 0
    for _ in range(size):
        i, j = np.unravel_index(np.argmax(P), P.shape)
        if i < rows and j < cols:
            mapping[int(i)] = int(j)
        total += int(P[i, j])
        P[i, :] = -1
        P[:, j] = -1
    return total, mapping


def score(predicted, truth):
    """Compare two labelings up to relabeling.

    Exhaustive search over label permutations when there are at most 8
    labels, greedy maximal-overlap matching otherwise.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise UniverseMismatch("predicted and truth must label the same vertices")
    pl, pi = np.unique(predicted, return_inverse=True)
    tl, ti = np.unique(truth, return_inverse=True)
    C = np.zeros((pl.size, tl.size), dtype=np.int64)
    np.add.at(C, (pi, ti), 1)
    agree, mapping = _best_matching(C)
    wrong = predicted.size - agree
    mapping = {int(pl[i]): int(tl[j]) for i, j in mapping.items()}
    return RecoveryResult(predicted, wrong == 0, int(wrong), mapping)


def score_clique(predicted, members, n):
    """Score a recovered vertex set against the planted clique."""
    pred = np.unique(np.asarray(predicted, dtype=np.int64))
    members = np.unique(np.asarray(members, dtype=np.int64))
    if (pred.size and (pred.min() < 0 or pred.max() >= n)) or \
            (members.size and (members.min() < 0 or members.max() >= n)):
        raise UniverseMismatch(f"vertex outside [0, {n})")
    wrong = np.setxor1d(pred, members).size
    labels = np.zeros(n, dtype=np.int64)
    labels[pred] = 1
    return RecoveryResult(labels, wrong == 0, int(wrong), {1: 1, 0: 0})


class SpectralClique(ClusterMixin, BaseEstimator):
    """Threshold the ``index``-th singular vector of the centred adjacency matrix.

    ``labels_`` is 1 on the recovered set and 0 elsewhere.
    """

    def __init__(self, index=1, density=0.5):
        self.index = index
        self.density = density

    def fit(self, X, y=None):
        M = adjacency_transform(X, self.density)
        sel, info = ith_clique(M, self.index, return_info=True)
        self.members_ = sel
        self.threshold_ = info["threshold"]
        self.labels_ = np.zeros(M.shape[0], dtype=np.int64)
        self.labels_[sel] = 1
        return self


class CliquePartition(ClusterMixin, BaseEstimator):
    """Clique-partition recovery with random hold-out and adjacency reattachment."""

    def __init__(self, n_blocks=2, epsilon=0.3, density=0.5, random_state=None):
        self.n_blocks = n_blocks
        self.epsilon = epsilon
        self.density = density
        self.random_state = random_state

    def fit(self, X, y=None, holdout=None):
        labels, info = clique_partition(X, self.n_blocks, self.epsilon,
                                        random_state=self.random_state, S=holdout,
                                        q=self.density, return_info=True)
        self.labels_ = labels
        self.holdout_ = info["S"]
        self.steps_ = info["steps"]
        return self


class HiddenPartition(ClusterMixin, BaseEstimator):
    """Planted-partition recovery with representative-set voting for held-out vertices."""

    def __init__(self, n_blocks=2, epsilon=0.3, c_y=0.1, cross_density=0.5,
                 random_state=None):
        self.n_blocks = n_blocks
        self.epsilon = epsilon
        self.c_y = c_y
        self.cross_density = cross_density
        self.random_state = random_state

    def fit(self, X, y=None, holdout=None):
        labels, info = hidden_partition(X, self.n_blocks, self.epsilon, self.c_y,
                                        q=self.cross_density,
                                        random_state=self.random_state, S=holdout,
                                        return_info=True)
        self.labels_ = labels
        self.holdout_ = info["S"]
        self.steps_ = info["steps"]
        return self


def write_edge_list(fh, adj):
    """Header line ``n`` then one ``i j`` line per edge with ``i < j``."""
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh, "w") as f:
            return write_edge_list(f, adj)
    adj = check_binary(adj)
    fh.write(f"{adj.shape[0]}\n")
    for i, j in zip(*np.nonzero(np.triu(adj, 1))):
        fh.write(f"{i} {j}\n")


def read_edge_list(fh):
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh) as f:
            return read_edge_list(f)
    lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or len(lines[0]) != 1:
        raise NotBinary("edge list must start with a line holding n")
    n = int(lines[0][0])
    adj = np.zeros((n, n), dtype=bool)
    for parts in lines[1:]:
        if len(parts) != 2:
            raise NotBinary(f"bad edge line {' '.join(parts)!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise NotBinary(f"edge ({i}, {j}) invalid for n={n}")
        adj[i, j] = adj[j, i] = True
    return adj


def write_truth(fh, graph):
    """JSON sidecar with the planted labels (and clique members, if any)."""
    obj = {
        "n": graph.n,
        "labels": [int(v) for v in graph.labels],
        "members": None if graph.members is None else [int(v) for v in graph.members],
        "densities": graph.densities,
    }
    text = json.dumps(obj, sort_keys=True) + "\n"
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh, "w") as f:
            f.write(text)
    else:
        fh.write(text)


def read_truth(fh):
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh) as f:
            return read_truth(f)
    obj = json.load(fh)
    labels = np.asarray(obj["labels"], dtype=np.int64)
    if labels.size != obj["n"]:
        raise UniverseMismatch("truth labels do not cover n vertices")
    members = None if obj.get("members") is None else np.asarray(obj["members"], dtype=np.int64)
    return labels, members, obj.get("densities", {})
