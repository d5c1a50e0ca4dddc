"""Signal generators, noise ensembles and signal summary statistics."""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, check_binary
from .exceptions import BadPartition, BadSize, BadSpec, RankExceeded
from .linalg import SpectralDecomposition

NOISE_KINDS = (
    "zero",
    "rademacher",
    "truncated_gaussian",
    "centered_edge",
    "completion_sampling",
    "partition_edge",
)


def make_rng(seed, *stream):
    """Counter-based generator for the stream keyed by ``(seed, *stream)``.

    Philox keyed through a ``SeedSequence`` gives independent, reproducible
    streams per trial regardless of the order trials are executed in.
    """
    if isinstance(seed, np.random.Generator):
        if stream:
            raise TypeError("stream keys need an integer seed")
        return seed
    entropy = [int(seed)] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(random_state):
    """``None`` maps to seed 0: nothing in this package draws OS entropy."""
    if random_state is None:
        return make_rng(0)
    return make_rng(random_state)


@dataclass(frozen=True)
class PartitionSpec:
    """Planted partition: block sizes, intra-block densities and cross density ``q``."""

    sizes: tuple
    densities: tuple
    cross_density: float = 0.5

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.sizes)
        dens = tuple(float(p) for p in self.densities)
        if len(dens) == 1 and len(sizes) > 1:
            dens = dens * len(sizes)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "densities", dens)
        if not sizes or min(sizes) < 1:
            raise BadSize("block sizes must be positive")
        if any(a < b for a, b in zip(sizes, sizes[1:])):
            raise BadSize("block sizes must be non-increasing")
        if len(dens) != len(sizes):
            raise BadSpec("need one density per block")
        q = self.cross_density
        # q = 0 is allowed for the degenerate disconnected-cliques case
        if not 0 <= q < 1:
            raise BadSpec("cross density must lie in [0, 1)")
        if any(not (q < p <= 1) for p in dens):
            raise BadSpec("every intra-block density must exceed the cross density")

    @property
    def n(self):
        return sum(self.sizes)

    @property
    def r(self):
        return len(self.sizes)

    @property
    def rho(self):
        """Mean of a within-block entry after the ``0 -> -q/(1-q)`` transform."""
        q = self.cross_density
        return tuple((p - q) / (1 - q) for p in self.densities)

    def contiguous_labels(self):
        return np.repeat(np.arange(self.r), self.sizes)


@dataclass(frozen=True)
class NoiseSpec:
    """Random noise ensemble.

    ``scale`` multiplies every entry.  ``p`` is the edge density for
    ``centered_edge`` and the sampling density for ``completion_sampling``;
    ``K`` overrides the truncation level of ``truncated_gaussian``.
    """

    kind: str
    seed: int = 0
    scale: float = 1.0
    p: float = None
    K: float = None
    partition: PartitionSpec = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise BadSpec(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise BadSpec("scale must be non-negative")
        if self.kind == "centered_edge" and (self.p is None or not 0 < self.p < 1):
            raise BadSpec("centered_edge needs an edge density p in (0, 1)")
        if self.kind == "completion_sampling" and (self.p is None or not 0 < self.p <= 1):
            raise BadSpec("completion_sampling needs a sampling density p in (0, 1]")
        if self.kind == "partition_edge" and self.partition is None:
            raise BadSpec("partition_edge needs a PartitionSpec")
        if self.K is not None and self.K <= 0:
            raise BadSpec("K must be positive")

    def truncation(self, n):
        if self.K is not None:
            return float(self.K)
        return 20.0 * math.sqrt(math.log(max(n, 2)))

    def entry_bound(self, n, signal=None):
        """Almost-sure bound ``K`` on ``|xi_ij|``."""
        s = self.scale
        if self.kind == "zero" or s == 0:
            return 0.0
        if self.kind == "rademacher":
            return s
        if self.kind == "truncated_gaussian":
            return s * self.truncation(n)
        if self.kind == "centered_edge":
            return s * max(1.0, self.p / (1 - self.p))
        if self.kind == "completion_sampling":
            amax = float(np.max(np.abs(signal))) if signal is not None else 1.0
            return s * amax * max(1.0 / self.p - 1.0, 1.0)
        return s * max(_partition_values(self.partition)[0])

    def second_moment(self, n, signal=None):
        """Upper bound on ``E[xi_ij^2]`` over all entries."""
        s2 = self.scale ** 2
        if self.kind == "zero" or s2 == 0:
            return 0.0
        if self.kind in ("rademacher", "truncated_gaussian"):
            return s2
        if self.kind == "centered_edge":
            return s2 * self.p / (1 - self.p)
        if self.kind == "completion_sampling":
            amax = float(np.max(np.abs(signal))) if signal is not None else 1.0
            return s2 * amax ** 2 * (1 - self.p) / self.p
        return s2 * _partition_values(self.partition)[1]

    def with_seed(self, seed):
        return NoiseSpec(self.kind, seed, self.scale, self.p, self.K, self.partition)


def _partition_values(spec):
    """(list of |values| a partition_edge entry can take, max second moment)."""
    q = spec.cross_density
    low = -q / (1 - q)
    vals = [1.0, abs(low)]
    moments = [q / (1 - q) if q > 0 else 0.0]
    for p, rho in zip(spec.densities, spec.rho):
        hi, lo = 1 - rho, low - rho
        vals += [abs(hi)] + ([abs(lo)] if p < 1 else [])
        moments.append(p * hi ** 2 + (1 - p) * lo ** 2)
    return vals, max(moments)


def _symmetric_from(D):
    upper = np.triu(D)
    return upper + np.triu(D, 1).T


def _two_point(rng, shape, p, hi, lo):
    return np.where(rng.random(shape) < p, hi, lo)


def draw_noise(spec, shape, signal=None, labels=None, rng=None):
    """Draw one noise matrix.

    Parameters
    ----------
    spec : NoiseSpec
    shape : int or (m, n)
        An ``int`` gives a symmetric ``n x n`` matrix with independent
        upper-triangular entries (diagonal included); a pair gives a
        rectangular matrix with independent entries.
    signal : array_like, optional
        Required by ``completion_sampling``: the returned matrix is
        ``A_tilde - A`` with ``A_tilde = A / p`` on observed entries, 0 elsewhere.
    labels : array_like, optional
        Block labels, required by ``partition_edge``.
    rng : numpy.random.Generator, optional
        Overrides ``spec.seed``.
    """
    rng = make_rng(spec.seed) if rng is None else rng
    symmetric = np.isscalar(shape) or len(np.atleast_1d(shape)) == 1
    full = (int(shape), int(shape)) if symmetric else tuple(int(s) for s in shape)
    n = full[0]
    if min(full) < 1:
        raise BadSize("noise dimensions must be positive")

    if spec.kind == "zero" or spec.scale == 0:
        return np.zeros(full)

    if spec.kind == "rademacher":
        D = rng.choice(np.array([-1.0, 1.0]), size=full)
    elif spec.kind == "truncated_gaussian":
        K = spec.truncation(max(full))
        D = rng.standard_normal(full)
        bad = np.abs(D) > K
        while bad.any():
            D[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(D) > K
    elif spec.kind == "centered_edge":
        D = _two_point(rng, full, spec.p, 1.0, -spec.p / (1 - spec.p))
    elif spec.kind == "completion_sampling":
        if signal is None:
            raise BadSpec("completion_sampling needs the signal matrix")
        A = as_matrix(signal, "signal")
        if A.shape != full:
            raise BadSpec(f"signal shape {A.shape} != noise shape {full}")
        observed = rng.random(full) < spec.p
        D = np.where(observed, A / spec.p, 0.0) - A
        if symmetric:
            D = _symmetric_from(D)
        return spec.scale * D
    else:
        if not symmetric:
            raise BadSpec("partition_edge noise is symmetric only")
        labels = np.asarray(labels if labels is not None
                            else spec.partition.contiguous_labels())
        if labels.shape != (n,):
            raise BadSpec("labels must have one entry per vertex")
        q = spec.partition.cross_density
        low = -q / (1 - q)
        dens = np.asarray(spec.partition.densities)
        rho = np.asarray(spec.partition.rho)
        same = labels[:, None] == labels[None, :]
        p_edge = np.where(same, dens[labels][:, None], q)
        shift = np.where(same, rho[labels][:, None], 0.0)
        D = np.where(rng.random(full) < p_edge, 1.0, low) - shift

    if symmetric:
        D = _symmetric_from(D)
    return spec.scale * D


def clique_signal(n, k, random_state=None, members=None):
    """Rank-one signal with an all-one ``k x k`` block on a random vertex subset.

    Returns ``(A, members)`` with ``members`` the sorted clique indices.
    """
    if not 1 <= k <= n:
        raise BadSize(f"need 1 <= k <= n, got k={k}, n={n}")
    if members is None:
        rng = as_generator(random_state)
        members = np.sort(rng.choice(n, size=k, replace=False))
    else:
        members = np.unique(np.asarray(members, dtype=np.int64))
        if members.size != k or members.min() < 0 or members.max() >= n:
            raise BadSize("members must be k distinct indices in [0, n)")
    A = np.zeros((n, n))
    A[np.ix_(members, members)] = 1.0
    return A, members


def partition_signal(spec, labels=None):
    """Expected (transformed) adjacency: ``rho_i`` times all-ones on each block."""
    labels = spec.contiguous_labels() if labels is None else np.asarray(labels)
    if labels.shape != (spec.n,):
        raise BadSize("labels must have one entry per vertex")
    rho = np.asarray(spec.rho)
    same = labels[:, None] == labels[None, :]
    return np.where(same, rho[labels][:, None], 0.0)


def integer_block_signal(m, n, block_rows, block_cols, values):
    """Piecewise-constant integer matrix.

    ``block_rows``/``block_cols`` list the block heights/widths; ``values`` is
    the ``len(block_rows) x len(block_cols)`` table of integer block values.
    """
    block_rows = [int(b) for b in block_rows]
    block_cols = [int(b) for b in block_cols]
    values = np.asarray(values)
    if sum(block_rows) != m or sum(block_cols) != n or min(block_rows + block_cols) < 1:
        raise BadPartition("blocks must tile the m x n grid")
    if values.shape != (len(block_rows), len(block_cols)):
        raise BadPartition("values table does not match the block grid")
    if not np.all(np.equal(np.mod(values, 1), 0)):
        raise BadPartition("block values must be integers")
    return np.repeat(np.repeat(values.astype(np.float64), block_rows, axis=0),
                     block_cols, axis=1)


def adjacency_transform(adj, p):
    """Map a 0/1 adjacency matrix to the centred +-form used by the spectral algorithms.

    Edges stay 1, non-edges (and the diagonal) become ``-p / (1 - p)``; at
    ``p = 1/2`` that is the usual ``0 -> -1`` switch.
    """
    adj = check_binary(adj)
    if not 0 <= p < 1:
        raise BadSpec("density must lie in [0, 1)")
    low = -p / (1 - p)
    M = np.where(adj, 1.0, low)
    np.fill_diagonal(M, low)
    return M


@dataclass(frozen=True)
class SignalSummary:
    """Spectral statistics of the leading ``r`` components of a signal.

    ``delta[i-1]`` is the distance from ``sigma_i`` to its nearest neighbour
    (``sigma_0 = inf``); ``kappa[i-1] = sigma_1 / sigma_i``.  For rectangular
    signals ``N = m + n`` and ``w_inf`` covers both singular-vector matrices.
    """

    r: int
    sigma: tuple
    sigma_next: float
    Delta: tuple
    delta: tuple
    kappa: tuple
    u_inf: float
    w_inf: float
    n: int
    N: int = None
    degenerate: tuple = field(default=())

    @property
    def dim(self):
        """The dimension entering ``log`` terms: ``N`` if rectangular, else ``n``."""
        return self.N if self.N is not None else self.n

    def check_index(self, i):
        if not 1 <= i <= self.r:
            raise RankExceeded(f"index {i} outside 1..{self.r}")


def _summary(sigma, sigma_next, u_inf, w_inf, n, N, tol):
    r = len(sigma)
    ext = list(sigma) + [sigma_next]
    Delta = tuple(ext[j] - ext[j + 1] for j in range(r))
    delta = tuple(Delta[0] if j == 0 else min(Delta[j - 1], Delta[j]) for j in range(r))
    kappa = tuple(sigma[0] / s if s > 0 else math.inf for s in sigma)
    degenerate = tuple(d < tol for d in delta)
    return SignalSummary(r, tuple(float(s) for s in sigma), float(sigma_next), Delta,
                         delta, kappa, float(u_inf), float(w_inf), n, N, degenerate)


def signal_summary(d, r):
    """Summary of the leading ``r`` components of a symmetric decomposition."""
    if not isinstance(d, SpectralDecomposition):
        raise TypeError("expected a SpectralDecomposition")
    if r < 1 or r > d.rank:
        raise RankExceeded(f"r={r} but decomposition has rank {d.rank}")
    U = d.leading(r)
    u_inf = float(np.max(np.abs(U)))
    return _summary(d.sigma[:r], d.value(r + 1), u_inf, u_inf, d.n, None, d.rank_tol)


def rect_signal_summary(A, r, rank_rtol=1e-10):
    """Summary for a rectangular signal via its SVD; also returns ``(U, s, V)``."""
    A = as_matrix(A, "A")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = rank_rtol * (s[0] if s.size else 0.0)
    if r < 1 or r > int(np.count_nonzero(s > tol)):
        raise RankExceeded(f"r={r} exceeds the rank of A")
    V = Vt.T
    u_inf = float(np.max(np.abs(U[:, :r])))
    w_inf = max(u_inf, float(np.max(np.abs(V[:, :r]))))
    nxt = float(s[r]) if r < s.size else 0.0
    m, n = A.shape
    summ = _summary(s[:r], nxt, u_inf, w_inf, n, m + n, tol)
    return summ, (U[:, :r], s[:r], V[:, :r])
