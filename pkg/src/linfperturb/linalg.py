"""Dense symmetric and rectangular matrix algebra.

Conventions used across the package:

* Singular values of a symmetric matrix are the absolute eigenvalues, listed
  in decreasing order; ``sign[i]`` records the sign of the eigenvalue so that
  ``M @ u_i == sign_i * sigma_i * u_i``.
* Ties in ``|lambda|`` are broken by sign (positive first) and then by the
  order the eigensolver returned them.
* Singular *indices* (``i`` in ``sigma_i``) are 1-based everywhere in the
  public API; coordinate/row indices are 0-based.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, check_index, check_index_set, check_symmetric
from .exceptions import LengthMismatch, NoConvergence, RankExceeded, ShapeMismatch

DEFAULT_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ordered singular triples ``(sigma_i, sign_i, u_i)`` of a symmetric matrix.

    ``vectors`` holds the singular vectors as columns.  A partial
    decomposition (``complete=False``) only carries the leading components.
    """

    sigma: np.ndarray
    sign: np.ndarray
    vectors: np.ndarray
    rank_tol: float
    complete: bool = True

    def __post_init__(self):
        for arr in (self.sigma, self.sign, self.vectors):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def eigenvalues(self):
        return self.sign * self.sigma

    @property
    def rank(self):
        return int(np.count_nonzero(self.sigma > self.rank_tol))

    def vector(self, i):
        """The ``i``-th singular vector (1-based)."""
        if not 1 <= i <= self.sigma.size:
            raise RankExceeded(f"component {i} not available (have {self.sigma.size})")
        return self.vectors[:, i - 1]

    def value(self, i):
        if i > self.sigma.size:
            if self.complete:
                return 0.0
            raise RankExceeded(f"component {i} not available (have {self.sigma.size})")
        return float(self.sigma[i - 1])

    def leading(self, r):
        """``n x r`` matrix of the leading ``r`` singular vectors."""
        if r > self.sigma.size:
            raise RankExceeded(f"asked for {r} vectors, have {self.sigma.size}")
        return self.vectors[:, :r]

    def reconstruct(self, k=None):
        k = self.sigma.size if k is None else k
        V = self.vectors[:, :k]
        return (V * self.eigenvalues[:k]) @ V.T


def _order(eigvals):
    # lexsort: last key is primary
    neg = (eigvals < 0).astype(np.int8)
    return np.lexsort((np.arange(eigvals.size), neg, -np.abs(eigvals)))


def spectral_decompose(M, rank_tol=None, k=None):
    """Singular value decomposition of a symmetric matrix.

    Parameters
    ----------
    M : array_like, shape (n, n)
        Symmetric matrix (checked to 1e-12 relative).
    rank_tol : float, optional
        Absolute threshold under which a singular value counts as zero.
        Defaults to ``1e-10 * sigma_1``.
    k : int, optional
        Keep only the ``k`` leading components.  The full LAPACK solve runs
        either way: ARPACK restarts from a process-global random seed when
        the Krylov space breaks down (any low-rank input), which would make
        results differ between calls.

    Returns
    -------
    SpectralDecomposition
    """
    M = check_symmetric(M)
    n = M.shape[0]
    complete = True
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc

    order = _order(w)
    w, V = w[order], V[:, order]
    if k is not None:
        w, V = w[:k], V[:, :k]
        complete = complete and k >= n
    sigma = np.abs(w)
    sign = np.where(w < 0, -1.0, 1.0)
    if rank_tol is None:
        rank_tol = DEFAULT_RANK_RTOL * (float(sigma[0]) if sigma.size else 0.0)
    return SpectralDecomposition(sigma.copy(), sign, np.ascontiguousarray(V),
                                 float(rank_tol), complete)


def spectral_norm(M):
    """Operator 2-norm; symmetric input goes through the eigenvalue route."""
    M = as_matrix(M)
    if M.shape[0] == M.shape[1] and np.array_equal(M, M.T):
        try:
            w = np.linalg.eigvalsh(M)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(str(exc)) from exc
        return float(max(abs(w[0]), abs(w[-1])))
    return float(np.linalg.norm(M, 2))


def align_sign(reference, candidate):
    """Return ``candidate`` or ``-candidate``, whichever is within 90 degrees of ``reference``.

    A zero inner product leaves ``candidate`` unchanged.
    """
    candidate = np.asarray(candidate, dtype=np.float64)
    if float(np.dot(reference, candidate)) < 0:
        return -candidate
    return candidate


def symmetrize(A):
    """``S(A) = [[0, A], [A^T, 0]]`` of size ``m + n``."""
    A = as_matrix(A, "A")
    m, n = A.shape
    S = np.zeros((m + n, m + n))
    S[:m, m:] = A
    S[m:, :m] = A.T
    return S


def zero_out(M, alpha):
    """Copy of ``M`` with the rows and columns listed in ``alpha`` set to zero."""
    M = check_symmetric(M)
    idx = check_index_set(alpha, M.shape[0])
    out = M.copy()
    out[idx, :] = 0.0
    out[:, idx] = 0.0
    return out


def leave_one_out_vector(H, l):
    """Row ``l`` of ``H`` with its own entry halved.

    With ``x`` this vector, ``H - zero_out(H, [l]) == outer(x, e_l) + outer(e_l, x)``.
    """
    H = check_symmetric(H, name="H")
    l = check_index(l, H.shape[0])
    x = H[l].copy()
    x[l] = H[l, l] / 2.0
    return x


def low_rank_truncate(d, s, shape=None):
    """Rank-``s`` truncation from a decomposition.

    For a symmetric matrix this is ``sum_{i<=s} sign_i sigma_i u_i u_i^T``.
    When ``shape=(m, n)`` is given, ``d`` must decompose ``symmetrize(A)`` for
    an ``m x n`` matrix ``A``; the positive eigenpairs ``(u; v)/sqrt(2)`` are
    unpacked and ``sum_{i<=s} sigma_i u_i v_i^T`` is returned.
    """
    if s < 0:
        raise RankExceeded("s must be non-negative")
    if shape is None:
        if s > d.rank:
            raise RankExceeded(f"s={s} exceeds rank {d.rank}")
        if s == 0:
            return np.zeros((d.n, d.n))
        return d.reconstruct(s)

    m, n = shape
    if m + n != d.n:
        raise ShapeMismatch(f"shape {shape} does not match decomposition of size {d.n}")
    pos = np.flatnonzero((d.sign > 0) & (d.sigma > d.rank_tol))
    if s > pos.size:
        raise RankExceeded(f"s={s} exceeds rank {pos.size}")
    if s == 0:
        return np.zeros((m, n))
    pick = pos[:s]
    W = d.vectors[:, pick] * np.sqrt(2.0)
    return (W[:m] * d.sigma[pick]) @ W[m:].T


def vector_metrics(u, v):
    """``l2`` and ``linf`` distance between ``u`` and the sign-aligned ``v``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise LengthMismatch(f"lengths {u.shape} and {v.shape} differ")
    diff = u - align_sign(u, v)
    return {"l2": float(np.linalg.norm(diff)), "linf": float(np.max(np.abs(diff)))}


def read_matrix(fh):
    """Parse the plain-text matrix format: ``"m n"`` then ``m`` rows of ``n`` numbers."""
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh) as f:
            return read_matrix(f)
    header = fh.readline().split()
    if len(header) != 2:
        raise ShapeMismatch("first line must be 'm n'")
    m, n = int(header[0]), int(header[1])
    rows = [line.split() for line in fh if line.strip()]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ShapeMismatch(f"expected {m} rows of {n} values")
    return np.array(rows, dtype=np.float64).reshape(m, n)


def write_matrix(fh, M):
    """Inverse of :func:`read_matrix`; ``repr`` floats round-trip exactly."""
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh, "w") as f:
            return write_matrix(f, M)
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    fh.write(f"{M.shape[0]} {M.shape[1]}\n")
    for row in M:
        fh.write(" ".join(repr(float(x)) for x in row) + "\n")
