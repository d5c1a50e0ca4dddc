"""Input validation helpers shared by the estimators and free functions."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import IndexOutOfRange, NonSymmetric, NotBinary

SYMMETRY_RTOL = 1e-12


def as_matrix(M, name="M"):
    """Return ``M`` as a finite 2-D float64 array (copy-free when possible)."""
    return check_array(M, dtype=np.float64, ensure_2d=True,
                       input_name=name, ensure_min_samples=1,
                       ensure_min_features=1)


def check_symmetric(M, rtol=SYMMETRY_RTOL, name="M"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise NonSymmetric(f"{name} has shape {M.shape}, expected square")
    scale = max(1.0, float(np.max(np.abs(M))))
    asym = float(np.max(np.abs(M - M.T)))
    if asym > rtol * scale:
        raise NonSymmetric(f"{name} asymmetry {asym:.3e} exceeds {rtol:.0e} relative")
    return M


def check_binary(adj, name="adjacency"):
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise NotBinary(f"{name} must be a square matrix")
    if adj.dtype != bool and not np.isin(adj, (0, 1)).all():
        raise NotBinary(f"{name} entries must be 0 or 1")
    return adj.astype(bool)


def check_index_set(indices, n):
    """Sorted, de-duplicated integer index array with every entry in ``[0, n)``."""
    idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices,
                     dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange(f"indices must lie in [0, {n})")
    return np.unique(idx)


def check_index(l, n):
    if not 0 <= int(l) < n:
        raise IndexOutOfRange(f"index {l} outside [0, {n})")
    return int(l)
