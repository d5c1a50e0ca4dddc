"""Exact completion of integer low-rank matrices by Approximate-and-Round.

Observed entries are rescaled by ``1/p``, the SVD is truncated at a spectral
cutoff and the result is rounded entrywise.  The cutoff comes from one of
three modes, and the mode used is always reported:

``override``     a cutoff given directly;
``incoherence``  ``(1 / (8 r)) * w_inf^-2``, with ``w_inf = sqrt(2 / N)`` when unknown;
``gap``          data driven: cut after the largest ratio ``sigma~_i / sigma~_{i+1}``, ``i <= r``.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_matrix
from .bounds import BoundParams, stability_check
from .exceptions import BadDensity, BadSpec, BoundViolated, ShapeMismatch
from .models import make_rng, rect_signal_summary

CUTOFF_MODES = ("auto", "override", "incoherence", "gap")


@dataclass(frozen=True)
class ObservationModel:
    """Each entry is observed independently with probability ``p``."""

    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise BadDensity("sampling density must lie in (0, 1]")

    def mask(self, shape):
        if self.p == 1:
            return np.ones(shape, dtype=bool)
        return make_rng(self.seed).random(shape) < self.p


def observe(A, model):
    """``A_ij / p`` on observed entries, 0 elsewhere; unbiased for ``A``."""
    A = as_matrix(A, "A")
    if model.p == 1:
        return A.copy()
    return np.where(model.mask(A.shape), A / model.p, 0.0)


@dataclass(frozen=True)
class CompletionConfig:
    r: int = 1
    w_inf: float = None
    threshold_override: float = None
    mode: str = "auto"

    def __post_init__(self):
        if self.r < 1:
            raise BadSpec("r must be at least 1")
        if self.w_inf is not None and not 0 < self.w_inf <= 1:
            raise BadSpec("w_inf must lie in (0, 1]")
        if self.mode not in CUTOFF_MODES:
            raise BadSpec(f"mode must be one of {CUTOFF_MODES}")
        if self.mode == "override" and self.threshold_override is None:
            raise BadSpec("override mode needs threshold_override")

    def resolved_mode(self):
        if self.mode != "auto":
            return self.mode
        return "override" if self.threshold_override is not None else "incoherence"

    def cutoff(self, sigma, shape):
        """Return ``(cutoff, mode)`` for singular values ``sigma`` of an ``m x n`` input."""
        mode = self.resolved_mode()
        if mode == "override":
            return float(self.threshold_override), mode
        if mode == "incoherence":
            w = self.w_inf if self.w_inf is not None else math.sqrt(2.0 / sum(shape))
            return 1.0 / (8 * self.r * w ** 2), mode
        k = min(self.r, sigma.size - 1)
        if k < 1 or sigma[0] == 0:
            return (float(sigma[0]) if sigma.size else 0.0), mode
        with np.errstate(divide="ignore"):
            ratios = sigma[:k] / sigma[1:k + 1]
        s = int(np.argmax(ratios)) + 1
        return float(sigma[s - 1]), mode


def round_half_away(B):
    return np.sign(B) * np.floor(np.abs(B) + 0.5)


def approximate_and_round(A_tilde, cfg, return_info=False):
    """Truncate the SVD of ``A_tilde`` at the configured cutoff and round.

    ``info`` holds ``s_tilde``, the cutoff, the mode and the pre-rounding
    matrix ``B``.
    """
    A_tilde = as_matrix(A_tilde, "A_tilde")
    U, s, Vt = np.linalg.svd(A_tilde, full_matrices=False)
    cut, mode = cfg.cutoff(s, A_tilde.shape)
    s_tilde = int(np.count_nonzero(s >= cut))
    B = (U[:, :s_tilde] * s[:s_tilde]) @ Vt[:s_tilde]
    out = round_half_away(B) + 0.0
    if return_info:
        return out, {"s_tilde": s_tilde, "cutoff": cut, "mode": mode, "B": B,
                     "singular_values": s}
    return out


class ApproximateAndRound(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`approximate_and_round`.

    ``fit`` records the spectral diagnostics of the training matrix;
    ``transform`` completes any rescaled observation matrix.
    """

    def __init__(self, r=1, w_inf=None, threshold=None, mode="auto"):
        self.r = r
        self.w_inf = w_inf
        self.threshold = threshold
        self.mode = mode

    def _config(self):
        return CompletionConfig(self.r, self.w_inf, self.threshold, self.mode)

    def fit(self, X, y=None):
        _, info = approximate_and_round(X, self._config(), return_info=True)
        self.n_features_in_ = as_matrix(X).shape[1]
        self.s_tilde_ = info["s_tilde"]
        self.cutoff_ = info["cutoff"]
        self.mode_ = info["mode"]
        self.singular_values_ = info["singular_values"]
        return self

    def transform(self, X):
        X = as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatch("column count differs from the fitted matrix")
        return approximate_and_round(X, self._config())


def bounded_noise(shape, B, rng=None, kind="rademacher"):
    """Mean-zero noise bounded by ``B``: ``B * (+-1)`` or uniform integers in ``[-B, B]``."""
    rng = make_rng(0) if rng is None else rng
    if B == 0:
        return np.zeros(shape)
    if kind == "rademacher":
        return B * rng.choice(np.array([-1.0, 1.0]), size=shape)
    if kind == "uniform_int":
        return rng.integers(-int(B), int(B) + 1, size=shape).astype(np.float64)
    raise BadSpec(f"unknown noise kind {kind!r}")


def complete_noisy(A, X, model, cfg, return_info=False):
    """Observe ``A + X`` and complete; the recovery target is ``A``."""
    A = as_matrix(A, "A")
    X = np.zeros_like(A) if X is None else as_matrix(X, "X")
    if X.shape != A.shape:
        raise ShapeMismatch("noise and signal shapes differ")
    return approximate_and_round(observe(A + X, model), cfg, return_info)


def shift_for_nonzero(A, L):
    """``A + (L + 1) J``: every entry moves into ``[1, 2L + 1]``."""
    A = as_matrix(A, "A")
    if L < 0 or int(L) != L:
        raise BoundViolated("L must be a non-negative integer")
    if np.max(np.abs(A)) > L:
        raise BoundViolated(f"entries exceed L={L} in magnitude")
    return A + (L + 1)


def unshift(A, L):
    return as_matrix(A, "A") - (L + 1)


@dataclass
class RecoveryReport:
    exact: bool
    wrong_entries: int
    max_abs_err_prerounding: float = None
    tie: bool = False

    def to_dict(self):
        return {"exact": self.exact, "wrong_entries": self.wrong_entries,
                "max_abs_err_prerounding": self.max_abs_err_prerounding,
                "tie": self.tie}


def check_recovery(A, A_hat, B=None):
    """Exact-recovery check; with the pre-rounding ``B`` also reports ``||A - B||_inf``.

    ``tie`` is set when some entry of ``B`` sits exactly half-way between integers.
    """
    A = as_matrix(A, "A")
    A_hat = as_matrix(A_hat, "A_hat")
    if A.shape != A_hat.shape:
        raise ShapeMismatch(f"{A.shape} vs {A_hat.shape}")
    wrong = int(np.count_nonzero(A != A_hat))
    margin, tie = None, False
    if B is not None:
        B = as_matrix(B, "B")
        if B.shape != A.shape:
            raise ShapeMismatch("B has the wrong shape")
        err = np.abs(A - B)
        margin = float(err.max())
        tie = bool(np.any(err == 0.5))
    return RecoveryReport(wrong == 0, wrong, margin, tie)


def completion_constant(A, r):
    """``(a + 1) * 2^18 * 7 r^3`` with ``a = max(sqrt(||A||_inf), 2)``."""
    a = max(math.sqrt(float(np.max(np.abs(A)))), 2.0)
    return (a + 1) * 2 ** 18 * 7 * r ** 3


def completion_stability(A, p, B=0.0, c=None, T=None):
    """Stability verdicts for the leading singular values of ``A`` under sampling noise.

    ``K = (||A||_inf + B) / p``, ``nu = 2``, ``tau = N^-3``; ``T`` defaults to
    ``(||A||_inf + B) sqrt(N / p)`` and ``c`` to :func:`completion_constant`.
    """
    A = as_matrix(A, "A")
    s = np.linalg.svd(A, compute_uv=False)
    r = int(np.count_nonzero(s > 1e-10 * s[0]))
    summary, _ = rect_signal_summary(A, r)
    amax = float(np.max(np.abs(A))) + B
    N = sum(A.shape)
    K = amax / p
    T = amax * math.sqrt(N / p) if T is None else T
    params = BoundParams(r=r, tau=min(0.5, float(N) ** -3), nu=2, K=K, T=T)
    c = completion_constant(A, r) if c is None else c
    return [stability_check(summary, i, params, c=c) for i in range(1, r + 1)]
