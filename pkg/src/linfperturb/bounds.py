"""Numeric evaluation of the perturbation bounds and stability predicates.

All logarithms are natural.  Every theorem constant has a default equal to the
published value and can be overridden through :class:`BoundParams`; the
"calibrated" constants reported by the harness are the smallest values that
make a bound hold over a set of trials.

Bounds whose precondition fails evaluate to ``None``; nothing here raises on
a failed precondition, so sweep tables keep a fixed shape.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import NonPositiveInput, RankExceeded, TooFewTrials
from .linalg import (align_sign, leave_one_out_vector, spectral_decompose,
                     spectral_norm, zero_out)
from .models import draw_noise, make_rng, signal_summary

LOG_BASE = "e"


def _prod(*factors):
    # 0 * inf counts as 0: a vanishing factor kills the term
    if any(f == 0 for f in factors):
        return 0.0
    return math.prod(factors)


@dataclass(frozen=True)
class BoundParams:
    """Constants and noise parameters shared by the bound evaluators.

    ``C0 ... c_corollary`` are optional overrides of the published constants;
    leave them ``None`` to use the formulas in terms of ``r`` and ``c0``.
    """

    r: int = 1
    c0: float = 1.0
    tau: float = 0.1
    nu: int = 1
    K: float = 1.0
    T: float = None
    C0: float = None
    C_r: float = None
    c1_r: float = None
    c_main: float = None
    c_refined: float = None
    c_corollary: float = None
    C_dk: float = 2.0 * math.sqrt(2.0)
    C_ovw: float = 1.0

    def __post_init__(self):
        if self.r < 1 or self.c0 <= 0 or not 0 < self.tau < 1:
            raise NonPositiveInput("need r >= 1, c0 > 0 and 0 < tau < 1")
        if self.nu not in (1, 2):
            raise NonPositiveInput("nu must be 1 or 2")
        for name in ("C0", "C_r", "c1_r", "c_main", "c_refined", "c_corollary"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise NonPositiveInput(f"{name} must be positive")
        if self.K < 0 or (self.T is not None and self.T < 0):
            raise NonPositiveInput("K and T must be non-negative")

    @property
    def coordinate_constant(self):
        return self.C0 if self.C0 is not None else 272 * 4 * self.r ** 1.5

    @property
    def failure_constant(self):
        return self.C_r if self.C_r is not None else 1000 * 9.0 ** (2 * self.r)

    @property
    def delocalization_constant(self):
        return self.c1_r if self.c1_r is not None else 2500 * self.r ** 1.5

    @property
    def main_constant(self):
        if self.c_main is not None:
            return self.c_main
        return 2.0 ** 11 * (self.c0 + 1) * self.r ** 3

    @property
    def refined_constant(self):
        if self.c_refined is not None:
            return self.c_refined
        return 2.0 ** 17 * (self.c0 + 1) * self.r ** 3

    @property
    def corollary_constant(self):
        return self.c_corollary if self.c_corollary is not None else self.main_constant

    def constants(self):
        return {
            "C0": self.coordinate_constant,
            "C_r": self.failure_constant,
            "c1_r": self.delocalization_constant,
            "c_main": self.main_constant,
            "c_refined": self.refined_constant,
            "c_corollary": self.corollary_constant,
            "C_dk": self.C_dk,
            "C_ovw": self.C_ovw,
        }


def davis_kahan(normE, delta_i, C=2.0 * math.sqrt(2.0)):
    """``C * ||E|| / delta_i`` when ``delta_i >= 2 ||E||``, else ``None``."""
    if normE < 0 or delta_i < 0:
        raise NonPositiveInput("norm and gap must be non-negative")
    if delta_i < 2 * normE:
        return None
    if normE == 0:
        return 0.0
    return float(C * normE / delta_i)


def ovw_l2(K, r, delta1, sigma1, normE, C0=1.0):
    """Random-noise l2 bound ``C0 [K sqrt(r)/delta + ||E||/sigma + ||E||^2/(delta sigma)]``."""
    if K < 0 or normE < 0:
        raise NonPositiveInput("K and ||E|| must be non-negative")
    if r < 1 or delta1 <= 0 or sigma1 <= 0 or C0 <= 0:
        raise NonPositiveInput("r, delta, sigma and C0 must be positive")
    return float(C0 * (K * math.sqrt(r) / delta1 + normE / sigma1
                       + normE ** 2 / (delta1 * sigma1)))


def _check_common(summary, i, l2_err, normE, K):
    summary.check_index(i)
    if l2_err < 0 or normE < 0 or K < 0:
        raise NonPositiveInput("errors, norms and K must be non-negative")


def _incoherence(summary):
    return summary.w_inf if summary.N is not None else summary.u_inf


def linf_main(summary, i, l2_err, normE, K, n=None, c=None):
    """Infinity-norm bound for bounded noise with small ``K``.

    ``c ||U||_inf (kappa_i l2 + eps1 + kappa_i eps2 K sqrt(log n)) + c K sqrt(log n) / sigma_i``.
    Pass the Davis-Kahan/OVW value as ``l2_err`` when the true error is unknown.
    """
    _check_common(summary, i, l2_err, normE, K)
    n = summary.dim if n is None else n
    c = 2.0 ** 12 * summary.r ** 3 if c is None else c
    sigma, delta, kappa = summary.sigma[i - 1], summary.delta[i - 1], summary.kappa[i - 1]
    klog = K * math.sqrt(math.log(n))
    eps1 = normE / sigma
    eps2 = math.inf if delta == 0 else 1.0 / delta
    inner = kappa * l2_err + eps1 + _prod(kappa, eps2, klog)
    return float(c * summary.u_inf * inner + c * klog / sigma)


def linf_refined(summary, i, l2_err, normE, K, n=None, c=None):
    """Large-``K`` variant: the last term becomes ``c sqrt(K n) kappa_i ||U||_inf log n / sigma_i``."""
    _check_common(summary, i, l2_err, normE, K)
    n = summary.dim if n is None else n
    c = 2.0 ** 18 * summary.r ** 3 if c is None else c
    sigma, delta, kappa = summary.sigma[i - 1], summary.delta[i - 1], summary.kappa[i - 1]
    inc = _incoherence(summary)
    eps1 = normE / sigma
    eps2 = math.inf if delta == 0 else 1.0 / delta
    inner = kappa * l2_err + eps1 + _prod(kappa, eps2, K * math.sqrt(math.log(n)))
    tail = c * math.sqrt(K * n) * kappa * inc * math.log(n) / sigma
    return float(c * summary.u_inf * inner + tail)


def linf_corollary(summary, normE, K, n=None, c=None):
    """Leading-vector bound with the l2 error replaced by its random-noise estimate."""
    _check_common(summary, 1, 0.0, normE, K)
    n = summary.dim if n is None else n
    c = 2.0 ** 12 * summary.r ** 3 if c is None else c
    sigma, delta = summary.sigma[0], summary.delta[0]
    klog = K * math.sqrt(math.log(n))
    inner = normE / sigma + klog / delta + normE ** 2 / (sigma * delta)
    return float(c * summary.u_inf * inner + c * klog / sigma)


@dataclass
class CoordinateReport:
    """One coordinate of the deterministic leave-one-out bound."""

    l: int
    i: int
    lhs: float
    bound: float
    assumption_1: bool
    assumption_2: bool
    assumption_3: bool
    margin_1: float
    margin_2: float
    margin_3: float
    a_l: float
    loo_inner: float
    row_inf: float

    @property
    def assumptions_hold(self):
        return self.assumption_1 and self.assumption_2 and self.assumption_3

    @property
    def violated(self):
        """Bound fails although every assumption holds (1e-9 slack)."""
        return self.assumptions_hold and self.lhs > self.bound + 1e-9


def _ratio(lhs, rhs):
    if rhs == 0:
        return math.inf if lhs > 0 else 0.0
    return lhs / rhs


class CoordinateContext:
    """Shared pieces of the per-coordinate bound for a fixed ``(A, H, i)``.

    Decomposes ``A`` and ``A + H`` once; :meth:`evaluate` then only needs the
    decomposition of the leave-one-out matrix ``A + H^{l}``.
    """

    def __init__(self, A, H, i, r=None, C0=None):
        self.A = np.asarray(A, dtype=np.float64)
        self.H = np.asarray(H, dtype=np.float64)
        self.dA = spectral_decompose(self.A)
        self.r = self.dA.rank if r is None else int(r)
        if not 1 <= i <= self.r:
            raise RankExceeded(f"index {i} outside 1..{self.r}")
        self.i = i
        self.summary = signal_summary(self.dA, self.r)
        self.C0 = 272 * 4 * self.r ** 1.5 if C0 is None else C0
        self.U = self.dA.leading(self.r)
        self.u = self.dA.vector(i)
        self.dT = spectral_decompose(self.A + self.H)
        self.u_tilde = align_sign(self.u, self.dT.vector(i))
        self.l2 = float(np.linalg.norm(self.u_tilde - self.u))
        self.normH = spectral_norm(self.H)
        s = self.summary
        self.sigma = s.sigma[i - 1]
        self.delta = s.delta[i - 1]
        self.kappa = s.kappa[i - 1]
        self.eps1 = self.normH / self.sigma
        self.eps2 = math.inf if self.delta == 0 else 1.0 / self.delta

    def evaluate(self, l):
        i, r, n = self.i, self.r, self.A.shape[0]
        x = leave_one_out_vector(self.H, l)
        dL = spectral_decompose(self.A + zero_out(self.H, [l]))
        a_l = float(np.linalg.norm(dL.leading(r).T @ x))
        loo_inner = abs(float(dL.vector(i) @ x))
        row_inf = float(np.max(np.abs(self.U[l])))

        rhs1 = self.C0 * self.normH
        rhs2 = self.C0 * max(a_l, self.kappa * self.normH * self.summary.u_inf)
        s_tilde = self.dT.value(i)
        above = dL.value(i + 1) if i + 1 <= n else math.inf
        below = dL.value(i - 1) if i > 1 else math.inf
        gap3 = min(abs(s_tilde - above), abs(s_tilde - below))
        rhs3 = self.delta / 2

        bound = (self.C0 * row_inf
                 * (self.kappa * self.l2 + self.eps1 + _prod(a_l, self.kappa, self.eps2))
                 + 256 * r * loo_inner / self.sigma)
        lhs = abs(float(self.u_tilde[l] - self.u[l]))
        return CoordinateReport(
            l=int(l), i=i, lhs=lhs, bound=float(bound),
            assumption_1=self.sigma > rhs1, assumption_2=self.delta > rhs2,
            assumption_3=gap3 > rhs3,
            margin_1=_ratio(self.sigma, rhs1), margin_2=_ratio(self.delta, rhs2),
            margin_3=_ratio(gap3, rhs3),
            a_l=a_l, loo_inner=loo_inner, row_inf=row_inf,
        )


def coordinate_bound(A, H, i, l, r=None, C0=None):
    """Deterministic entrywise bound ``|u~_il - u_il| <= ...`` for one coordinate ``l``."""
    return CoordinateContext(A, H, i, r=r, C0=C0).evaluate(l)


@dataclass
class StabilityReport:
    cond_a: bool
    cond_b: bool
    cond_c: bool
    cond_strong: bool
    margins: dict
    verdict: str
    c: float
    T: float
    K: float
    nu: int
    n: int

    def to_dict(self):
        return asdict(self)


def stability_check(summary, i, params, n=None, c=None, T=None):
    """Evaluate the ``(c, tau, nu)`` stability conditions for ``(sigma_i, delta_i)``.

    ``c`` defaults to the main-theorem constant of ``params``; ``T`` to
    ``params.T``.  In the rectangular case ``N`` and ``||W||_inf`` are used.
    """
    summary.check_index(i)
    n = summary.dim if n is None else n
    c = params.main_constant if c is None else c
    T = params.T if T is None else T
    if T is None:
        raise NonPositiveInput("the norm quantile T must be supplied")
    K, nu = params.K, params.nu
    sigma, delta, kappa = summary.sigma[i - 1], summary.delta[i - 1], summary.kappa[i - 1]
    logn = math.log(n)

    rhs_a = c * T
    rhs_b = c * (K * logn ** (nu / 2) + T ** 2 / sigma)
    rhs_c = c * kappa * T * _incoherence(summary)
    rhs_s = c * math.sqrt(K * n) * logn ** (nu + 0.01)
    a, b, cc, s = sigma > rhs_a, delta > rhs_b, delta > rhs_c, sigma > rhs_s
    margins = {"a": _ratio(sigma, rhs_a), "b": _ratio(delta, rhs_b),
               "c": _ratio(delta, rhs_c), "strong": _ratio(sigma, rhs_s)}
    stable = a and b and cc
    verdict = "strongly_stable" if stable and s else "stable" if stable else "unstable"
    return StabilityReport(a, b, cc, s, margins, verdict, c, T, K, nu, n)


def estimate_T(spec, shape, tau, trials=None, mode="monte_carlo", signal=None,
               labels=None, c_bvh=1.0, C_completion=None):
    """High-probability level ``T`` for ``||E||``.

    ``monte_carlo``: empirical ``(1 - tau)`` quantile over ``trials`` seeded
    draws (needs ``trials >= ceil(10 / tau)``).  ``analytic``: the
    Bandeira-van Handel level ``4 sqrt(v) + K sqrt(4 c_bvh log N)`` with ``v``
    the maximal row variance.  ``completion``: ``C sqrt(N / p)``.
    """
    if not 0 < tau < 1:
        raise NonPositiveInput("tau must lie in (0, 1)")
    symmetric = np.isscalar(shape)
    N = int(shape) if symmetric else int(sum(shape))
    if spec.kind == "zero" or spec.scale == 0:
        return 0.0
    if mode == "monte_carlo":
        if trials is None or trials < math.ceil(10 / tau):
            raise TooFewTrials(f"need at least {math.ceil(10 / tau)} trials for tau={tau}")
        norms = [spectral_norm(draw_noise(spec, shape, signal, labels,
                                          rng=make_rng(spec.seed, t)))
                 for t in range(trials)]
        return float(np.quantile(norms, 1 - tau, method="inverted_cdf"))
    if mode == "analytic":
        n_max = int(shape) if symmetric else max(shape)
        v = N * spec.second_moment(n_max, signal)
        K = spec.entry_bound(n_max, signal)
        return 4 * math.sqrt(v) + K * math.sqrt(4 * c_bvh * math.log(N))
    if mode == "completion":
        if spec.kind != "completion_sampling":
            raise NonPositiveInput("completion mode needs completion_sampling noise")
        if C_completion is None:
            amax = float(np.max(np.abs(signal))) if signal is not None else 1.0
            C_completion = 4 * spec.scale * amax
        return C_completion * math.sqrt(N / spec.p)
    raise ValueError(f"unknown mode {mode!r}")


def singular_tail_bound(k, r, K, t, normE, sigma_tilde_k):
    """Tail bounds on the perturbation of the ``k``-th singular value."""
    if k < 1 or r < k or K <= 0 or sigma_tilde_k <= 0:
        raise NonPositiveInput("need 1 <= k <= r and positive K, sigma~_k")
    if t < 0 or normE < 0:
        raise NonPositiveInput("t and ||E|| must be non-negative")
    e = t ** 2 / (128 * K ** 2)
    return {
        "lower_tail_prob": 4 * 9.0 ** k * math.exp(-e),
        "upper_tail_bound_value": (t * math.sqrt(r) + 2 * math.sqrt(k) * normE ** 2 / sigma_tilde_k
                                   + k * normE ** 3 / sigma_tilde_k ** 2),
        "upper_tail_prob": 4 * 9.0 ** (2 * r) * math.exp(-r * e),
        "deviation_radius": 2 * r * (t + normE ** 2 / sigma_tilde_k
                                     + normE ** 3 / sigma_tilde_k ** 2),
        "deviation_prob": 8 * 9.0 ** (2 * r) * math.exp(-e),
    }


def hoeffding_tail(t, widths):
    """``P(|sum X_i| > t) <= 2 exp(-2 t^2 / sum (b_i - a_i)^2)``."""
    w2 = float(np.sum(np.square(widths)))
    if t < 0 or w2 <= 0:
        raise NonPositiveInput("need t >= 0 and a positive total width")
    return 2.0 * math.exp(-2.0 * t ** 2 / w2)


def hoeffding_unit_tail(t, K):
    """Tail of ``|x^T u|`` for a unit ``u`` and independent ``K``-bounded ``x``."""
    if t < 0 or K <= 0:
        raise NonPositiveInput("need t >= 0 and K > 0")
    return 2.0 * math.exp(-t ** 2 / (2.0 * K ** 2))


def hoeffding_corollary(C, n):
    """``P(|x^T u| >= C K sqrt(log n)) <= 2 n^{-C^2/2}``."""
    if C < 0 or n < 2:
        raise NonPositiveInput("need C >= 0 and n >= 2")
    return 2.0 * float(n) ** (-C ** 2 / 2)


def bernstein_tail(t, second_moments, K, weights=None):
    """Weighted Bernstein tail for independent, mean-zero, ``K``-bounded summands.

    With unit weights this is ``2 exp(-(t^2/2) / (sum E X_i^2 + K t / 3))``.
    """
    m2 = np.asarray(second_moments, dtype=np.float64)
    a = np.ones_like(m2) if weights is None else np.asarray(weights, dtype=np.float64)
    if t < 0 or K <= 0 or np.any(m2 < 0):
        raise NonPositiveInput("need t >= 0, K > 0, non-negative moments")
    var = float(np.sum(a ** 2 * m2))
    scale = var + K * float(np.max(np.abs(a))) * t / 3.0
    if scale == 0:
        return 2.0 if t == 0 else 0.0
    return 2.0 * math.exp(-(t ** 2 / 2.0) / scale)


@dataclass
class BoundReport:
    """Every bound evaluated for singular index ``i`` plus the inputs used."""

    i: int
    eps1: float
    eps2: float
    dk: float = None
    ovw_l2: float = None
    linf_main: float = None
    linf_refined: float = None
    linf_corollary: float = None
    coordinate: float = None
    inputs: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def row(self, prefix=""):
        out = {f"{prefix}{k}": v for k, v in asdict(self).items() if k != "inputs"}
        return out


def bound_report(summary, i, normE, params, l2_err=None, n=None):
    """Evaluate all bounds for index ``i``.

    When ``l2_err`` (the measured ``||u~_i - u_i||_2``) is missing, the OVW l2
    bound stands in for it in the infinity-norm formulas.
    """
    summary.check_index(i)
    n = summary.dim if n is None else n
    sigma, delta = summary.sigma[i - 1], summary.delta[i - 1]
    eps1 = normE / sigma
    eps2 = math.inf if delta == 0 else 1.0 / delta
    dk = davis_kahan(normE, delta, params.C_dk)
    ovw = None
    if delta > 0:
        ovw = ovw_l2(params.K, summary.r, delta, sigma, normE, params.C_ovw)
    l2 = l2_err if l2_err is not None else ovw
    main = refined = None
    if l2 is not None:
        main = linf_main(summary, i, l2, normE, params.K, n, params.main_constant)
        refined = linf_refined(summary, i, l2, normE, params.K, n, params.refined_constant)
    corollary = None
    if i == 1 and delta > 0:
        corollary = linf_corollary(summary, normE, params.K, n, params.corollary_constant)
    inputs = {
        "sigma_i": sigma, "delta_i": delta, "kappa_i": summary.kappa[i - 1],
        "u_inf": summary.u_inf, "w_inf": summary.w_inf, "normE": normE,
        "K": params.K, "n": n, "r": summary.r, "l2_err": l2_err,
        "log_base": LOG_BASE, **params.constants(),
    }
    return BoundReport(i, eps1, eps2, dk, ovw, main, refined, corollary, None, inputs)


def calibrated_constant(measured, unit_bound):
    """Smallest ``c`` with ``measured <= c * unit_bound`` for every pair."""
    measured = np.asarray(measured, dtype=np.float64)
    unit = np.asarray(unit_bound, dtype=np.float64)
    ok = unit > 0
    if np.any(~ok & (measured > 0)):
        return math.inf
    if not ok.any():
        return 0.0
    return float(np.max(measured[ok] / unit[ok]))
