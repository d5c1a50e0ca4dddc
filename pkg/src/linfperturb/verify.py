"""Monte Carlo harness: draw instances, measure perturbations, score the bounds."""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundParams, CoordinateContext, bound_report, stability_check
from .exceptions import LinfPerturbError, SizeCap, TooFewTrials
from .linalg import align_sign, spectral_decompose, spectral_norm, zero_out
from .models import draw_noise, make_rng, signal_summary

FLAG_NAMES = ("dk_ok", "ovw_ok", "linf_main_ok", "linf_refined_ok", "deloc_ok")
_BOUND_OF_FLAG = {"dk_ok": "dk", "ovw_ok": "ovw_l2", "linf_main_ok": "linf_main",
                  "linf_refined_ok": "linf_refined"}

TRIAL_COLUMNS = (
    "seed", "trial", "n", "i", "normE", "sigma", "sigma_tilde", "delta", "kappa",
    "u_inf", "u_tilde_inf", "l2", "linf", "eps1", "eps2", "dk", "ovw_l2",
    "linf_main", "linf_refined", "verdict", *FLAG_NAMES,
)


SWEEP_COLUMNS = (
    "n", "i", "trials",
    *[f"{kind}_{flag}" for flag in FLAG_NAMES for kind in ("violations", "unmet")],
    *[f"{stat}_ratio_{b}" for b in _BOUND_OF_FLAG.values() for stat in ("mean", "max")],
    "mean_newbound_ratio", "p99_newbound_ratio",
)


class TrialError(LinfPerturbError):
    """A generator or decomposition failure, tagged with the trial index."""

    def __init__(self, trial, cause):
        super().__init__(f"trial {trial}: {cause}")
        self.trial = trial
        self.cause = cause


@dataclass
class TrialRecord:
    seed: int
    trial: int
    i: int
    n: int
    normE: float
    sigma: float
    sigma_tilde: float
    delta: float
    kappa: float
    u_inf: float
    u_tilde_inf: float
    l2: float
    linf: float
    bounds: object
    verdict: str = None
    flags: dict = field(default_factory=dict)
    instance: dict = field(default_factory=dict)

    @property
    def newbound_ratio(self):
        """``||u~ - u||_inf / (||U||_inf ||u~ - u||_2)``; 0 when the error vanishes."""
        denom = self.u_inf * self.l2
        return self.linf / denom if denom > 0 else 0.0

    def row(self):
        b = self.bounds
        out = {
            "seed": self.seed, "trial": self.trial, "n": self.n, "i": self.i,
            "normE": self.normE, "sigma": self.sigma, "sigma_tilde": self.sigma_tilde,
            "delta": self.delta, "kappa": self.kappa, "u_inf": self.u_inf,
            "u_tilde_inf": self.u_tilde_inf, "l2": self.l2, "linf": self.linf,
            "eps1": b.eps1, "eps2": b.eps2, "dk": b.dk, "ovw_l2": b.ovw_l2,
            "linf_main": b.linf_main, "linf_refined": b.linf_refined,
            "verdict": self.verdict,
        }
        out.update({k: self.flags.get(k) for k in FLAG_NAMES})
        return out


def _flag(measured, bound):
    return None if bound is None else bool(measured <= bound)


class _Signal:
    """Caches the decomposition of a fixed signal; rebuilds it for callables."""

    def __init__(self, signal, r, k):
        self.fixed = not callable(signal)
        self.signal = signal
        self.r, self.k = r, k
        if self.fixed:
            self.A = np.asarray(signal, dtype=np.float64)
            self.parts = self._decompose(self.A)

    def _decompose(self, A):
        d = spectral_decompose(A, k=self.k)
        r = d.rank if self.r is None else self.r
        return d, signal_summary(d, r)

    def get(self, rng):
        if self.fixed:
            return (self.A,) + self.parts
        A = np.asarray(self.signal(rng), dtype=np.float64)
        return (A,) + self._decompose(A)


def _one_trial(t, sig, noise, indices, seed, params, labels, T, need):
    rng = make_rng(seed, t)
    try:
        A, dA, summary = sig.get(rng)
        n = A.shape[0]
        E = draw_noise(noise, n, signal=A, labels=labels, rng=rng)
        normE = spectral_norm(E)
        dT = spectral_decompose(A + E, k=need)
    except LinfPerturbError as exc:
        raise TrialError(t, exc) from exc
    p = params
    c1 = p.delocalization_constant
    out = []
    for i in indices:
        u = dA.vector(i)
        ut = align_sign(u, dT.vector(i))
        diff = ut - u
        l2 = float(np.linalg.norm(diff))
        linf = float(np.max(np.abs(diff)))
        ut_inf = float(np.max(np.abs(ut)))
        rep = bound_report(summary, i, normE, p, l2_err=l2, n=n)
        verdict = None
        if T is not None:
            verdict = stability_check(summary, i, p, n=n, T=T).verdict
        kappa = summary.kappa[i - 1]
        flags = {
            "dk_ok": _flag(l2, rep.dk),
            "ovw_ok": _flag(l2, rep.ovw_l2),
            "linf_main_ok": _flag(linf, rep.linf_main),
            "linf_refined_ok": _flag(linf, rep.linf_refined),
            "deloc_ok": bool(ut_inf <= c1 * kappa * summary.u_inf),
        }
        out.append(TrialRecord(
            seed=seed, trial=t, i=i, n=n, normE=normE, sigma=summary.sigma[i - 1],
            sigma_tilde=dT.value(i), delta=summary.delta[i - 1], kappa=kappa,
            u_inf=summary.u_inf, u_tilde_inf=ut_inf, l2=l2, linf=linf,
            bounds=rep, verdict=verdict, flags=flags,
            instance={"n": n, "r": summary.r, "noise": noise.kind, "scale": noise.scale},
        ))
    return out


def run_trials(signal, noise, indices=(1,), trials=100, seed=0, params=None,
               labels=None, T=None, threads=1):
    """Run ``trials`` independent perturbation experiments.

    Parameters
    ----------
    signal : ndarray or callable
        A fixed symmetric signal, or ``signal(rng) -> ndarray`` to redraw it
        from the per-trial generator.
    noise : NoiseSpec
    indices : sequence of int
        Singular indices (1-based) to measure.
    seed : int
        Master seed; trial ``t`` uses the stream ``(seed, t)``.
    params : BoundParams, optional
        Constants for the bound evaluations.  The signal summary uses rank
        ``max(params.r, max(indices))``.
    T : float, optional
        Norm quantile for the stability verdict; omitted means no verdict.
    threads : int
        Worker threads; the output order and content do not depend on it.

    Returns
    -------
    list of TrialRecord, ordered by ``(trial, i)``.
    """
    if trials < 1:
        raise TooFewTrials("need at least one trial")
    indices = tuple(int(i) for i in indices)
    need = max(indices) + 1
    if params is None:
        n = np.asarray(signal).shape[0] if not callable(signal) else 2
        params = BoundParams(r=max(indices), K=noise.entry_bound(n) or 1.0)
    r = max(params.r, max(indices))
    sig = _Signal(signal, r, max(need, r + 1))
    if T is None:
        T = params.T

    def job(t):
        return _one_trial(t, sig, noise, indices, seed, params, labels, T, need)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(job, range(trials)))
    else:
        chunks = [job(t) for t in range(trials)]
    return [rec for chunk in chunks for rec in chunk]


@dataclass
class SweepResult:
    """Per-cell aggregate of trial records."""

    cells: dict

    def rows(self):
        out = []
        for key, agg in sorted(self.cells.items()):
            out.append({**dict(key), **agg})
        return out


def _percentile(xs, q):
    return float(np.percentile(xs, q)) if len(xs) else math.nan


def aggregate(records, axes=("n", "i")):
    """Group records by ``axes`` and summarize violations and ratios.

    ``violations_<flag>`` counts records whose bound was evaluated and
    exceeded; ``unmet_<flag>`` counts records where the precondition failed.
    """
    groups = {}
    for rec in records:
        key = tuple((a, getattr(rec, a) if hasattr(rec, a) else rec.instance[a])
                    for a in axes)
        groups.setdefault(key, []).append(rec)
    cells = {}
    for key, recs in groups.items():
        # canonical order keeps float sums independent of arrival order
        recs = sorted(recs, key=lambda r: (r.seed, r.trial, r.i))
        agg = {"trials": len(recs)}
        for flag in FLAG_NAMES:
            vals = [r.flags.get(flag) for r in recs]
            agg[f"violations_{flag}"] = sum(v is False for v in vals)
            agg[f"unmet_{flag}"] = sum(v is None for v in vals)
        for flag, name in _BOUND_OF_FLAG.items():
            measured = "linf" if name.startswith("linf") else "l2"
            ratios = [getattr(r, measured) / getattr(r.bounds, name) for r in recs
                      if getattr(r.bounds, name)]
            agg[f"mean_ratio_{name}"] = float(np.mean(ratios)) if ratios else math.nan
            agg[f"max_ratio_{name}"] = float(np.max(ratios)) if ratios else math.nan
        nb = [r.newbound_ratio for r in recs]
        agg["mean_newbound_ratio"] = float(np.mean(nb))
        agg["p99_newbound_ratio"] = _percentile(nb, 99)
        cells[key] = agg
    return SweepResult(cells)


@dataclass
class DeterministicReport:
    i: int
    coordinates: list
    assumptions_hold: int
    bound_holds_given_assumptions: int
    violations: list

    @property
    def ok(self):
        return not self.violations


def verify_deterministic(A, H, i, r=None, C0=None, max_n=300):
    """Evaluate the leave-one-out coordinate bound at every coordinate.

    A coordinate counts as a violation only if all three assumptions hold and
    the measured error still exceeds the bound (1e-9 slack).
    """
    n = np.asarray(A).shape[0]
    if n > max_n:
        raise SizeCap(f"n={n} exceeds the per-coordinate cap {max_n}")
    ctx = CoordinateContext(A, H, i, r=r, C0=C0)
    coords = [ctx.evaluate(l) for l in range(n)]
    held = [c for c in coords if c.assumptions_hold]
    good = [c for c in held if c.lhs <= c.bound + 1e-9]
    bad = [c.l for c in held if c.lhs > c.bound + 1e-9]
    return DeterministicReport(i, coords, len(held), len(good), bad)


def verify_delocalization(records, r=None, calibrated=10.0):
    """Ratios ``||u~_i||_inf / (kappa_i ||U||_inf)`` against the lemma constant."""
    if r is None:
        r = max((rec.instance.get("r", 1) for rec in records), default=1)
    ratios = [rec.u_tilde_inf / (rec.kappa * rec.u_inf) for rec in records]
    c1 = BoundParams(r=r).delocalization_constant
    mx = max(ratios) if ratios else 0.0
    return {
        "trials": len(ratios),
        "ratios": ratios,
        "max_ratio": mx,
        "theorem_constant": c1,
        "within_theorem_constant": mx <= c1,
        "calibrated_constant": mx,
        "calibrated_limit": calibrated,
        "within_calibrated": mx <= calibrated,
    }


@dataclass
class FactsReport:
    instances: int = 0
    weyl_checks: int = 0
    weyl_violations: int = 0
    interlacing_checks: int = 0
    interlacing_violations: int = 0
    sign_checks: int = 0
    sign_violations: int = 0

    @property
    def ok(self):
        return not (self.weyl_violations or self.interlacing_violations
                    or self.sign_violations)


def verify_facts(pairs, alpha_draws=3, seed=0, slack=1e-8):
    """Check Weyl, interlacing and sign preservation on ``(A, H)`` pairs.

    Sign preservation: whenever ``|lambda_j(A)| > ||H||`` the ``j``-th
    eigenvalue of ``A + H`` (in decreasing order) has the same sign.
    """
    rep = FactsReport()
    for t, (A, H) in enumerate(pairs):
        rng = make_rng(seed, t)
        A = np.asarray(A, dtype=np.float64)
        H = np.asarray(H, dtype=np.float64)
        n = A.shape[0]
        normH = spectral_norm(H)
        s = np.linalg.svd(A, compute_uv=False)
        st = np.linalg.svd(A + H, compute_uv=False)
        rep.instances += 1
        rep.weyl_checks += n
        rep.weyl_violations += int(np.sum(np.abs(st - s) > normH + slack * max(1.0, s[0])))

        lam = np.linalg.eigvalsh(A)[::-1]
        lam_t = np.linalg.eigvalsh(A + H)[::-1]
        big = np.abs(lam) > normH
        rep.sign_checks += int(big.sum())
        rep.sign_violations += int(np.sum(np.sign(lam[big]) != np.sign(lam_t[big])))

        for _ in range(alpha_draws):
            alpha = np.flatnonzero(rng.random(n) < rng.random())
            rep.interlacing_checks += 1
            if spectral_norm(zero_out(H, alpha)) > normH + slack:
                rep.interlacing_violations += 1
    return rep


def verify_singular_tails(signal, noise, k, t_grid, trials=2000, seed=0, K=None,
                          labels=None, threads=1):
    """Empirical ``P(sigma~_k < sigma_k - t)`` against ``4 * 9^k exp(-t^2 / (128 K^2))``.

    A grid point is flagged when the frequency exceeds the bound by more than
    three binomial standard errors.
    """
    if trials < 500:
        raise TooFewTrials("tail suites need at least 500 trials")
    A = np.asarray(signal, dtype=np.float64)
    n = A.shape[0]
    sigma_k = float(np.sort(np.abs(np.linalg.eigvalsh(A)))[::-1][k - 1])
    K = noise.entry_bound(n, A) if K is None else K

    def job(t):
        E = draw_noise(noise, n, signal=A, labels=labels, rng=make_rng(seed, t))
        return float(np.sort(np.abs(np.linalg.eigvalsh(A + E)))[::-1][k - 1])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            st = np.array(list(ex.map(job, range(trials))))
    else:
        st = np.array([job(t) for t in range(trials)])
    rows = []
    for t in t_grid:
        freq = float(np.mean(st < sigma_k - t))
        se = math.sqrt(max(freq * (1 - freq), 0.0) / trials)
        bound = 4 * 9.0 ** k * math.exp(-t ** 2 / (128 * K ** 2))
        rows.append({"t": float(t), "frequency": freq, "se": se, "bound": bound,
                     "flagged": freq > bound + 3 * se})
    return rows


def leave_alpha_out(H, alpha):
    """``H`` with the rows and columns in ``alpha`` zeroed."""
    return zero_out(H, alpha)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(fh, rows, columns):
    """Write ``rows`` (dicts) with a fixed column order; floats use ``repr``."""
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh, "w", newline="") as f:
            return write_csv(f, rows, columns)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])


def write_records_csv(fh, records):
    write_csv(fh, [rec.row() for rec in records], TRIAL_COLUMNS)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dump_json(fh, obj):
    """Deterministic JSON: sorted keys, non-finite floats as strings."""
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh, "w") as f:
            f.write(text)
    else:
        fh.write(text)
