import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from linfperturb import (BoundParams, NoiseSpec, adjacency_transform, align_sign,
                         bound_report, calibrated_constant, clique_signal,
                         coordinate_bound, davis_kahan, draw_noise, estimate_T,
                         integer_block_signal, linf_corollary, linf_main, linf_refined,
                         make_rng, ovw_l2, rect_signal_summary, signal_summary,
                         singular_tail_bound, spectral_decompose, spectral_norm,
                         stability_check)
from linfperturb.bounds import (bernstein_tail, hoeffding_corollary, hoeffding_tail,
                                hoeffding_unit_tail)
from linfperturb.cluster import planted_clique_graph
from linfperturb.exceptions import NonPositiveInput, RankExceeded, TooFewTrials
from linfperturb.models import SignalSummary
from linfperturb.verify import dump_json


def summary_1(sigma=100.0, delta=10.0, u_inf=0.1, n=100):
    return SignalSummary(1, (sigma,), sigma - delta, (delta,), (delta,), (1.0,),
                         u_inf, u_inf, n)


def test_constants_defaults_and_wiring():
    p = BoundParams(r=2, c0=3)
    assert p.coordinate_constant == pytest.approx(272 * 4 * 2 ** 1.5)
    assert p.failure_constant == 1000 * 9 ** 4
    assert p.delocalization_constant == pytest.approx(2500 * 2 ** 1.5)
    assert p.main_constant == 2 ** 11 * 4 * 8
    assert p.refined_constant / p.main_constant == 64
    assert BoundParams(c_main=7).main_constant == 7
    with pytest.raises(NonPositiveInput):
        BoundParams(nu=3)
    with pytest.raises(NonPositiveInput):
        BoundParams(tau=0)


def test_davis_kahan_examples():
    assert davis_kahan(0, 1) == 0
    assert davis_kahan(1, 2, C=1) == 0.5
    assert davis_kahan(1, 1.9) is None


def test_davis_kahan_default_constant_is_valid():
    # rank-one signal, the gap is sigma_1; the default constant must bound the error
    A, _ = clique_signal(60, 60)
    for t in range(20):
        E = draw_noise(NoiseSpec("rademacher", scale=0.4), 60, rng=make_rng(1, t))
        u = spectral_decompose(A).vector(1)
        v = spectral_decompose(A + E).vector(1)
        err = min(np.linalg.norm(u - v), np.linalg.norm(u + v))
        b = davis_kahan(spectral_norm(E), 60.0)
        assert b is not None and err <= b


def test_ovw_examples():
    assert ovw_l2(0, 1, 1, 1, 0) == 0
    assert ovw_l2(1, 1, 10, 100, 10, 1) == pytest.approx(0.3)
    with pytest.raises(NonPositiveInput):
        ovw_l2(1, 1, 0, 1, 1)


def test_ovw_gaussian_example_decreases():
    vals = []
    for n in (100, 200, 400, 800, 1600, 3200):
        K = 20 * math.sqrt(math.log(n))
        vals.append(ovw_l2(K, 1, n, n, 2 * math.sqrt(n)))
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_linf_main_examples():
    s = summary_1(u_inf=0.1)
    assert linf_main(s, 1, 0, 0, 0, c=1) == 0
    K = 1 / math.sqrt(math.log(100))
    assert linf_main(s, 1, 0.3, 10, K, n=100, c=1) == pytest.approx(0.06)
    with pytest.raises(RankExceeded):
        linf_main(s, 2, 0.3, 10, K, c=1)


def test_linf_refined_examples():
    s = summary_1(u_inf=0.1)
    assert linf_refined(s, 1, 0.3, 10, 0, n=100, c=1) == pytest.approx(0.1 * (0.3 + 0.1))
    n = 100
    val = linf_refined(s, 1, 0.3, 10, n, n=n, c=1)
    first = 0.1 * (0.3 + 0.1 + n * math.sqrt(math.log(n)) / 10)
    last = n * 0.1 * math.log(n) / 100
    assert val == pytest.approx(first + last)


def test_refined_smaller_on_completion_instance():
    A = integer_block_signal(1000, 1000, [500, 500], [500, 500], [[16, 18], [18, 16]])
    p = 0.35
    s, _ = rect_signal_summary(A, 2)
    K = 18 / p
    normE = 2000.0
    main = linf_main(s, 1, 0.1, normE, K, c=1)
    refined = linf_refined(s, 1, 0.1, normE, K, c=1)
    assert refined < main


def test_linf_main_hidden_clique_margin():
    # planted clique in G(n, 1/2) after the +-1 transform; the calibrated bound
    # must stay under the quarter-margin that keeps the FSC threshold exact
    n, k = 1000, 200
    meas, unit = [], []
    for t in range(20):
        g = planted_clique_graph(n, k, random_state=make_rng(4, t))
        A, _ = clique_signal(n, k, members=g.members)
        M = adjacency_transform(g.adjacency, 0.5)
        d = spectral_decompose(A, k=2)
        s = signal_summary(d, 1)
        u = d.vector(1)
        diff = u - align_sign(u, spectral_decompose(M, k=1).vector(1))
        meas.append(np.max(np.abs(diff)))
        unit.append(linf_main(s, 1, np.linalg.norm(diff), spectral_norm(M - A), 1.0, c=1))
    c = calibrated_constant(meas, unit)
    assert max(c * x for x in unit) <= 0.25 / math.sqrt(k)


def test_linf_corollary_form():
    s = summary_1(sigma=50, delta=50, u_inf=0.2, n=100)
    K = 1.0
    kl = math.sqrt(math.log(100))
    expect = 0.2 * (5 / 50 + kl / 50 + 25 / 2500) + kl / 50
    assert linf_corollary(s, 5, K, c=1) == pytest.approx(expect)


def test_coordinate_bound_zero_noise():
    A, _ = clique_signal(12, 6, random_state=2)
    for l in (0, 5, 11):
        rep = coordinate_bound(A, np.zeros((12, 12)), 1, l)
        assert rep.lhs == 0 and rep.bound >= 0
        assert rep.assumptions_hold


def test_coordinate_bound_small_noise_clique():
    n = 20
    A, _ = clique_signal(n, n)
    H = draw_noise(NoiseSpec("rademacher", scale=1e-4, seed=6), n)
    for l in range(n):
        rep = coordinate_bound(A, H, 1, l)
        assert rep.assumptions_hold
        assert rep.lhs <= rep.bound


def test_coordinate_bound_large_noise_fails_assumption_1():
    # 0.01-scaled noise is too large for the 1088 constant at sigma = 20
    n = 20
    A, _ = clique_signal(n, n)
    H = draw_noise(NoiseSpec("rademacher", scale=0.01, seed=6), n)
    rep = coordinate_bound(A, H, 1, 0)
    assert not rep.assumption_1
    assert not rep.violated


def test_coordinate_assumption_3_counter_instance():
    A = np.diag([10.0, 9.99, 0.0, 0.0])
    H = np.diag([0.0, 0.008, 0.0, 0.0])
    rep = coordinate_bound(A, H, 1, 0, r=2)
    assert not rep.assumption_3
    assert not rep.assumptions_hold
    assert not rep.violated


def test_stability_examples():
    s0 = SignalSummary(2, (5.0, 5.0), 0.0, (0.0, 5.0), (0.0, 0.0), (1.0, 1.0), 0.5, 0.5, 10)
    rep = stability_check(s0, 1, BoundParams(K=0, T=0, r=2), c=1)
    assert not rep.cond_b and not rep.cond_c
    assert rep.verdict == "unstable"
    assert rep.margins["b"] == 0

    c, T = 1.0, 10.0
    s = SignalSummary(1, (20.0,), 0.0, (1e6,), (1e6,), (1.0,), 0.1, 0.1, 10 ** 6)
    rep = stability_check(s, 1, BoundParams(K=1.0, T=T), c=c)
    assert rep.cond_a and rep.cond_b and rep.cond_c and not rep.cond_strong
    assert rep.verdict == "stable"
    assert rep.margins["a"] == pytest.approx(2.0)


def test_stability_clique_hand_recomputed():
    n, k = 1000, 250
    A, _ = clique_signal(n, k, random_state=0)
    s = signal_summary(spectral_decompose(A), 1)
    rep = stability_check(s, 1, BoundParams(K=1.0, T=3 * math.sqrt(n)), c=1)
    # sigma/T, delta/(sqrt(log n) + T^2/sigma), delta/(T u_inf), sigma/(sqrt(n) log^1.01 n)
    assert rep.margins["a"] == pytest.approx(2.63523138347365, rel=1e-9)
    assert rep.margins["b"] == pytest.approx(6.471945520536385, rel=1e-9)
    assert rep.margins["c"] == pytest.approx(41.66666666666667, rel=1e-9)
    assert rep.margins["strong"] == pytest.approx(1.1225603432725917, rel=1e-9)
    assert rep.verdict == "strongly_stable"
    full = stability_check(s, 1, BoundParams(K=1.0, T=3 * math.sqrt(n)))
    assert full.verdict == "unstable"


def test_estimate_T_zero_and_rademacher():
    assert estimate_T(NoiseSpec("zero"), 50, 0.1, trials=100) == 0
    n = 500
    T = estimate_T(NoiseSpec("rademacher", seed=2), n, 0.1, trials=200)
    assert 1.8 * math.sqrt(n) <= T <= 2.2 * math.sqrt(n)
    with pytest.raises(TooFewTrials):
        estimate_T(NoiseSpec("rademacher"), n, 0.1, trials=99)


def test_estimate_T_analytic_dominates_monte_carlo():
    settings = []
    for kind in ("rademacher", "truncated_gaussian", "centered_edge"):
        for n in (40, 80, 160):
            for scale in (0.5, 2.0):
                settings.append(NoiseSpec(kind, seed=n, scale=scale,
                                          p=0.2 if kind == "centered_edge" else None))
    wins = sum(estimate_T(s, n_, 0.2, mode="analytic")
               >= estimate_T(s, n_, 0.2, trials=50)
               for s, n_ in ((s, 40 * 2 ** (i % 3)) for i, s in enumerate(settings)))
    assert wins >= 0.95 * len(settings)


def test_estimate_T_completion_mode():
    A = np.full((20, 30), 3.0)
    spec = NoiseSpec("completion_sampling", p=0.5)
    assert estimate_T(spec, (20, 30), 0.1, mode="completion", signal=A,
                      C_completion=2.0) == pytest.approx(2 * math.sqrt(50 / 0.5))


def test_singular_tail_examples():
    r = singular_tail_bound(1, 1, 1.0, math.sqrt(128), 0, 1)
    assert r["lower_tail_prob"] == pytest.approx(4 * 9 * math.exp(-1))
    probs = [singular_tail_bound(1, 2, 1.0, t, 1.0, 10.0)["lower_tail_prob"]
             for t in range(0, 200, 10)]
    assert all(a > b for a, b in zip(probs, probs[1:]))
    assert probs[-1] < 1e-30
    with pytest.raises(NonPositiveInput):
        singular_tail_bound(2, 1, 1.0, 1.0, 1.0, 1.0)


def test_tail_helpers_examples():
    assert hoeffding_tail(0, [2, 2]) == 2
    assert hoeffding_unit_tail(0, 1) == 2
    assert hoeffding_corollary(2, 50) == pytest.approx(2 * 50 ** -2)
    assert bernstein_tail(0, [1, 1], 1) == 2
    t, m2, K = 3.0, [0.5] * 4, 1.0
    assert bernstein_tail(t, m2, K) == pytest.approx(2 * math.exp(-(t * t / 2) / (2 + t / 3)))
    with pytest.raises(NonPositiveInput):
        hoeffding_unit_tail(1, 0)


def test_hoeffding_empirical():
    n, trials = 50, 10_000
    u = make_rng(1).standard_normal(n)
    u /= np.linalg.norm(u)
    x = make_rng(2).choice([-1.0, 1.0], size=(trials, n))
    proj = np.abs(x @ u)
    for t in np.linspace(0.5, 4, 8):
        assert np.mean(proj >= t) <= hoeffding_unit_tail(t, 1.0)


def test_bound_report_echo_and_consistency(tmp_path):
    A, _ = clique_signal(60, 30, random_state=1)
    s = signal_summary(spectral_decompose(A), 1)
    params = BoundParams(K=1.0, c_main=1.0, c_refined=64.0)
    rep = bound_report(s, 1, 5.0, params, l2_err=0.2)
    assert rep.inputs["log_base"] == "e"
    assert rep.inputs["normE"] == 5.0
    assert rep.linf_main == pytest.approx(linf_main(s, 1, 0.2, 5.0, 1.0, c=1.0))
    assert rep.eps1 == pytest.approx(5 / 30) and rep.eps2 == pytest.approx(1 / 30)
    path = tmp_path / "r.json"
    dump_json(path, rep.to_dict())
    assert json.loads(path.read_text())["inputs"]["C0"] == pytest.approx(1088)
    assert set(rep.row()) >= {"dk", "ovw_l2", "linf_main", "linf_refined"}


def test_calibrated_constant():
    assert calibrated_constant([1, 2], [2, 1]) == 2
    assert calibrated_constant([0, 0], [0, 1]) == 0
    assert calibrated_constant([1], [0]) == math.inf


pos = st.floats(1e-3, 1e3)


@given(pos, pos, pos)
def test_davis_kahan_monotone(e, d, bump):
    a, b = davis_kahan(e, d + 2 * e + 2 * bump), davis_kahan(e, d + 2 * e)
    assert a <= b
    c = davis_kahan(e + bump / 10, d + 2 * e + bump)
    assume(c is not None)
    assert davis_kahan(e, d + 2 * e + bump) <= c


@given(pos, pos, pos, pos, pos)
def test_ovw_monotone(K, d, s, e, bump):
    base = ovw_l2(K, 1, d, s, e)
    assert ovw_l2(K, 1, d, s, e + bump) >= base
    assert ovw_l2(K, 1, d + bump, s, e) <= base
    assert ovw_l2(K, 1, d, s + bump, e) <= base


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_eps_nonnegative(normE, delta, sigma):
    s = SignalSummary(1, (sigma,), 0.0, (delta,), (delta,), (1.0,), 0.5, 0.5, 10)
    rep = bound_report(s, 1, normE, BoundParams())
    assert rep.eps1 >= 0 and rep.eps2 >= 0
    assert math.isfinite(rep.eps2) == (delta > 0)


@given(st.floats(1e-2, 1e4), st.floats(0, 1e4), st.floats(0, 1e2), st.floats(1e-3, 10),
       st.floats(1e-3, 1e2))
def test_strong_implies_stable(sigma, delta, T, K, c):
    s = SignalSummary(1, (sigma,), 0.0, (delta,), (delta,), (1.0,), 0.3, 0.3, 500)
    rep = stability_check(s, 1, BoundParams(K=K, T=T), c=c)
    if rep.verdict == "strongly_stable":
        assert rep.cond_a and rep.cond_b and rep.cond_c
    for key, flag in (("a", rep.cond_a), ("b", rep.cond_b), ("c", rep.cond_c),
                      ("strong", rep.cond_strong)):
        assert (rep.margins[key] > 1) == flag


@given(st.integers(4, 10), st.integers(1, 3), st.integers(0, 2 ** 31),
       st.floats(1e-7, 1e-3))
def test_coordinate_bound_soundness(n, r, seed, scale):
    rng = make_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0][:, :r]
    vals = np.sort(rng.uniform(5, 50, r))[::-1] * rng.choice([-1, 1], r)
    A = (Q * vals) @ Q.T
    A = (A + A.T) / 2
    H = draw_noise(NoiseSpec("rademacher", scale=scale), n, rng=rng)
    for i in range(1, r + 1):
        for l in range(n):
            rep = coordinate_bound(A, H, i, l, r=r)
            assert not rep.violated
