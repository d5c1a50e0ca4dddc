"""Command-line front end: ``linfperturb run <command> [options]``.

Settings come from built-in defaults, then an optional INI file
(``--config``), then flags; later sources win.  The INI file may hold a
``[run]`` section (shared keys and the command's own keys), a section named
after the command, and a ``[constants]`` section overriding theorem
constants.  Unknown sections or keys are errors.

Artifacts are written as ``{command}-{hash}-{seed}.csv`` (plus extra tables
with a suffix) and ``{command}-{hash}-{seed}.json``.  The hash covers the
effective settings except ``out`` and ``threads``, so reruns with any worker
count produce byte-identical files.

Exit status: 0 success, 1 usage or configuration error, 2 a hard invariant
(an exact theorem or linear-algebra fact) was violated.
"""

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np

from . import __version__
from .bounds import BoundParams, bound_report, estimate_T, stability_check
from .cluster import (clique_partition, fsc, hidden_partition, planted_clique_graph,
                      planted_partition_graph, score, score_clique)
from .complete import (CompletionConfig, ObservationModel, bounded_noise,
                       check_recovery, complete_noisy)
from .exceptions import AssignmentAmbiguous, BlockTooSmall, ConfigParse, LinfPerturbError
from .linalg import read_matrix, spectral_decompose, spectral_norm, write_matrix
from .models import (NoiseSpec, PartitionSpec, adjacency_transform, clique_signal,
                     draw_noise, integer_block_signal, make_rng, signal_summary)
from .verify import (SWEEP_COLUMNS, TRIAL_COLUMNS, aggregate, dump_json, run_trials,
                     verify_delocalization, verify_deterministic, verify_singular_tails,
                     write_csv)

SIGNAL_STREAM = 2 ** 32 - 1
PREFIX_COLUMNS = ("config_hash", "version")
CONSTANT_NAMES = ("c0", "C0", "C_r", "c1_r", "c_main", "c_refined", "c_corollary",
                  "C_dk", "C_ovw")


class UsageError(Exception):
    pass


def _opt_float(text):
    if text is None or str(text).lower() in ("", "none"):
        return None
    return float(text)


COMMON = {
    "seed": (int, 0, "master seed"),
    "trials": (int, None, "number of trials (command default if omitted)"),
    "out": (str, ".", "output directory"),
    "threads": (int, 1, "worker threads"),
}

COMMANDS = {
    "perturb-verify": {
        "_trials": 100,
        "n": (int, 400, "matrix size"),
        "k": (int, 80, "clique size of the rank-one signal"),
        "noise": (str, "rademacher", "noise kind"),
        "scale": (float, 1.0, "noise scale"),
        "indices": (str, "1", "comma-separated singular indices"),
        "T": (_opt_float, None, "norm level for stability verdicts (analytic if omitted)"),
    },
    "det-verify": {
        "_trials": 20,
        "n": (int, 50, "matrix size"),
        "k": (int, 25, "clique size"),
        "scale": (float, 1e-4, "Rademacher noise scale"),
        "index": (int, 1, "singular index"),
    },
    "tails": {
        "_trials": 2000,
        "n": (int, 200, "matrix size"),
        "k": (int, 100, "clique size"),
        "noise": (str, "rademacher", "noise kind"),
        "scale": (float, 1.0, "noise scale"),
        "index": (int, 1, "singular index"),
        "t_grid": (str, "0:60:10", "start:stop:count grid of deviations"),
    },
    "cluster-clique": {
        "_trials": 40,
        "n": (int, 1000, "number of vertices"),
        "sweep_c": (str, "1:8", "range a:b of c = k / sqrt(n)"),
        "q": (float, 0.5, "background edge density"),
    },
    "cluster-partition": {
        "_trials": 20,
        "sizes": (str, "300,200,100", "clique sizes"),
        "epsilon": (float, 0.3, "hold-out exponent"),
        "holdout": (str, "random", "'random' or 'none'"),
        "q": (float, 0.5, "background edge density"),
    },
    "cluster-hidden": {
        "_trials": 20,
        "sizes": (str, "500,500", "block sizes"),
        "densities": (str, "0.75", "intra-block densities"),
        "q": (float, 0.5, "cross density"),
        "epsilon": (float, 0.7, "hold-out exponent"),
        "c_y": (float, 0.1, "representative fraction"),
    },
    "complete": {
        "_trials": 10,
        "matrix": (str, "", "matrix text file (block signal if empty)"),
        "completion_json": (str, "", "JSON settings {p, seed, r, w_inf, threshold, B}"),
        "m": (int, 1000, "rows of the block signal"),
        "n": (int, 1000, "columns of the block signal"),
        "values": (str, "16,18;18,16", "block values, rows split by ';'"),
        "p": (float, 0.35, "sampling density"),
        "B": (float, 10.0, "bound of the additive noise"),
        "noise_kind": (str, "rademacher", "'rademacher' or 'uniform_int'"),
        "r": (int, 2, "assumed rank bound"),
        "w_inf": (_opt_float, None, "incoherence bound"),
        "threshold": (_opt_float, None, "direct cutoff"),
        "mode": (str, "auto", "cutoff mode: auto, override, incoherence, gap"),
    },
    "bounds-report": {
        "_trials": 100,
        "n": (int, 400, "matrix size"),
        "k": (int, 80, "clique size"),
        "noise": (str, "rademacher", "noise kind"),
        "scale": (float, 1.0, "noise scale"),
        "index": (int, 1, "singular index"),
        "tau": (float, 0.1, "failure probability for T"),
        "T": (_opt_float, None, "norm level (Monte Carlo if omitted)"),
        "c": (_opt_float, None, "stability constant (main constant if omitted)"),
    },
}


def load_schema():
    """The shipped CSV column schema: ``{"prefix": [...], "tables": {command: {suffix: [...]}}}``."""
    text = resources.files("linfperturb").joinpath("data/csv_schema.json").read_text()
    return json.loads(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="linfperturb", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="action", required=True)
    run = sub.add_parser("run", help="run an experiment suite")
    cmds = run.add_subparsers(dest="command", required=True)
    for name, table in COMMANDS.items():
        p = cmds.add_parser(name)
        p.add_argument("--config", default=argparse.SUPPRESS)
        p.add_argument("--const", action="append", default=argparse.SUPPRESS,
                       metavar="NAME=VALUE", help="override a theorem constant")
        for key, spec in {**COMMON, **table}.items():
            if key.startswith("_"):
                continue
            typ, _, hlp = spec
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ,
                           default=argparse.SUPPRESS, help=hlp)
    return parser


def _read_config(path, command):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as f:
            cp.read_file(f)
    except (OSError, configparser.Error) as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    table = COMMANDS[command]
    allowed = {k: v for k, v in {**COMMON, **table}.items() if not k.startswith("_")}
    values, consts = {}, {}
    for section in cp.sections():
        if section == "constants":
            for key, raw in cp.items(section):
                if key not in CONSTANT_NAMES:
                    raise ConfigParse(f"unknown constant {key!r}")
                consts[key] = float(raw)
            continue
        if section not in ("run", command):
            raise ConfigParse(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            name = key.replace("-", "_")
            if name not in allowed:
                raise ConfigParse(f"unknown key {key!r} in [{section}]")
            try:
                values[name] = allowed[name][0](raw)
            except ValueError as exc:
                raise ConfigParse(f"bad value for {key}: {raw!r}") from exc
    return values, consts


def _parse_consts(items):
    out = {}
    for item in items:
        name, sep, raw = item.partition("=")
        if not sep or name not in CONSTANT_NAMES:
            raise UsageError(f"bad constant override {item!r}")
        out[name] = float(raw)
    return out


def effective_config(args):
    """Merge defaults, config file and flags into one flat dict."""
    command = args.command
    table = COMMANDS[command]
    cfg = {k: v[1] for k, v in {**COMMON, **table}.items() if not k.startswith("_")}
    cfg["trials"] = table["_trials"]
    consts = {}
    ns = vars(args)
    if "config" in ns:
        values, consts = _read_config(ns["config"], command)
        cfg.update(values)
    for key in cfg:
        if key in ns:
            cfg[key] = ns[key]
    if "const" in ns:
        consts.update(_parse_consts(ns["const"]))
    cfg["constants"] = dict(sorted(consts.items()))
    if cfg["trials"] is None or cfg["trials"] < 1:
        raise UsageError("trials must be a positive integer")
    if cfg["threads"] < 1:
        raise UsageError("threads must be positive")
    return cfg


def config_hash(command, cfg):
    keep = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    blob = json.dumps({"command": command, **keep}, sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _pmap(fn, items, threads):
    items = list(items)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _params(cfg, r, K, T=None):
    c = cfg["constants"]
    kw = {k: c[k] for k in CONSTANT_NAMES if k in c}
    return BoundParams(r=r, K=K, T=T, **kw)


def _ints(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _noise(cfg):
    return NoiseSpec(cfg["noise"], seed=cfg["seed"], scale=cfg["scale"])


def _fixed_clique(cfg):
    A, members = clique_signal(cfg["n"], cfg["k"],
                               random_state=make_rng(cfg["seed"], SIGNAL_STREAM))
    return A, members


def cmd_perturb_verify(cfg):
    A, _ = _fixed_clique(cfg)
    noise = _noise(cfg)
    n = cfg["n"]
    indices = _ints(cfg["indices"])
    K = noise.entry_bound(n) or 1.0
    T = cfg["T"]
    if T is None:
        T = estimate_T(noise, n, 0.1, mode="analytic")
    params = _params(cfg, max(indices), K, T)
    recs = run_trials(A, noise, indices, cfg["trials"], cfg["seed"], params,
                      threads=cfg["threads"])
    weyl_bad = sum(abs(r.sigma_tilde - r.sigma) > r.normE + 1e-8 * max(1.0, r.sigma)
                   for r in recs)
    sweep = aggregate(recs)
    deloc = verify_delocalization(recs)
    deloc.pop("ratios")
    summary = {"cells": sweep.rows(), "delocalization": deloc,
               "weyl_violations": weyl_bad, "T": T}
    line = (f"perturb-verify: {len(recs)} records, weyl violations {weyl_bad}, "
            f"linf_main violations {sum(r.flags['linf_main_ok'] is False for r in recs)}, "
            f"max deloc ratio {deloc['max_ratio']:.4g}")
    tables = {"": (TRIAL_COLUMNS, [r.row() for r in recs]),
              "sweep": (SWEEP_COLUMNS, sweep.rows())}
    return tables, summary, weyl_bad > 0, line


DET_COLUMNS = ("seed", "trial", "l", "lhs", "bound", "assumption_1", "assumption_2",
               "assumption_3", "margin_1", "margin_2", "margin_3", "a_l", "violated")


def cmd_det_verify(cfg):
    n, k = cfg["n"], cfg["k"]
    seed = cfg["seed"]

    def job(t):
        rng = make_rng(seed, t)
        A, _ = clique_signal(n, k, random_state=rng)
        H = draw_noise(NoiseSpec("rademacher", scale=cfg["scale"]), n, rng=rng)
        return verify_deterministic(A, H, cfg["index"], max_n=max(300, n))

    reports = _pmap(job, range(cfg["trials"]), cfg["threads"])
    rows = []
    for t, rep in enumerate(reports):
        for c in rep.coordinates:
            rows.append({"seed": seed, "trial": t, "l": c.l, "lhs": c.lhs,
                         "bound": c.bound, "assumption_1": c.assumption_1,
                         "assumption_2": c.assumption_2, "assumption_3": c.assumption_3,
                         "margin_1": c.margin_1, "margin_2": c.margin_2,
                         "margin_3": c.margin_3, "a_l": c.a_l, "violated": c.violated})
    held = sum(r.assumptions_hold for r in reports)
    bad = sum(len(r.violations) for r in reports)
    summary = {"coordinates": len(rows), "assumptions_hold": held,
               "bound_holds_given_assumptions": held - bad, "violations": bad}
    line = (f"det-verify: {len(rows)} coordinates, {held} with assumptions, "
            f"{bad} violations")
    return {"": (DET_COLUMNS, rows)}, summary, bad > 0, line


TAIL_COLUMNS = ("seed", "t", "frequency", "se", "bound", "flagged")


def cmd_tails(cfg):
    A, _ = _fixed_clique(cfg)
    start, stop, count = cfg["t_grid"].split(":")
    grid = np.linspace(float(start), float(stop), int(count))
    table = verify_singular_tails(A, _noise(cfg), cfg["index"], grid, cfg["trials"],
                                  cfg["seed"], threads=cfg["threads"])
    rows = [{"seed": cfg["seed"], **row} for row in table]
    flagged = sum(r["flagged"] for r in rows)
    line = f"tails: {len(rows)} grid points, {flagged} flagged"
    return {"": (TAIL_COLUMNS, rows)}, {"flagged": flagged, "table": table}, False, line


CLIQUE_COLUMNS = ("seed", "c", "k", "trial", "exact", "misclassified")


def cmd_cluster_clique(cfg):
    n, seed = cfg["n"], cfg["seed"]
    lo, hi = (int(x) for x in cfg["sweep_c"].split(":"))
    jobs = [(c, t) for c in range(lo, hi + 1) for t in range(cfg["trials"])]

    def job(ct):
        c, t = ct
        k = int(round(c * math.sqrt(n)))
        g = planted_clique_graph(n, k, cfg["q"], random_state=make_rng(seed, c, t))
        pred = fsc(adjacency_transform(g.adjacency, cfg["q"]))
        res = score_clique(pred, g.members, n)
        return {"seed": seed, "c": c, "k": k, "trial": t, "exact": res.exact,
                "misclassified": res.misclassified}

    rows = _pmap(job, jobs, cfg["threads"])
    frac = {}
    for c in range(lo, hi + 1):
        hits = [r["exact"] for r in rows if r["c"] == c]
        frac[str(c)] = sum(hits) / len(hits)
    line = "cluster-clique: recovery " + " ".join(f"c={c}:{f:.3f}" for c, f in frac.items())
    return {"": (CLIQUE_COLUMNS, rows)}, {"recovery_fraction": frac}, False, line


PARTITION_COLUMNS = ("seed", "trial", "exact", "misclassified", "holdout", "status")


def _partition_rows(cfg, spec, run):
    seed = cfg["seed"]

    def job(t):
        rng = make_rng(seed, t)
        g = planted_partition_graph(spec, random_state=rng)
        try:
            labels, info = run(g, rng)
        except AssignmentAmbiguous:
            return {"seed": seed, "trial": t, "exact": False, "misclassified": None,
                    "holdout": None, "status": "ambiguous"}
        except BlockTooSmall:
            return {"seed": seed, "trial": t, "exact": False, "misclassified": None,
                    "holdout": None, "status": "block_too_small"}
        res = score(labels, g.labels)
        return {"seed": seed, "trial": t, "exact": res.exact,
                "misclassified": res.misclassified, "holdout": int(info["S"].size),
                "status": "ok"}

    rows = _pmap(job, range(cfg["trials"]), cfg["threads"])
    rate = sum(r["exact"] for r in rows) / len(rows)
    return rows, rate


def cmd_cluster_partition(cfg):
    sizes = _ints(cfg["sizes"])
    spec = PartitionSpec(sizes, [1.0], cfg["q"])
    forced = [] if cfg["holdout"] == "none" else None
    if cfg["holdout"] not in ("none", "random"):
        raise UsageError("holdout must be 'random' or 'none'")

    def run(g, rng):
        return clique_partition(g.adjacency, len(sizes), cfg["epsilon"], random_state=rng,
                                S=forced, q=cfg["q"], return_info=True)

    rows, rate = _partition_rows(cfg, spec, run)
    line = f"cluster-partition: exact recovery {rate:.3f} over {len(rows)} trials"
    return {"": (PARTITION_COLUMNS, rows)}, {"exact_rate": rate}, False, line


def cmd_cluster_hidden(cfg):
    sizes = _ints(cfg["sizes"])
    spec = PartitionSpec(sizes, _floats(cfg["densities"]), cfg["q"])

    def run(g, rng):
        return hidden_partition(g.adjacency, len(sizes), cfg["epsilon"], cfg["c_y"],
                                q=cfg["q"], random_state=rng, return_info=True)

    rows, rate = _partition_rows(cfg, spec, run)
    line = f"cluster-hidden: exact recovery {rate:.3f} over {len(rows)} trials"
    return {"": (PARTITION_COLUMNS, rows)}, {"exact_rate": rate}, False, line


COMPLETE_COLUMNS = ("seed", "trial", "exact", "wrong_entries", "max_abs_err_prerounding",
                    "tie", "s_tilde", "cutoff", "mode")
HIST_COLUMNS = ("seed", "stage", "bin_low", "bin_high", "count")


def _complete_settings(cfg):
    s = dict(cfg)
    if cfg["completion_json"]:
        try:
            with open(cfg["completion_json"]) as f:
                extra = json.load(f)
        except (OSError, ValueError) as exc:
            raise ConfigParse(f"cannot read {cfg['completion_json']}: {exc}") from exc
        unknown = set(extra) - {"p", "seed", "r", "w_inf", "threshold", "B", "mode"}
        if unknown:
            raise ConfigParse(f"unknown completion keys {sorted(unknown)}")
        s.update(extra)
    return s


def _signal_matrix(s):
    if s["matrix"]:
        return read_matrix(s["matrix"])
    vals = [[float(x) for x in row.split(",")] for row in s["values"].split(";")]
    rb, cb = len(vals), len(vals[0])

    def split(total, parts):
        base = [total // parts] * parts
        base[-1] += total - sum(base)
        return base

    return integer_block_signal(s["m"], s["n"], split(s["m"], rb), split(s["n"], cb), vals)


def _histogram(stage, err, seed):
    edges = np.array([0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0, 2.0, 5.0, np.inf])
    counts, _ = np.histogram(err, bins=edges)
    return [{"seed": seed, "stage": stage, "bin_low": float(lo), "bin_high": float(hi),
             "count": int(c)} for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def cmd_complete(cfg):
    s = _complete_settings(cfg)
    A = _signal_matrix(s)
    seed = int(s["seed"])
    ccfg = CompletionConfig(int(s["r"]), s["w_inf"], s["threshold"], s["mode"])
    outputs = {}

    def job(t):
        rng = make_rng(seed, t)
        X = bounded_noise(A.shape, s["B"], rng, s["noise_kind"])
        model = ObservationModel(s["p"], seed=int(rng.integers(2 ** 63)))
        A_hat, info = complete_noisy(A, X, model, ccfg, return_info=True)
        rep = check_recovery(A, A_hat, info["B"])
        if t == 0:
            outputs["A_hat"] = A_hat
            outputs["hist"] = (_histogram("pre_rounding", np.abs(A - info["B"]), seed)
                               + _histogram("post_rounding", np.abs(A - A_hat), seed))
        return {"seed": seed, "trial": t, **rep.to_dict(), "s_tilde": info["s_tilde"],
                "cutoff": info["cutoff"], "mode": info["mode"]}

    rows = _pmap(job, range(cfg["trials"]), cfg["threads"])
    exact = sum(r["exact"] for r in rows)
    summary = {"exact_trials": exact, "trials": len(rows),
               "settings": {k: s[k] for k in ("p", "r", "w_inf", "threshold", "B", "mode")}}
    line = f"complete: exact recovery in {exact}/{len(rows)} trials"
    tables = {"": (COMPLETE_COLUMNS, rows), "hist": (HIST_COLUMNS, outputs["hist"])}
    return tables, summary, False, line, outputs["A_hat"]


REPORT_COLUMNS = ("seed", "i", "sigma_i", "delta_i", "kappa_i", "u_inf", "normE", "T",
                  "eps1", "eps2", "dk", "ovw_l2", "linf_main", "linf_refined",
                  "linf_corollary", "verdict", "margin_a", "margin_b", "margin_c",
                  "margin_strong")


def cmd_bounds_report(cfg):
    A, _ = _fixed_clique(cfg)
    noise = _noise(cfg)
    n, i = cfg["n"], cfg["index"]
    d = spectral_decompose(A)
    summary = signal_summary(d, max(i, d.rank))
    E = draw_noise(noise, n, rng=make_rng(cfg["seed"], 0))
    normE = spectral_norm(E)
    K = noise.entry_bound(n) or 1.0
    T = cfg["T"]
    if T is None:
        trials = max(cfg["trials"], math.ceil(10 / cfg["tau"]))
        T = estimate_T(noise.with_seed(cfg["seed"]), n, cfg["tau"], trials=trials)
    params = _params(cfg, summary.r, K, T)
    rep = bound_report(summary, i, normE, params, n=n)
    st = stability_check(summary, i, params, n=n, c=cfg["c"])
    row = {"seed": cfg["seed"], "i": i, "sigma_i": summary.sigma[i - 1],
           "delta_i": summary.delta[i - 1], "kappa_i": summary.kappa[i - 1],
           "u_inf": summary.u_inf, "normE": normE, "T": T, "eps1": rep.eps1,
           "eps2": rep.eps2, "dk": rep.dk, "ovw_l2": rep.ovw_l2,
           "linf_main": rep.linf_main, "linf_refined": rep.linf_refined,
           "linf_corollary": rep.linf_corollary, "verdict": st.verdict,
           **{f"margin_{k}": v for k, v in st.margins.items()}}
    out = {"bound_report": rep.to_dict(), "stability": st.to_dict()}
    line = f"bounds-report: i={i} verdict {st.verdict}, linf_main {rep.linf_main!r}"
    return {"": (REPORT_COLUMNS, [row])}, out, False, line


HANDLERS = {
    "perturb-verify": cmd_perturb_verify,
    "det-verify": cmd_det_verify,
    "tails": cmd_tails,
    "cluster-clique": cmd_cluster_clique,
    "cluster-partition": cmd_cluster_partition,
    "cluster-hidden": cmd_cluster_hidden,
    "complete": cmd_complete,
    "bounds-report": cmd_bounds_report,
}


def run(command, cfg, stdout=None):
    """Execute one suite and write its artifacts; returns the exit code."""
    stdout = stdout or sys.stdout
    h = config_hash(command, cfg)
    result = HANDLERS[command](cfg)
    tables, summary, hard, line = result[:4]
    os.makedirs(cfg["out"], exist_ok=True)
    stem = os.path.join(cfg["out"], f"{command}-{h}-{cfg['seed']}")
    written = []
    for suffix, (columns, rows) in tables.items():
        path = stem + (f"-{suffix}" if suffix else "") + ".csv"
        cols = PREFIX_COLUMNS + tuple(columns)
        write_csv(path, [{"config_hash": h, "version": __version__, **r} for r in rows],
                  cols)
        written.append(path)
    if len(result) > 4:
        path = stem + "-matrix.txt"
        write_matrix(path, result[4])
        written.append(path)
    meta = {"command": command, "config_hash": h, "seed": cfg["seed"],
            "version": __version__,
            "config": {k: v for k, v in cfg.items() if k not in ("out", "threads")},
            "hard_violation": hard, "results": summary}
    dump_json(stem + ".json", meta)
    written.append(stem + ".json")
    print(line, file=stdout)
    return 2 if hard else 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = effective_config(args)
        return run(args.command, cfg)
    except (UsageError, LinfPerturbError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
