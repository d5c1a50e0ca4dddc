"""Pilot runs that calibrate the derived acceptance thresholds.

Uses seeds disjoint from the acceptance suite and writes
``tests/data/pilot_calibration.json``.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from linfperturb import NoiseSpec, clique_signal, make_rng
from linfperturb.cluster import fsc, planted_clique_graph, score_clique
from linfperturb.models import adjacency_transform
from linfperturb.verify import run_trials, verify_delocalization

PILOT_SEED = 1000


def newbound(trials):
    out = {}
    for n in (250, 500, 1000, 2000):
        A, _ = clique_signal(n, n // 4, random_state=make_rng(PILOT_SEED, n))
        recs = run_trials(A, NoiseSpec("rademacher"), trials=trials, seed=PILOT_SEED + 1)
        out[str(n)] = float(np.percentile([r.newbound_ratio for r in recs], 99))
    return out


def hidden_clique(trials, n=1000):
    frac = {}
    for c in range(1, 9):
        k = int(round(c * math.sqrt(n)))
        hits = 0
        for t in range(trials):
            g = planted_clique_graph(n, k, random_state=make_rng(PILOT_SEED + 2, c, t))
            hits += score_clique(fsc(adjacency_transform(g.adjacency, 0.5)), g.members, n).exact
        frac[str(c)] = hits / trials
    c_star = next((c for c in range(1, 9)
                   if all(frac[str(d)] == 1.0 for d in range(c, 9))), None)
    return frac, c_star


def delocalization(trials):
    A, _ = clique_signal(1000, 250, random_state=make_rng(PILOT_SEED, 3))
    recs = run_trials(A, NoiseSpec("rademacher"), trials=trials, seed=PILOT_SEED + 3)
    return verify_delocalization(recs)["max_ratio"]


def main(path):
    t0 = time.time()
    frac, c_star = hidden_clique(40)
    result = {
        "seed": PILOT_SEED,
        "newbound_p99": newbound(100),
        "hidden_clique_fraction": frac,
        "hidden_clique_c_star": c_star,
        "delocalization_max_ratio": delocalization(100),
    }
    result["seconds"] = round(time.time() - t0, 1)
    Path(path).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(json.dumps(result, indent=2, sort_keys=True))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/pilot_calibration.json")
