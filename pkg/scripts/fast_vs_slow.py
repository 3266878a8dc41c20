"""Fast-vs-slow discrimination (factor, eta -0.5, lambda 0.2).

Fast case tau = 5: growth exponent of the median extinction time in N.
Slow case tau = 2.3: share of runs still infected at t_cap = 500 per N.
"""

import argparse
import csv
import json
import time
from pathlib import Path

from evosis.cli import main as cli_main

N_LIST = [500, 1000, 2000, 4000]
BAND = (0.26, 0.78)


def fast(out: Path, replicas: int, threads: int) -> dict:
    status = cli_main(["extinction", "--kernel", "factor", "--tau", "5", "--eta", "-0.5",
                       "--lambda", "0.2", "--n-list", ",".join(map(str, N_LIST)),
                       "--replicas", str(replicas), "--t-cap", "10000", "--seed", "9",
                       "--threads", str(threads), "--out", str(out)])
    s = json.loads((out / "summary.json").read_text())
    slope = s["fit"]["slope"] if s["fit"] else None
    return {"exit_status": status, "slope": slope,
            "slope_stderr": s["fit"]["slope_stderr"] if s["fit"] else None,
            "band": list(BAND), "in_band": slope is not None and BAND[0] <= slope <= BAND[1],
            "rows": (out / "extinction.csv").read_text().splitlines()[1:]}


def slow(out: Path, replicas: int, t_cap: float, threads: int) -> dict:
    per_n = {}
    for n in N_LIST:
        d = out / f"n{n}"
        cli_main(["simulate", "--kernel", "factor", "--tau", "2.3", "--eta", "-0.5",
                  "--lambda", "0.2", "--n", str(n), "--t-max", str(t_cap), "--record-grid", "5",
                  "--replicas", str(replicas), "--seed", "9", "--threads", str(threads),
                  "--out", str(d)])
        with open(d / "extinction.csv") as fh:
            cens = [int(r["censored"]) for r in csv.DictReader(fh)]
        dens = (d / "density.csv").read_text().splitlines()[-1].split(",")
        per_n[n] = {"alive_fraction": sum(cens) / len(cens), "final_mean_density": float(dens[1])}
    return {"t_cap": t_cap, "per_n": per_n,
            "ok": all(v["alive_fraction"] >= 0.9 for v in per_n.values())}


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--fast-replicas", type=int, default=200)
    ap.add_argument("--slow-replicas", type=int, default=20)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--results", default=str(Path(__file__).resolve().parents[1] / "results"))
    a = ap.parse_args()
    res = Path(a.results)
    t0 = time.time()
    v = {"fast": fast(res / "fast_vs_slow" / "fast", a.fast_replicas, a.threads),
         "slow": slow(res / "fast_vs_slow" / "slow", a.slow_replicas, 500.0, a.threads)}
    v["wall_seconds"] = time.time() - t0
    (res / "fast_vs_slow.json").write_text(json.dumps(v, indent=2) + "\n")
    print(json.dumps(v, indent=2))
