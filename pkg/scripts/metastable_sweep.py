"""Metastable-exponent recovery: lambda sweep at N = 1e5 (factor, tau 2.4, eta -1).

Writes results/metastable_sweep/{sweep.csv,summary.json,manifest.json} through the
CLI and a verdict file results/metastable_sweep.json.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from evosis.cli import main as cli_main

XI = 5.0 / 3.0
BAND = 0.5


def run(out: Path, replicas: int, t_max: float, threads: int) -> dict:
    t0 = time.time()
    status = cli_main(["sweep", "--kernel", "factor", "--tau", "2.4", "--eta", "-1",
                       "--n", "100000", "--lambdas", "0.5,0.35,0.25,0.18",
                       "--replicas", str(replicas), "--t-max", str(t_max), "--record-grid", "0.5",
                       "--seed", "8", "--threads", str(threads), "--out", str(out)])
    summary = json.loads((out / "summary.json").read_text())
    fit = summary["fit"]
    rows = (out / "sweep.csv").read_text().splitlines()[1:]
    stable = [r.split(",")[3] == "1" for r in rows]
    verdict = {
        "exit_status": status,
        "all_stable": all(stable),
        "monotone": summary["monotone"],
        "slope": fit["slope"] if fit else None,
        "slope_stderr": fit["slope_stderr"] if fit else None,
        "xi": XI,
        "in_band": bool(fit and abs(fit["slope"] - XI) <= BAND),
        "rows": rows,
        "wall_seconds": time.time() - t0,
    }
    return verdict


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=20)
    ap.add_argument("--t-max", type=float, default=40.0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--results", default=str(Path(__file__).resolve().parents[1] / "results"))
    a = ap.parse_args()
    res = Path(a.results)
    v = run(res / "metastable_sweep", a.replicas, a.t_max, a.threads)
    (res / "metastable_sweep.json").write_text(json.dumps(v, indent=2) + "\n")
    print(json.dumps(v, indent=2))
    sys.exit(0)
