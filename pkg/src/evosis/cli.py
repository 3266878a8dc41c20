"""Command-line entry point: ``evosis <subcommand> [flags]``.

Configuration is a flat ``key = value`` file (``--config``) overridden by flags.
Each run that writes files also writes ``manifest.json`` into its ``--out``
directory; ``evosis --manifest PATH`` replays it.

Exit status: 0 success, 1 usage error, 2 numeric or statistical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import engine as E
from . import experiments as X
from . import theory as T
from .errors import ConfigError, DomainError, EvosisError
from .params import ModelParams, gamma_from_tau

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
DUALITY_Z_MAX = 4.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(message)


# --------------------------------------------------------------------------
# Keys


def _float(v): return float(v)
def _int(v): return int(float(v)) if isinstance(v, str) and "e" in v.lower() else int(v)
def _floats(v): return [float(s) for s in str(v).replace(";", ",").split(",") if s.strip()]
def _ints(v): return [_int(s.strip()) for s in str(v).replace(";", ",").split(",") if s.strip()]
def _str(v): return str(v)


MODEL_KEYS = {"kernel": _str, "beta": _float, "gamma": _float, "tau": _float, "eta": _float,
              "kappa0": _float, "lambda": _float, "n": _int, "seed": _int}

SUBCOMMANDS = {
    "theory": ({"kernel", "gamma", "tau", "eta", "lambda"}, {}),
    "phase-grid": ({"kernel"}, {"tau_range": _str, "eta_range": _str}),
    "simulate": (set(MODEL_KEYS), {"t_max": _float, "record_grid": _float, "replicas": _int,
                                   "initial": _str}),
    "sweep": (set(MODEL_KEYS) - {"lambda"}, {"lambdas": _floats, "replicas": _int, "t_max": _float,
                                             "record_grid": _float, "burn_in": _float,
                                             "window": _float}),
    "extinction": (set(MODEL_KEYS) - {"n"}, {"n_list": _ints, "replicas": _int, "t_cap": _float}),
    "star": ({"eta", "lambda", "kappa0", "seed"}, {"k_list": _ints, "pool_factor": _float,
                                                   "replicas": _int, "t_cap": _float}),
    "duality": (set(MODEL_KEYS), {"t": _float, "replicas": _int}),
    "check-inequality": (set(MODEL_KEYS) - {"n", "seed"},
                         {"variant": _str, "a": _float, "score": _str, "constant": _float,
                          "grid_points": _int, "x_min": _float}),
}

REQUIRED = {
    "theory": ["eta"],
    "phase-grid": ["kernel", "tau_range", "eta_range"],
    "simulate": ["lambda"],
    "sweep": ["lambdas"],
    "extinction": ["lambda", "n_list"],
    "star": ["eta", "lambda", "k_list"],
    "duality": ["lambda", "t"],
    "check-inequality": ["lambda", "variant", "a"],
}

DEFAULTS = {"kernel": "factor", "beta": 1.0, "eta": 0.0, "kappa0": 1.0, "n": 1000, "seed": 0,
            "t_max": 100.0, "record_grid": 1.0, "replicas": 1, "initial": "all",
            "burn_in": 0.3, "window": 0.7, "t_cap": math.inf, "pool_factor": 10.0,
            "score": "tloc", "grid_points": 1024, "x_min": 1e-12}
SUB_DEFAULTS = {"sweep": {"replicas": 20}, "extinction": {"replicas": 100, "t_cap": 1e4},
                "star": {"replicas": 2000}, "duality": {"n": 8, "replicas": 10000}}
OUTPUTS_REQUIRED = {"simulate", "sweep", "extinction", "star"}


def _allowed(sub: str) -> dict:
    model, extra = SUBCOMMANDS[sub]
    keys = {k: MODEL_KEYS[k] for k in model}
    keys.update(extra)
    return keys


def _norm(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_").lower()


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        k, v = line.split("=", 1)
        out[_norm(k)] = v.strip()
    return out


def parse_config(sub: str, file_values: dict, flag_values: dict) -> dict:
    """Merge defaults, file and flags (flags win); validate keys and types."""
    if sub not in SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {sub!r}")
    allowed = _allowed(sub)
    merged = {}
    for src in (file_values, flag_values):
        for k, v in src.items():
            k = _norm(k)
            if k not in allowed:
                raise UsageError(f"unknown key '{k}' for {sub}")
            if v is None:
                continue
            try:
                merged[k] = allowed[k](v)
            except (TypeError, ValueError):
                raise UsageError(f"invalid value for '{k}': {v!r}") from None
    # gamma and tau are mutually exclusive across file and flags.
    has_g = "gamma" in merged
    has_t = "tau" in merged
    if has_g and has_t:
        raise UsageError("'gamma' and 'tau' are mutually exclusive")
    if "gamma" in allowed and not (has_g or has_t):
        if sub in ("theory", "sweep", "extinction", "simulate", "check-inequality"):
            raise UsageError("one of 'gamma' or 'tau' is required")
        merged["gamma"] = 0.5
    for k in REQUIRED[sub]:
        if k not in merged:
            raise UsageError(f"missing required key '{k}'")
    res = {}
    for k, v in {**DEFAULTS, **SUB_DEFAULTS.get(sub, {})}.items():
        if k in allowed:
            res[k] = v
    res.update(merged)
    if "tau" in res:
        try:
            res["gamma"] = gamma_from_tau(res.pop("tau"))
        except (DomainError, ValueError) as exc:
            raise UsageError(f"invalid value for 'tau': {exc}") from None
    return res


def build_params(cfg: dict, lam: float | None = None) -> ModelParams:
    try:
        return ModelParams.create(cfg.get("kernel", "factor"), gamma=cfg["gamma"],
                                  beta=cfg.get("beta", 1.0), n=cfg.get("n", 1),
                                  eta=cfg.get("eta", 0.0), kappa0=cfg.get("kappa0", 1.0),
                                  lam=cfg.get("lambda", 0.0) if lam is None else lam)
    except (DomainError, ValueError) as exc:
        raise UsageError(f"invalid model parameters: {exc}") from None


def _range(spec: str, name: str) -> np.ndarray:
    try:
        lo, hi, step = (float(s) for s in spec.split(":"))
    except ValueError:
        raise UsageError(f"'{name}' must be lo:hi:step") from None
    if step <= 0 or hi < lo:
        raise UsageError(f"'{name}' needs lo <= hi and step > 0")
    m = int(math.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(m + 1), 12)


def _initial(spec: str) -> E.InitialCondition:
    s = spec.strip().lower()
    if s == "all":
        return E.AllInfected()
    if s.startswith("seed:"):
        return E.SingleSeed(int(s[5:]))
    if s.startswith("set:"):
        return E.InfectedSet(tuple(int(v) for v in s[4:].split(",") if v))
    raise UsageError("'initial' must be all, seed:I or set:I,J,...")


# --------------------------------------------------------------------------
# Output handling


@dataclass
class Context:
    out: Path | None
    threads: int
    outputs: list

    def path(self, name: str) -> Path:
        assert self.out is not None
        self.outputs.append(name)
        return self.out / name

    def write_json(self, name: str, obj) -> None:
        with open(self.path(name), "w", newline="\n") as fh:
            json.dump(_clean(obj), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def _clean(obj):
    """Strict JSON: NaN becomes null and infinities become strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None if math.isnan(obj) else str(float(obj))
    return obj


def _jsonable(cfg: dict) -> dict:
    return _clean(dict(sorted(cfg.items())))


def _emit(obj) -> None:
    print(json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default))


# --------------------------------------------------------------------------
# Subcommands


def cmd_theory(cfg, ctx) -> int:
    tau = 1.0 + 1.0 / cfg["gamma"]
    rep = T.theory_report(cfg["kernel"], tau, cfg["eta"])
    d = rep.to_dict()
    if "lambda" in cfg and rep.dominating is not None:
        try:
            d["optimal_a"] = T.optimal_a(rep.dominating, cfg["kernel"], cfg["gamma"], cfg["eta"],
                                         cfg["lambda"]).to_dict()
        except DomainError as exc:
            d["optimal_a"] = {"error": str(exc)}
    _emit(d)
    if ctx.out:
        ctx.write_json("theory.json", d)
    return EXIT_OK


def cmd_phase_grid(cfg, ctx) -> int:
    taus = _range(cfg["tau_range"], "tau_range")
    etas = _range(cfg["eta_range"], "eta_range")
    pts = T.phase_grid(cfg["kernel"], taus, etas)
    lines = ["tau,eta,regime,xi,strategy"]
    for p in pts:
        xi = "" if p.xi is None else f"{p.xi:.17g}"
        st = "" if p.strategy is None else p.strategy.value
        reg = p.regime.kind.value
        lines.append(f"{p.tau:.17g},{p.eta:.17g},{reg},{xi},{st}")
    text = "\n".join(lines) + "\n"
    if ctx.out:
        with open(ctx.path("phase_grid.csv"), "w", newline="\n") as fh:
            fh.write(text)
        counts = {}
        for p in pts:
            counts[p.regime.kind.value] = counts.get(p.regime.kind.value, 0) + 1
        print(json.dumps({"points": len(pts), "regimes": counts}, sort_keys=True))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(cfg, ctx) -> int:
    p = build_params(cfg)
    sim = E.SimConfig(t_max=cfg["t_max"], record_grid=cfg["record_grid"], stop_on_extinction=True,
                      initial_condition=_initial(cfg["initial"]))
    reps = cfg["replicas"]
    if reps == 1:
        tr = E.run_replicas(p, sim, 1, cfg["seed"], 1)[0]
        tr.write_csv(ctx.path("trajectory.csv"))
        summary = {"extinction_time": tr.extinction_time, "events": tr.events_processed,
                   "final_density": float(tr.density[-1])}
    else:
        trajs = E.run_replicas(p, sim, reps, cfg["seed"], ctx.threads)
        dens = np.stack([t.density for t in trajs])
        curve = E.DensityCurve(sim.grid(), dens.mean(0), dens.std(0, ddof=1) / math.sqrt(reps), reps)
        curve.write_csv(ctx.path("density.csv"))
        ext = E.ExtinctionSample(
            np.array([t.extinction_time if t.extinction_time is not None else sim.t_max
                      for t in trajs]),
            np.array([t.extinction_time is None for t in trajs]))
        ext.write_csv(ctx.path("extinction.csv"))
        summary = {"replicas": reps, "censored_fraction": ext.censored_fraction,
                   "final_density": float(curve.mean[-1])}
    ctx.write_json("summary.json", summary)
    _emit(summary)
    return EXIT_OK


def _theory_dict(p: ModelParams) -> dict:
    try:
        return T.theory_report(p.kernel.kind, p.tau, p.eta).to_dict()
    except EvosisError as exc:
        return {"error": str(exc)}


def cmd_sweep(cfg, ctx) -> int:
    p = build_params(cfg, lam=cfg["lambdas"][0])
    sc = X.SweepConfig(p, tuple(cfg["lambdas"]), cfg["replicas"], cfg["t_max"],
                       cfg["record_grid"], cfg["burn_in"], cfg["window"], cfg["seed"])
    res = X.sweep_lambda(sc, ctx.threads)
    res.write_csv(ctx.path("sweep.csv"))
    th = _theory_dict(p)
    summary = {"fit": res.fit.to_dict() if res.fit else None,
               "insufficient_data": res.fit is None, "excluded_lambdas": list(res.excluded),
               "monotone": res.monotone, "theory": th}
    if res.fit and th.get("xi") is not None:
        summary["slope_gap"] = res.fit.slope - th["xi"]
    ctx.write_json("summary.json", summary)
    _emit({k: summary[k] for k in ("fit", "insufficient_data", "monotone")})
    return EXIT_OK


def cmd_extinction(cfg, ctx) -> int:
    p = build_params(cfg)
    res = X.extinction_scaling(p, cfg["n_list"], cfg["replicas"], cfg["t_cap"], cfg["seed"],
                               ctx.threads)
    res.write_csv(ctx.path("extinction.csv"))
    summary = {"fit": res.fit.to_dict() if res.fit else None, "band": list(res.band),
               "unusable_n": [r.n for r in res.rows if not r.usable],
               "theory": _theory_dict(p)}
    ctx.write_json("summary.json", summary)
    _emit({k: summary[k] for k in ("fit", "band", "unusable_n")})
    return EXIT_OK


def cmd_star(cfg, ctx) -> int:
    res = X.star_survival(cfg["k_list"], cfg["eta"], cfg["lambda"], cfg["pool_factor"],
                          cfg["replicas"], cfg["seed"], cfg["kappa0"], cfg["t_cap"], ctx.threads)
    res.write_csv(ctx.path("star.csv"))
    summary = {"fit": res.fit.to_dict() if res.fit else None, "target_slope": res.target_slope,
               "censored_fraction": {str(r.k): r.censored_frac for r in res.rows}}
    ctx.write_json("summary.json", summary)
    _emit(summary)
    return EXIT_OK


def cmd_duality(cfg, ctx) -> int:
    p = build_params(cfg)
    res = X.duality_check(p, cfg["t"], cfg["replicas"], cfg["seed"], ctx.threads)
    print(f"duality t={res.t:g} all_infected={res.all_infected:.6f}+-{res.all_infected_se:.6f} "
          f"seed_average={res.seed_average:.6f}+-{res.seed_average_se:.6f} z={res.z:.4f}")
    if ctx.out:
        ctx.write_json("duality.json", {"t": res.t, "all_infected": res.all_infected,
                                        "all_infected_se": res.all_infected_se,
                                        "seed_average": res.seed_average,
                                        "seed_average_se": res.seed_average_se, "z": res.z})
    return EXIT_OK if res.z < DUALITY_Z_MAX else EXIT_NUMERIC


def _load_score(spec: str, p: ModelParams, cfg: dict) -> T.TabulatedScore:
    if spec == "tloc":
        return T.t_loc_score(p, cfg["x_min"], cfg["grid_points"])
    if spec == "one":
        x = np.geomspace(cfg["x_min"], 1.0, cfg["grid_points"])
        return T.TabulatedScore(x, np.ones_like(x))
    try:
        data = np.loadtxt(spec, delimiter=",", skiprows=1, ndmin=2)
    except OSError:
        raise UsageError(f"cannot read score file {spec}") from None
    return T.TabulatedScore(data[:, 0], data[:, 1])


def cmd_check_inequality(cfg, ctx) -> int:
    p = build_params({**cfg, "n": 1})
    try:
        variant = T.Variant(cfg["variant"])
    except ValueError:
        raise UsageError(f"'variant' must be one of {[v.value for v in T.Variant]}") from None
    score = _load_score(cfg["score"], p, cfg)
    rep = T.check_master_inequality(variant, p, cfg["a"], score, cfg.get("constant"))
    d = rep.to_dict()
    _emit(d)
    if ctx.out:
        ctx.write_json("inequality.json", d)
    return EXIT_OK


COMMANDS = {"theory": cmd_theory, "phase-grid": cmd_phase_grid, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "extinction": cmd_extinction, "star": cmd_star,
            "duality": cmd_duality, "check-inequality": cmd_check_inequality}


# --------------------------------------------------------------------------
# Argument parsing


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="evosis", description="SIS contact process on vertex-updating networks")
    ap.add_argument("--version", action="version", version=f"evosis {__version__}")
    ap.add_argument("--manifest", help="replay the run recorded in this manifest")
    ap.add_argument("--out", help="output directory for a manifest replay")
    ap.add_argument("--threads", type=int, help="worker threads for a manifest replay")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--out", help="output directory (created if missing)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all CPUs)")
        for key in _allowed(name):
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return ap


def _manifest(sub: str, cfg: dict, started: str, outputs: list) -> dict:
    return {"tool": "evosis", "version": __version__, "subcommand": sub, "config": _jsonable(cfg),
            "seed": cfg.get("seed"), "started": started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(), "outputs": sorted(outputs)}


def execute(sub: str, cfg: dict, out: str | None, threads: int | None) -> int:
    if sub in OUTPUTS_REQUIRED and not out:
        raise UsageError(f"'{sub}' requires --out")
    threads = threads if threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise UsageError("'threads' must be positive")
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    out_path = None
    if out:
        out_path = Path(out)
        out_path.mkdir(parents=True, exist_ok=True)
    ctx = Context(out_path, threads, [])
    status = COMMANDS[sub](cfg, ctx)
    if out_path is not None:
        man = _manifest(sub, cfg, started, ctx.outputs)
        with open(out_path / "manifest.json", "w", newline="\n") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return status


def _config_from_manifest(path) -> tuple[str, dict]:
    try:
        man = json.loads(Path(path).read_text())
        sub = man["subcommand"]
        raw = man["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"unreadable manifest {path}: {exc}") from None
    if sub not in SUBCOMMANDS:
        raise UsageError(f"manifest names unknown subcommand {sub!r}")
    allowed = _allowed(sub)
    cfg = {}
    for k, v in raw.items():
        if k not in allowed and k not in DEFAULTS:
            raise UsageError(f"manifest holds unknown key '{k}'")
        if isinstance(v, str) and v in ("inf", "-inf", "nan"):
            v = float(v)
        cfg[k] = v
    return sub, cfg


def _attach_negative_values(argv: list) -> list:
    """Join ``--flag -1:2:0.5`` into ``--flag=-1:2:0.5`` so argparse accepts it."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and len(argv[i + 1]) > 1 and argv[i + 1][0] == "-"
                and (argv[i + 1][1].isdigit() or argv[i + 1][1] == ".")):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    argv = _attach_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = _parser().parse_args(argv)
        if args.manifest:
            if args.command:
                raise UsageError("--manifest replays a run and takes no subcommand")
            sub, cfg = _config_from_manifest(args.manifest)
            out = args.out or str(Path(args.manifest).parent)
            return execute(sub, cfg, out, args.threads)
        if not args.command:
            raise UsageError("a subcommand is required")
        sub = args.command
        file_vals = read_config_file(args.config) if args.config else {}
        flags = {k: getattr(args, k) for k in _allowed(sub)}
        cfg = parse_config(sub, file_vals, flags)
        return execute(sub, cfg, args.out, args.threads)
    except UsageError as exc:
        print(f"evosis: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DomainError) as exc:
        print(f"evosis: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvosisError, ArithmeticError, MemoryError) as exc:
        print(f"evosis: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
