"""Command-line runner.

Subcommands: run, sweep, estimate, recursion, entropy, validate-config.
Settings resolve as defaults < config file (TOML) < command-line flags; the
seed falls back to $HIVEKV_SEED when neither file nor flag sets it.
Exit codes: 0 success, 2 bad input, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .attention import AttentionModel
from .cache import BuzzConfig
from .errors import InvariantError, StateError
from .estimator import (
    RECURSION_VARIANTS,
    check_limsup_bounds,
    entropy_probe,
    optimal_ratio,
    simulate_recursion,
)
from .numeric import child_seeds
from .policies import BUZZ_MODES, POLICY_KINDS, Policy
from .workload import WORKLOAD_KINDS, Workload, match_budget, run_experiment

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_BAD_CONFIG, EXIT_INVARIANT = 0, 2, 3

DEFAULTS = {
    "policy": "buzz",
    "k": 4,
    "w": 64,
    "stride": 5,
    "threshold": None,  # None: round(w * optimal_ratio(stride))
    "budget": None,  # heavy_hitter_topk; None: k + threshold + w
    "budget_pct": None,  # when set, w/threshold/budget are searched to hit this mean occupancy
    "n": 1024,
    "d": 64,
    "seed": None,
    "workload": "uniform",
    "spike_position": None,
    "spike_strength": 10.0,
    "sink_strength": 6.0,
    "prompt_len": 0,
    "logn": False,
    "logn_base": 512,
    "json": None,
    "csv": None,
    "ratios": [1.5, 2.5, 3.5, 4.5, 5.5, 6.5],
    "cache_size": 200,
    "jobs": 1,
}

# config-file layout: section -> {file key: flat key}
SECTIONS = {
    "policy": {"kind": "policy", "k": "k", "w": "w", "stride": "stride", "threshold": "threshold",
               "budget": "budget", "budget_pct": "budget_pct"},
    "workload": {"kind": "workload", "n": "n", "d": "d", "spike_position": "spike_position",
                 "spike_strength": "spike_strength", "sink_strength": "sink_strength", "prompt_len": "prompt_len"},
    "model": {"logn": "logn", "logn_base": "logn_base"},
    "output": {"json": "json", "csv": "csv"},
    "sweep": {"ratios": "ratios", "cache_size": "cache_size", "jobs": "jobs"},
}
TOP_LEVEL = {"seed": "seed"}
RUN_KEYS = ("policy", "k", "w", "stride", "threshold", "budget", "budget_pct", "n", "d", "seed", "workload",
            "spike_position", "spike_strength", "sink_strength", "prompt_len", "logn", "logn_base")


class ConfigError(ValueError):
    pass


def load_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}") from exc
    flat = {}
    for key, val in doc.items():
        if key in TOP_LEVEL:
            flat[TOP_LEVEL[key]] = val
        elif key in SECTIONS:
            if not isinstance(val, dict):
                raise ConfigError(f"[{key}] must be a section")
            for sub, subval in val.items():
                if sub not in SECTIONS[key]:
                    raise ConfigError(f"unknown key {key}.{sub}")
                flat[SECTIONS[key][sub]] = subval
        else:
            raise ConfigError(f"unknown key {key!r}")
    return flat


def resolve(file_values: dict | None, flags: dict) -> dict:
    cfg = dict(DEFAULTS)
    unknown = set(file_values or ()) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    cfg.update(file_values or {})
    cfg.update({k: v for k, v in flags.items() if v is not None and k in DEFAULTS})
    if cfg["seed"] is None:
        env = os.environ.get("HIVEKV_SEED")
        try:
            cfg["seed"] = int(env) if env is not None else 0
        except ValueError as exc:
            raise ConfigError("HIVEKV_SEED must be an integer") from exc
    for key in ("k", "w", "stride", "n", "d", "seed", "prompt_len", "logn_base", "cache_size", "jobs"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool):
            raise ConfigError(f"{key} must be an integer")
    if cfg["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    if cfg["policy"] not in POLICY_KINDS:
        raise ConfigError(f"policy must be one of {', '.join(POLICY_KINDS)}")
    if cfg["workload"] not in WORKLOAD_KINDS:
        raise ConfigError(f"workload must be one of {', '.join(WORKLOAD_KINDS)}")
    if cfg["stride"] < 1:
        raise ConfigError("stride must be >= 1")
    if cfg["threshold"] is None and cfg["w"] >= 1:
        cfg["threshold"] = max(cfg["stride"], round(cfg["w"] * optimal_ratio(cfg["stride"]).ratio))
    if cfg["budget"] is None and cfg["threshold"] is not None:
        cfg["budget"] = cfg["k"] + cfg["threshold"] + cfg["w"]
    return cfg


def build_policy(cfg: dict) -> Policy:
    kind = cfg["policy"]
    if cfg["budget_pct"] is not None:
        return match_budget(kind, cfg["budget_pct"], cfg["n"], cfg["k"], cfg["stride"], cfg["prompt_len"])
    if kind == "full":
        return Policy.full()
    if kind == "local_window":
        return Policy.local_window(cfg["w"])
    if kind == "sink_window":
        return Policy.sink_window(cfg["k"], cfg["w"])
    if kind == "heavy_hitter_topk":
        return Policy.heavy_hitter(cfg["w"], cfg["budget"])
    return Policy.buzz(BuzzConfig(cfg["k"], cfg["w"], cfg["stride"], cfg["threshold"]), kind)


def build_run(cfg: dict):
    model_seed, workload_seed = child_seeds(cfg["seed"], 2)
    model = AttentionModel.seeded(cfg["d"], model_seed, cfg["logn"], cfg["logn_base"])
    workload = Workload(cfg["workload"], cfg["n"], cfg["d"], workload_seed, cfg["spike_position"],
                        float(cfg["spike_strength"]), float(cfg["sink_strength"]))
    return model, build_policy(cfg), workload


def run_from_config(cfg: dict):
    """Run the experiment described by a resolved config (as embedded in reports)."""
    model, policy, workload = build_run(cfg)
    run_cfg = {key: cfg[key] for key in RUN_KEYS}
    return run_experiment(model, policy, workload, cfg["prompt_len"], config=run_cfg)


def _sweep_point(args):
    cfg, ratio = args
    k, s, C = cfg["k"], cfg["stride"], cfg["cache_size"]
    w = round((C - k) / (1 + ratio))
    T = C - k - w
    point = dict(cfg, w=w, threshold=T, budget_pct=None)
    try:
        report = run_from_config(point)
    except ValueError as exc:
        return {"ratio": ratio, "w": w, "T": T, "skipped": str(exc)}
    sm = report.summary
    return {"ratio": ratio, "w": w, "T": T, "actual_ratio": T / w, "mean_err": sm["mean_err"],
            "mean_rel_err": sm["mean_rel_err"], "max_err": sm["max_err"], "budget_pct": sm["budget_pct"],
            "comparisons": sm["comparisons"]}


def sweep(cfg: dict) -> dict:
    tasks = [(cfg, float(r)) for r in cfg["ratios"]]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    for row in rows:
        if "skipped" in row:
            print(f"warning: skipped ratio {row['ratio']}: {row['skipped']}", file=sys.stderr)
    return {"schema_version": 1, "config": {k: cfg[k] for k in RUN_KEYS + ("ratios", "cache_size")},
            "rows": rows}


# -- argument parsing --------------------------------------------------------------

def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _add_run_flags(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--policy", choices=POLICY_KINDS)
    p.add_argument("--k", type=int, help="sink size")
    p.add_argument("--w", type=int, help="window size")
    p.add_argument("--stride", type=int, help="BUZZ stride s")
    p.add_argument("--threshold", type=int, help="BUZZ threshold T")
    p.add_argument("--budget", type=int, help="heavy_hitter_topk total budget")
    p.add_argument("--budget-pct", dest="budget_pct", type=float,
                   help="pick policy sizes so mean occupancy is this %% of the full cache")
    p.add_argument("--n", type=int, help="stream length")
    p.add_argument("--d", type=int, help="hidden dimension")
    p.add_argument("--seed", type=int)
    p.add_argument("--workload", choices=WORKLOAD_KINDS)
    p.add_argument("--spike-position", dest="spike_position", type=int)
    p.add_argument("--spike-strength", dest="spike_strength", type=float)
    p.add_argument("--sink-strength", dest="sink_strength", type=float)
    p.add_argument("--prompt-len", dest="prompt_len", type=int)
    p.add_argument("--logn", action="store_true", default=None, help="log-n scaled attention")
    p.add_argument("--logn-base", dest="logn_base", type=int)
    p.add_argument("--output", "-o", dest="json", help="write the JSON report here")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hivekv", description="KV-cache eviction experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _add_run_flags(p)
    p.add_argument("--csv", help="also write per-step rows as CSV")

    p = sub.add_parser("sweep", help="error vs T/w at a fixed cache size")
    _add_run_flags(p)
    p.add_argument("--ratios", type=_float_list, help="comma-separated T/w grid")
    p.add_argument("--cache-size", dest="cache_size", type=int, help="k + T + w held fixed")
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("estimate", help="optimal T/w for a stride")
    p.add_argument("--stride", type=int, required=True)
    p.add_argument("--w", type=int, help="also suggest T for this window")

    p = sub.add_parser("recursion", help="iterate the old-region size recursion")
    p.add_argument("--stride", type=int, required=True)
    p.add_argument("--threshold", type=int, required=True)
    p.add_argument("--variant", choices=RECURSION_VARIANTS, default="ceil")
    p.add_argument("--max-steps", dest="max_steps", type=int, default=100)

    p = sub.add_parser("entropy", help="softmax entropy drift, constant vs log-n scaling")
    p.add_argument("--grid", type=_int_list, default=[64, 128, 256, 512, 1024, 2048, 4096, 8192])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--distribution", choices=("normal", "equal"), default="normal")

    p = sub.add_parser("validate-config", help="check a config file and print it resolved")
    p.add_argument("config")
    return parser


def _emit(obj, path=None):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _say(line):
    """Human-readable summary; stderr keeps stdout pure JSON."""
    print(line, file=sys.stderr)


def _fail(code, exc):
    err = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def _resolved(args) -> dict:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    return resolve(file_values, vars(args))


def cmd_run(args) -> int:
    cfg = _resolved(args)
    report = run_from_config(cfg)
    if cfg["csv"]:
        with open(cfg["csv"], "w", newline="") as fh:
            fh.write(report.to_csv())
    if cfg["json"]:
        with open(cfg["json"], "w") as fh:
            fh.write(report.to_json())
        sm = report.summary
        print(f"{report.policy['kind']}: {sm['steps']} steps, mean rel err {sm['mean_rel_err']:.6g}, "
              f"budget {sm['budget_pct']:.1f}%, comparisons {sm['comparisons']}")
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _resolved(args)
    if cfg["policy"] not in BUZZ_MODES:
        raise ConfigError("sweep varies T/w and needs a BUZZ policy")
    table = sweep(cfg)
    if cfg["json"]:
        _emit(table, cfg["json"])
        for row in table["rows"]:
            if "skipped" not in row:
                print(f"T/w={row['ratio']:<5} w={row['w']:<4} T={row['T']:<4} mean rel err {row['mean_rel_err']:.6g}")
    else:
        _emit(table)
    return EXIT_OK


def cmd_estimate(args) -> int:
    pred = optimal_ratio(args.stride)
    out = {"s": pred.s, "parity": pred.parity, "ratio": pred.ratio}
    if args.w is not None:
        out["w"] = args.w
        out["T"] = round(args.w * pred.ratio)
    _say(f"stride {pred.s} ({pred.parity}): optimal T/w = {pred.ratio:.6g}")
    _emit(out)
    return EXIT_OK


def cmd_recursion(args) -> int:
    trace = simulate_recursion(args.stride, args.threshold, args.max_steps, args.variant)
    out = trace.as_dict()
    if trace.converged:
        out["bounds"] = check_limsup_bounds(trace).as_dict()
        _say(f"s={trace.s} T={trace.T} ({trace.variant}): settles at {trace.cycle} after {len(trace.a)} terms")
    else:
        _say(f"s={trace.s} T={trace.T} ({trace.variant}): no cycle within {args.max_steps} terms")
    _emit(out)
    return EXIT_OK


def cmd_entropy(args) -> int:
    seed = args.seed
    if seed is None:
        seed = resolve(None, {})["seed"]
    probe = entropy_probe(args.grid, seed, trials=args.trials, distribution=args.distribution)
    out = probe.as_dict()
    for pol, hs in probe.entropies.items():
        _say(f"{pol:>8}: drift {probe.drift(pol):.4f}  H = " + " ".join(f"{h:.3f}" for h in hs))
    _emit(out)
    return EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = resolve(load_config_file(args.config), {})
    build_run(cfg)
    _emit({"valid": True, "config": cfg})
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "estimate": cmd_estimate,
    "recursion": cmd_recursion,
    "entropy": cmd_entropy,
    "validate-config": cmd_validate_config,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (InvariantError, StateError) as exc:
        return _fail(EXIT_INVARIANT, exc)
    except ValueError as exc:
        return _fail(EXIT_BAD_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
