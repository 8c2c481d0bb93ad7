"""Command-line entry point: audit, gen and perturb.

``audit`` runs the full two-stage protocol for every scenario in a JSON
config: compute diagnostics on each run, calibrate them against permutation
nulls, apply the decision rules and write verdict JSONs plus a report.
Scenario failures are isolated; the exit code is 0 on success, 2 when any
failure was a validation problem, 1 when anything failed internally.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .audit import (RunRecord, aggregate_scenario, default_group, emit_report,
                    verdict_to_obj)
from .diagnostics import DiagnosticConfig
from .nulls import DEFAULT_PERMUTATIONS, calibrate_run
from .oracles import PLANTED_KINDS, PlantedScenario, generate
from .store import (ConfigurationError, TrajectoryFormatError,
                    TrajectoryValidationError, load_dataset,
                    perturb_observations, write_dataset)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2

_VALIDATION_ERRORS = (TrajectoryFormatError, TrajectoryValidationError,
                      ConfigurationError, ValueError, KeyError)


class ConfigError(ValueError):
    pass


def _parse_history(text: str) -> tuple[str, int]:
    if text == "auto":
        return "auto", 4
    if text == "hidden":
        return "hidden", 4
    if text.startswith("window:"):
        k = int(text.split(":", 1)[1])
        return "window", k
    if text == "window":
        return "window", 4
    raise ConfigError(f"unknown history mode {text!r} (use auto, hidden or window:K)")


def _load_config(path: str, args) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("seed is mandatory (config key 'seed' or --seed)")
    out_dir = args.output or cfg.get("output_dir")
    if not out_dir:
        raise ConfigError("output directory is mandatory (config key 'output_dir' or --output)")
    history_text = args.history or cfg.get("history", "auto")
    mode, window = _parse_history(history_text)

    scenarios = cfg.get("scenarios")
    if not scenarios:
        raise ConfigError("config lists no scenarios")
    for scn in scenarios:
        if "name" not in scn or not scn.get("runs"):
            raise ConfigError("every scenario needs a name and a nonempty runs list")
        for run in scn["runs"]:
            path_ = run.get("dataset")
            if not path_ or not os.path.isdir(path_):
                raise ConfigError(f"dataset path does not exist: {path_}")

    return {
        "seed": int(seed),
        "output_dir": out_dir,
        "history_mode": mode,
        "window": window,
        "neighbors": args.neighbors or int(cfg.get("neighbors", 3)),
        "permutations": args.perms or int(cfg.get("permutations", DEFAULT_PERMUTATIONS)),
        "sample_cap": int(cfg.get("sample_cap", 50_000)),
        "quantile_null": bool(args.quantile_null or cfg.get("quantile_null", False)),
        "format": args.format or cfg.get("format", "markdown"),
        "scenarios": scenarios,
    }


def _run_scenario(scn: dict, opts: dict):
    """Worker: audit one scenario.  Returns (name, status, payload)."""
    name = scn["name"]
    try:
        config = DiagnosticConfig(
            history_mode=opts["history_mode"],
            window=opts["window"],
            k_neighbors=opts["neighbors"],
            sample_cap=opts["sample_cap"],
            seed=opts["seed"],
        )
        runs = []
        for run in scn["runs"]:
            dataset = load_dataset(run["dataset"])
            diagnostics = calibrate_run(dataset, config,
                                        n_perms=opts["permutations"],
                                        quantile_rule=opts["quantile_null"])
            runs.append(RunRecord(
                manifest=dataset.manifest,
                diagnostics=tuple(diagnostics),
                returns=tuple(float(v) for v in run.get("returns", ())),
            ))
        return name, "ok", aggregate_scenario(name, runs)
    except _VALIDATION_ERRORS as exc:
        return name, "validation_error", f"{type(exc).__name__}: {exc}"
    except Exception as exc:    # isolate scenario crashes
        return name, "internal_error", f"{type(exc).__name__}: {exc}"


def _safe_filename(name: str) -> str:
    return "".join(c if (c.isalnum() or c in "-_.") else "__" for c in name)


def cmd_audit(args) -> int:
    try:
        opts = _load_config(args.config, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    scenarios = opts["scenarios"]
    jobs = args.jobs or min(len(scenarios), os.cpu_count() or 1)
    if jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_scenario, scenarios,
                                     [opts] * len(scenarios)))
    else:
        outcomes = [_run_scenario(scn, opts) for scn in scenarios]

    out_dir = opts["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    group_by_name = {scn["name"]: scn.get("group") or default_group(scn["name"])
                     for scn in scenarios}
    verdicts, failures = [], []
    for name, status, payload in outcomes:
        if status == "ok":
            verdicts.append(payload)
            verdict_path = os.path.join(out_dir, f"{_safe_filename(name)}.verdict.json")
            with open(verdict_path, "w", encoding="utf-8") as fh:
                json.dump(verdict_to_obj(payload), fh, indent=2, sort_keys=True)
                fh.write("\n")
        else:
            failures.append((name, status, payload))
            print(f"scenario {name!r} failed ({status}): {payload}", file=sys.stderr)

    if verdicts:
        report = emit_report(verdicts, format=opts["format"],
                             group_of=lambda s: group_by_name.get(s, default_group(s)))
        suffix = "md" if opts["format"] == "markdown" else "json"
        report_path = os.path.join(out_dir, f"audit_report.{suffix}")
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report)
        print(f"wrote {len(verdicts)} verdict(s) and {report_path}")

    if any(status == "internal_error" for _, status, _ in failures):
        return EXIT_INTERNAL
    if failures:
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        scenario = PlantedScenario(kind=args.kind, n_episodes=args.episodes,
                                   horizon=args.horizon, seed=args.seed, lag=args.lag)
        dataset = generate(scenario, algorithm=args.algorithm,
                           architecture=args.architecture)
        write_dataset(dataset, args.out)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote planted {args.kind} dataset to {args.out}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    try:
        dataset = load_dataset(args.dataset)
        perturbed = perturb_observations(dataset, scale=args.scale, seed=args.seed)
        write_dataset(perturbed, args.out)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote perturbed dataset (scale={args.scale}) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajaudit",
        description="Audit recorded multi-agent trajectories for memory use, "
                    "private information flow and coordination structure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="run the audit described by a JSON config")
    p_audit.add_argument("--config", required=True, help="audit config JSON")
    p_audit.add_argument("--output", help="output directory (overrides config)")
    p_audit.add_argument("--jobs", type=int, default=0,
                         help="worker processes (default: available parallelism)")
    p_audit.add_argument("--seed", type=int, help="master seed (overrides config)")
    p_audit.add_argument("--format", choices=("markdown", "json"))
    p_audit.add_argument("--quantile-null", action="store_true",
                         help="flag against the null 95th percentile instead of the mean")
    p_audit.add_argument("--history", help="auto | hidden | window:K")
    p_audit.add_argument("--neighbors", type=int, help="kNN neighbor count")
    p_audit.add_argument("--perms", type=int, help="number of null permutations")
    p_audit.set_defaults(func=cmd_audit)

    p_gen = sub.add_parser("gen", help="generate a planted synthetic dataset")
    p_gen.add_argument("kind", choices=PLANTED_KINDS)
    p_gen.add_argument("--episodes", type=int, required=True)
    p_gen.add_argument("-T", "--horizon", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--lag", type=int, default=1)
    p_gen.add_argument("--algorithm", default="planted")
    p_gen.add_argument("--architecture", default="FF")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_pert = sub.add_parser("perturb", help="add feature-scaled Gaussian observation noise")
    p_pert.add_argument("dataset", help="dataset directory")
    p_pert.add_argument("--scale", type=float, required=True)
    p_pert.add_argument("--seed", type=int, required=True)
    p_pert.add_argument("--out", required=True)
    p_pert.set_defaults(func=cmd_perturb)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:    # anything unexpected
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
