"""Command-line front end: experiment runner, fixture synthesis, self-checks,
and summary reporting.

Exit codes: 0 success, 1 runtime numerical failure (round index in the
message), 2 invalid configuration, 3 dataset I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from .learner import NumericalError, VariantConfig, VARIANTS, hindsight_estimate, run_variant
from .metrics import RunSummary, summarize, summarize_run
from .nn import ContractViolation
from .selfcheck import run_all
from .stream import DoublyStream, generate_blobs, load_csv, make_schedule, write_fixture_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_IO = 3

CONFIG_DEFAULTS = {
    "dataset": None,  # required: {"path", "label_column"} or {"synthetic": {...}}
    "d2": None,  # required: evolved feature dimension
    "fractions": [0.45, 0.10, 0.45],
    "window": None,
    "variants": ["old3s"],
    "seeds": [0],
    "latent_dim": 20,
    "hidden_dim": 128,
    "depth": 4,
    "fixed_depth": 1,
    "eta": 0.01,
    "beta": 0.99,
    "learning_rate": 0.02,
    "floor": None,
    "shuffle": True,
    "hindsight_epochs": 5,
    "hindsight_value": None,
    "out_dir": "runs",
}

SYNTH_DEFAULTS = {
    "n": 10000,
    "d1": 10,
    "classes": 2,
    "margin": 2.0,
    "seed": 0,
    "out": "fixture.csv",
}


class ConfigError(ValueError):
    pass


def _merge_defaults(doc, defaults, where):
    unknown = set(doc) - set(defaults)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(doc)
    return merged


def parse_run_config(doc):
    """Validate and default a run configuration document."""
    cfg = _merge_defaults(doc, CONFIG_DEFAULTS, "config")
    ds = cfg["dataset"]
    if not isinstance(ds, dict) or not (("path" in ds) ^ ("synthetic" in ds)):
        raise ConfigError("dataset must hold exactly one of 'path' or 'synthetic'")
    if "path" in ds:
        extra = set(ds) - {"path", "label_column"}
        if extra:
            raise ConfigError(f"dataset: unknown key(s) {sorted(extra)}")
        ds.setdefault("label_column", "label")
    else:
        spec = _merge_defaults(ds["synthetic"], {k: v for k, v in SYNTH_DEFAULTS.items() if k != "out"}, "dataset.synthetic")
        ds["synthetic"] = spec
    if cfg["d2"] is None or int(cfg["d2"]) < 1:
        raise ConfigError("d2 (evolved feature dimension) must be a positive integer")
    for v in cfg["variants"]:
        if v not in VARIANTS:
            raise ConfigError(f"variants: unknown variant {v!r}")
    if not cfg["seeds"]:
        raise ConfigError("seeds must be non-empty")
    fr = cfg["fractions"]
    if len(fr) != 3 or min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError("fractions must be three positive numbers summing to 1")
    if cfg["hindsight_epochs"] < 1:
        raise ConfigError("hindsight_epochs must be >= 1")
    # Variant-level constraints are validated by VariantConfig.
    probe = variant_config(cfg, cfg["variants"][0], int(cfg["seeds"][0]))
    try:
        probe.validate()
    except ContractViolation as exc:
        raise ConfigError(str(exc))
    return cfg


def variant_config(cfg, kind, seed):
    return VariantConfig(
        kind=kind,
        latent_dim=int(cfg["latent_dim"]),
        hidden_dim=int(cfg["hidden_dim"]),
        depth=int(cfg["depth"]),
        fixed_depth=int(cfg["fixed_depth"]),
        eta=float(cfg["eta"]),
        beta=float(cfg["beta"]),
        learning_rate=float(cfg["learning_rate"]),
        floor=cfg["floor"],
        seed=int(seed),
    )


def load_dataset(cfg):
    ds = cfg["dataset"]
    if "path" in ds:
        return load_csv(ds["path"], ds["label_column"])
    spec = ds["synthetic"]
    return generate_blobs(spec["n"], spec["d1"], spec["classes"], spec["margin"], spec["seed"])


def make_stream(cfg, X, y, seed):
    schedule = make_schedule(X.shape[0], tuple(cfg["fractions"]), cfg["window"])
    return DoublyStream(X, y, schedule, int(cfg["d2"]), seed, shuffle=cfg["shuffle"])


def _run_one(cfg, X, y, kind, seed, hindsight, out_dir):
    stream = make_stream(cfg, X, y, seed)
    config = variant_config(cfg, kind, seed)
    started = time.perf_counter()
    log = run_variant(config, stream)
    elapsed = time.perf_counter() - started
    echo = dict(cfg)
    echo["variant"] = kind
    echo["seed"] = seed
    summary = summarize_run(log, hindsight, kind, seed, runtime_seconds=elapsed, config=echo)
    base = os.path.join(out_dir, f"{kind}_seed{seed}")
    log.to_csv(base + ".csv")
    summary.to_json(base + ".json")
    return base


def cmd_run(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_run_config(doc)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed_override is not None:
        cfg["seeds"] = [args.seed_override]
    if args.out is not None:
        cfg["out_dir"] = args.out
    try:
        X, y = load_dataset(cfg)
    except ContractViolation as exc:
        print(f"dataset failure: {exc}", file=sys.stderr)
        return EXIT_IO
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)

    try:
        if cfg["hindsight_value"] is not None:
            hindsight = float(cfg["hindsight_value"])
        else:
            # One offline reference per invocation, shared by every grid
            # point so regret values are comparable across variants.
            anchor_seed = int(cfg["seeds"][0])
            stream = make_stream(cfg, X, y, anchor_seed)
            hindsight = hindsight_estimate(
                stream, variant_config(cfg, "old3s", anchor_seed), epochs=cfg["hindsight_epochs"]
            )
        grid = [(kind, int(seed)) for kind in cfg["variants"] for seed in cfg["seeds"]]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [
                    pool.submit(_run_one, cfg, X, y, kind, seed, hindsight, out_dir)
                    for kind, seed in grid
                ]
                for fut in futures:
                    print(fut.result())
        else:
            for kind, seed in grid:
                print(_run_one(cfg, X, y, kind, seed, hindsight, out_dir))
    except NumericalError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    except ContractViolation as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_synth(args):
    try:
        with open(args.spec, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"cannot read spec: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"spec is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = _merge_defaults(doc, SYNTH_DEFAULTS, "synth spec")
        X, y = generate_blobs(spec["n"], spec["d1"], spec["classes"], spec["margin"], spec["seed"])
    except (ConfigError, ContractViolation) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else spec["out"]
    try:
        write_fixture_csv(out, X, y)
    except OSError as exc:
        print(f"cannot write fixture: {exc}", file=sys.stderr)
        return EXIT_IO
    print(out)
    return EXIT_OK


def cmd_check(args):
    results = run_all(fast=args.fast, corrupt_gradient=args.inject_gradient_bug)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    if failed:
        print(f"failed suites: {', '.join(r.name for r in failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args):
    summaries = []
    try:
        names = sorted(os.listdir(args.dir))
    except OSError as exc:
        print(f"cannot read {args.dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    for name in names:
        if name.endswith(".json"):
            try:
                summaries.append(RunSummary.from_json(os.path.join(args.dir, name)))
            except (OSError, TypeError, KeyError, json.JSONDecodeError):
                continue
    if not summaries:
        print(f"no run summaries in {args.dir}", file=sys.stderr)
        return EXIT_IO
    by_variant = {}
    for s in summaries:
        by_variant.setdefault(s.variant, []).append(s)
    print(f"{'variant':<12} {'runs':>4} {'ACR':>18} {'mean OCA':>18} {'hindsight':>10}")
    for variant in sorted(by_variant):
        runs = by_variant[variant]
        agg = summarize(runs)
        acr_m, acr_v = agg["acr"]
        oca_m, oca_v = agg["mean_oca"]
        print(
            f"{variant:<12} {len(runs):>4} "
            f"{acr_m:>10.4f}±{acr_v:<7.4f} {oca_m:>10.4f}±{oca_v:<7.4f} "
            f"{runs[0].hindsight:>10.4f}"
        )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="old3s", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run configuration")
    p_run.add_argument("config", help="JSON run configuration")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel grid points")
    p_run.add_argument("--seed-override", type=int, default=None, dest="seed_override")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.set_defaults(func=cmd_run)

    p_synth = sub.add_parser("synth", help="write a synthetic tabular fixture")
    p_synth.add_argument("spec", help="JSON fixture spec")
    p_synth.add_argument("--out", default=None, help="output CSV override")
    p_synth.set_defaults(func=cmd_synth)

    p_check = sub.add_parser("check", help="run the verification suites")
    p_check.add_argument("--fast", action="store_true", help="smaller randomized sweeps")
    p_check.add_argument(
        "--inject-gradient-bug", action="store_true",
        help="corrupt one analytic gradient to prove the check catches it",
    )
    p_check.set_defaults(func=cmd_check)

    p_report = sub.add_parser("report", help="aggregate run summaries into a table")
    p_report.add_argument("dir", help="directory of summary JSON files")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
