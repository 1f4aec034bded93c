"""Command-line entry point: simulate, fit, benchmark and certify.

Settings come from, in increasing priority: built-in defaults, the
environment (`.env` is loaded first), an INI file given with --config,
and command-line flags.
"""

import argparse
import configparser
import os
import sys

from dotenv import load_dotenv

from banner import print_command_header, print_otgp_banner
from bounds import MeasureClassSpec
from errors import InputError, OTGPError, ParseError
from pipeline import METHODS, BenchmarkPipeline, MethodSettings, RunConfig
from scenarios import SCENARIOS

DEFAULT_OUT_DIR = "./otgp_runs"
RUN_KEYS = {
    "scenario": str, "methods": str, "seeds": str, "alpha": float, "restarts": int,
    "max_iter": int, "samples_per_cloud": int, "n_train": int, "n_test": int,
    "record_timing": bool, "eiv_target": str,
}
METHOD_KEYS = {"p": float, "slice_count": int, "slice_seed": int, "n_components": int}


def _read_value(section, key, kind):
    try:
        if kind is bool:
            return section.getboolean(key)
        if kind is int:
            return section.getint(key)
        if kind is float:
            return section.getfloat(key)
    except ValueError as exc:
        raise ParseError(f"[{section.name}] {key}: {exc}") from None
    return section.get(key)


def load_config_file(path):
    """
    Read an INI run configuration.

    Returns:
        (run settings dict, {method tag: MethodSettings})
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from None

    run = {}
    if parser.has_section("run"):
        section = parser["run"]
        for key in section:
            if key not in RUN_KEYS:
                raise ParseError(f"{path}: unknown key {key!r} in [run]")
            run[key] = _read_value(section, key, RUN_KEYS[key])

    methods = {}
    for name in parser.sections():
        if name == "run":
            continue
        if not name.startswith("method."):
            raise ParseError(f"{path}: unknown section [{name}]")
        tag = name.split(".", 1)[1]
        if tag not in METHODS:
            raise ParseError(f"{path}: unknown method section [{name}]; valid tags: {', '.join(METHODS)}")
        values = {}
        for key in parser[name]:
            if key not in METHOD_KEYS:
                raise ParseError(f"{path}: unknown key {key!r} in [{name}]")
            values[key] = _read_value(parser[name], key, METHOD_KEYS[key])
        methods[tag] = MethodSettings(**values)
    return run, methods


def _split_list(text):
    return [part.strip() for part in str(text).split(",") if part.strip()]


def parse_seeds(text, base=0):
    """'3' means three seeds starting at `base`; '0,4,7' lists seeds explicitly."""
    parts = _split_list(text)
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise InputError(f"seeds must be integers, got {text!r}") from None
    if len(values) == 1 and "," not in str(text):
        if values[0] < 1:
            raise InputError("seed count must be at least 1")
        return tuple(range(base, base + values[0]))
    return tuple(values)


def _env_threads():
    raw = os.environ.get("OTGP_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"OTGP_THREADS must be an integer, got {raw!r}") from None


def build_run_config(args) -> RunConfig:
    run, methods = load_config_file(args.config) if args.config else ({}, {})

    def pick(flag, key, default=None):
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return run.get(key, default)

    seed = args.seed if args.seed is not None else 0
    seeds_text = pick("seeds", "seeds")
    seeds = parse_seeds(seeds_text, seed) if seeds_text is not None else (seed,)
    method_text = pick("method", "methods", "reg,pwa")
    record_timing = False if getattr(args, "no_timing", False) else run.get("record_timing", True)

    return RunConfig(
        scenario=pick("scenario", "scenario", "1D-EIV"),
        methods=tuple(_split_list(method_text)),
        seeds=seeds,
        alpha=pick("alpha", "alpha", 0.1),
        restarts=pick("restarts", "restarts", 3),
        max_iter=pick("max_iter", "max_iter", 200),
        samples_per_cloud=pick("samples_per_cloud", "samples_per_cloud"),
        n_train=pick("n_train", "n_train"),
        n_test=pick("n_test", "n_test"),
        eiv_target=pick("eiv_target", "eiv_target"),
        record_timing=bool(record_timing),
        threads=getattr(args, "threads", None) or _env_threads(),
        method_settings=methods,
    )


def cmd_simulate(args, pipeline, config):
    paths = pipeline.simulate(config.scenario_config(config.seeds[0]))
    for split, path in paths.items():
        print(f"[Simulate] {split}: {path}")
    return paths


def cmd_fit(args, pipeline, config):
    train = pipeline.load_split(args.train, "train")
    if len(config.methods) != 1:
        raise InputError("fit takes exactly one --method")
    return pipeline.fit(train, config.methods[0], config, config.seeds[0], args.output)


def cmd_benchmark(args, pipeline, config):
    outcome = pipeline.benchmark(config)
    print(outcome["summary"].to_string(index=False))
    return outcome


def cmd_certify(args, pipeline, config):
    train = pipeline.load_split(args.train, "train")
    test = pipeline.load_split(args.test, "test")
    a, b = args.a, args.b
    if a is None or b is None:
        lo = min(float(c.points.min()) for c in train.clouds + test.clouds)
        hi = max(float(c.points.max()) for c in train.clouds + test.clouds)
        a = lo if a is None else a
        b = hi if b is None else b
    cls = MeasureClassSpec(a, b, args.lipschitz)
    direction = [float(v) for v in _split_list(args.direction)] if args.direction else None
    method = config.methods[0] if len(config.methods) == 1 else "wgp"
    return pipeline.certify(train, test, cls, args.tau, args.delta, args.L_f, config,
                            method=method, seed=config.seeds[0], direction=direction)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "benchmark": cmd_benchmark,
    "certify": cmd_certify,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--config", default=None, help="INI file with [run] and [method.<tag>] sections")
    common.add_argument("--out-dir", dest="out_dir", default=None,
                        help=f"output directory (default $OTGP_OUT_DIR or {DEFAULT_OUT_DIR})")
    common.add_argument("--alpha", type=float, default=None, help="nominal miscoverage (default 0.1)")
    common.add_argument("--method", default=None, help=f"method tag(s), comma separated: {','.join(METHODS)}")
    common.add_argument("--scenario", default=None, help=f"one of {', '.join(SCENARIOS)}")
    common.add_argument("--restarts", type=int, default=None)
    common.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    common.add_argument("--quiet", action="store_true", help="no banner or progress output")

    parser = argparse.ArgumentParser(prog="otgp", description="GP regression on probability measures")
    sub = parser.add_subparsers(dest="command", required=True)

    sizes = argparse.ArgumentParser(add_help=False)
    sizes.add_argument("--n-train", dest="n_train", type=int, default=None)
    sizes.add_argument("--n-test", dest="n_test", type=int, default=None)
    sizes.add_argument("--samples-per-cloud", dest="samples_per_cloud", type=int, default=None)
    sizes.add_argument("--eiv-target", dest="eiv_target", choices=["default", "figure"], default=None)

    sub.add_parser("simulate", parents=[common, sizes], help="write a synthetic scenario to CSV")

    fit = sub.add_parser("fit", parents=[common], help="optimize one method on a training CSV")
    fit.add_argument("--train", required=True, help="training dataset CSV")
    fit.add_argument("--output", default=None, help="model summary file")
    fit.add_argument("--no-timing", dest="no_timing", action="store_true", help="omit wall-clock fields")

    bench = sub.add_parser("benchmark", parents=[common, sizes], help="score methods over seeds")
    bench.add_argument("--seeds", default=None, help="seed count (from --seed) or comma list")
    bench.add_argument("--threads", type=int, default=None, help="parallel cells (default $OTGP_THREADS or 1)")
    bench.add_argument("--no-timing", dest="no_timing", action="store_true", help="omit wall-clock fields")

    certify = sub.add_parser("certify", parents=[common], help="uniform error-band certificate (1D, p=1)")
    certify.add_argument("--train", required=True)
    certify.add_argument("--test", required=True)
    certify.add_argument("--a", type=float, default=None, help="support lower end (default: data minimum)")
    certify.add_argument("--b", type=float, default=None, help="support upper end (default: data maximum)")
    certify.add_argument("--lipschitz", type=float, required=True, help="quantile Lipschitz bound")
    certify.add_argument("--tau", type=float, required=True, help="net radius")
    certify.add_argument("--delta", type=float, default=0.05)
    certify.add_argument("--L-f", dest="L_f", type=float, required=True, help="assumed Lipschitz constant of f")
    certify.add_argument("--direction", default=None, help="project onto this comma-separated unit vector first")
    return parser


def main(argv=None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    verbose = not args.quiet
    if verbose:
        print_otgp_banner()
        print_command_header(args.command)

    try:
        config = build_run_config(args)
        out_dir = args.out_dir or os.environ.get("OTGP_OUT_DIR") or DEFAULT_OUT_DIR
        pipeline = BenchmarkPipeline(out_dir, verbose=verbose)
        COMMANDS[args.command](args, pipeline, config)
    except (OTGPError, OSError) as exc:
        print(f"❌ {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if verbose:
        print(f"✅ {args.command} finished")
    return 0


if __name__ == "__main__":
    sys.exit(main())
