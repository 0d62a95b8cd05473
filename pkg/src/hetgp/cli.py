"""Command-line entry point: ``hetgp <subcommand> [flags]``.

Failures exit nonzero after printing one JSON object to stderr, e.g.
``{"error": "data", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import datasets as D
from . import pipelines as P
from .errors import ConfigurationError, HetGPError

EXIT_CODES = {"configuration": 2, "data": 3, "numerical": 4, "error": 1}

# flag name -> RunConfig field; defaults live in RunConfig so that a config
# file can supply anything a flag did not
RUN_FLAGS = {
    "model": str, "models": str, "protocol": str, "kernel_f": str, "kernel_g": str,
    "lags": int, "window_days": float, "refit_days": float, "bootstrap_days": float,
    "block_days": float, "mask_fraction": float, "seed": int, "gh_nodes": int,
    "mc_samples": int, "restarts": int, "max_iters": int, "step_iters": int, "workers": int,
}


def _add_run_flags(p: argparse.ArgumentParser, protocol_flag: bool, models_flag: bool):
    p.add_argument("--input", required=True, help="speed series CSV")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--config", default=None, help="key = value file; flags override it")
    p.add_argument("--no-standardize", action="store_true", default=None)
    for name, typ in RUN_FLAGS.items():
        if name == "protocol" and not protocol_flag or name == "models" and not models_flag:
            continue
        p.add_argument("--" + name.replace("_", "-"), type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetgp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a synthetic series and its ground truth")
    sim.add_argument("--output-dir", default=".")
    sim.add_argument("--days", type=float, default=30.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--noise-sd", default=None,
                     help="ten comma-separated noise sds, decile 1 first")
    sim.add_argument("--flow-persistence", type=float, default=None)
    sim.add_argument("--name", default="synthetic", help="file stem and place id")

    st = sub.add_parser("stats", help="per-decile speed spread and its correlation")
    st.add_argument("--input", required=True)
    st.add_argument("--output-dir", default=None)

    _add_run_flags(sub.add_parser("impute", help="block imputation experiment"), False, False)
    _add_run_flags(sub.add_parser("forecast", help="rolling one-step forecasting"), False, False)
    _add_run_flags(sub.add_parser("compare", help="several models under one protocol"),
                   True, True)

    pl = sub.add_parser("plot", help="SVG of a predictions file")
    pl.add_argument("--input", required=True, help="predictions CSV")
    pl.add_argument("--output", default=None, help="SVG path (default: next to the input)")
    pl.add_argument("--output-dir", default=None)
    pl.add_argument("--start", default=None, help="ISO timestamp, inclusive")
    pl.add_argument("--end", default=None, help="ISO timestamp, exclusive")
    pl.add_argument("--title", default="")
    return parser


def run_config(args, protocol=None) -> P.RunConfig:
    values = P.read_config_file(args.config) if args.config else {}
    for name in RUN_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if args.output_dir is not None:
        values["output_dir"] = args.output_dir
    if args.no_standardize:
        values["standardize"] = False
    if protocol is not None:
        values["protocol"] = protocol
    return P.RunConfig.from_mapping(values)


def _load(path) -> D.SpeedSeries:
    if not Path(path).is_file():
        raise ConfigurationError(f"input file {path} does not exist")
    return D.read_csv(path)


def cmd_simulate(args) -> dict:
    kw = {"days": args.days, "seed": args.seed, "place_id": args.name}
    if args.noise_sd:
        try:
            kw["noise_sd"] = tuple(float(v) for v in args.noise_sd.split(","))
        except ValueError:
            raise ConfigurationError(f"bad --noise-sd {args.noise_sd!r}") from None
    if args.flow_persistence is not None:
        kw["flow_persistence"] = args.flow_persistence
    series, truth = D.generate_synthetic(D.SyntheticSpec(**kw))
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = D.write_csv(out / f"{args.name}.csv", series)
    side = D.write_truth_csv(out / f"{args.name}_truth.csv", series.timestamps,
                             truth.f_true, truth.noise_sd)
    return {"series": str(data), "truth": str(side), "points": len(series)}


def cmd_stats(args) -> dict:
    profile = D.decile_noise_profile(_load(args.input))
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(json.dumps(profile, indent=2, sort_keys=True) + "\n")
    return profile


def _run(args, protocol) -> dict:
    config = run_config(args, protocol)
    series = _load(args.input)
    result = P.run_protocol(config, series)
    paths = P.write_outputs(result, config.output_dir)
    return {"model": result.model, "protocol": protocol, "info": result.info,
            "metrics": {k: v.to_dict() for k, v in result.reports.items()},
            "outputs": [str(p) for p in paths]}


def cmd_compare(args) -> dict:
    config = run_config(args)
    table = P.compare_models(config, _load(args.input))
    print(P.format_comparison(table), end="")
    return {"comparison": str(Path(config.output_dir) / "comparison.json")}


def cmd_plot(args) -> dict:
    src = Path(args.input)
    if not src.is_file():
        raise ConfigurationError(f"input file {src} does not exist")
    if args.output:
        dest = Path(args.output)
    else:
        dest = Path(args.output_dir or src.parent) / (src.stem + ".svg")
    dest.parent.mkdir(parents=True, exist_ok=True)
    return {"plot": str(P.emit_plot(src, dest, args.start, args.end, args.title))}


COMMANDS = {
    "simulate": cmd_simulate, "stats": cmd_stats, "compare": cmd_compare, "plot": cmd_plot,
    "impute": lambda a: _run(a, "impute"), "forecast": lambda a: _run(a, "forecast"),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        summary = COMMANDS[args.command](args)
    except HetGPError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES.get(exc.kind, 1)
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1
    if args.command != "compare":
        print(json.dumps(summary, indent=2, sort_keys=True))
    return 0
