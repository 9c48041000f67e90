"""Command-line interface.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime or solver
failure.  Reports go to stdout as JSON; data artifacts are written as CSV.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import tomli

from .bench import METHODS, run_benchmark
from .dataset import load_dataset, save_dataset
from .errors import PearlError, ValidationError
from .figures import KINDS, emit_figure_data
from .fitting import PRESETS, FitConfig, FitReport, fit, predict_demand
from .garp import afriat_index, check_garp
from .sim import EndogeneityNoise, RandomUtilityNoise, SimSpec, generate
from .solvers import elasticity_matrix
from .utility import load_model

log = logging.getLogger("pearl")

OUTPUT_ENV = "PEARL_OUTPUT_DIR"
SIM_KEYS = ("k", "N", "theta", "price_range", "income_range", "seed", "noise", "sigma")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; usage problems are input errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return vals[0], vals[1]


def _add_sim_flags(p):
    p.add_argument("--k", type=int, help="number of goods")
    p.add_argument("--n", dest="N", type=int, help="number of observations")
    p.add_argument("--theta", type=_floats, help="Cobb-Douglas exponents, comma separated")
    p.add_argument("--price-range", dest="price_range", type=_pair)
    p.add_argument("--income-range", dest="income_range", type=_pair)
    p.add_argument("--noise", choices=("none", "random-utility", "endogeneity"))
    p.add_argument("--sigma", type=float, help="noise scale")


def _add_fit_flags(p):
    p.add_argument("--model", choices=("cd", "icnn"), default=None)
    p.add_argument("--preset", choices=PRESETS, default=None,
                   help="base schedule: published defaults or the shorter tuned one")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--final-learning-rate", dest="final_learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--pretrain", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pearl", description="Recover utility functions from consumption data.")
    parser.add_argument("--config", type=Path, help="TOML file with flat option keys")
    parser.add_argument("--seed", type=int, help="global random seed")
    parser.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    parser.add_argument("--output-dir", type=Path,
                        help=f"directory for relative output paths (default ${OUTPUT_ENV} or cwd)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    # global options are also accepted after the subcommand
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS)

    p = sub.add_parser("simulate", parents=[common], help="generate Cobb-Douglas consumption data")
    _add_sim_flags(p)
    p.add_argument("-o", "--output", default="data.csv")

    p = sub.add_parser("check-garp", parents=[common], help="test GARP and report Afriat's index")
    p.add_argument("data", type=Path)
    p.add_argument("--epsilon", type=float, default=1.0)

    p = sub.add_parser("fit", parents=[common], help="fit a utility function to data")
    p.add_argument("data", type=Path)
    _add_fit_flags(p)
    p.add_argument("-o", "--output", default="model.json")
    p.add_argument("--loss-csv", default=None, help="per-epoch loss history")

    p = sub.add_parser("predict", parents=[common], help="demand of a fitted model")
    p.add_argument("model", type=Path)
    p.add_argument("--p", required=True, type=_floats, help="prices, comma separated")
    p.add_argument("--m", required=True, type=float, help="income")

    p = sub.add_parser("elasticity", parents=[common],
                       help="price elasticity matrix of a fitted model")
    p.add_argument("model", type=Path)
    p.add_argument("--p", required=True, type=_floats)
    p.add_argument("--m", required=True, type=float)
    p.add_argument("--rel-step", type=float, default=1e-3)
    p.add_argument("-o", "--output", default=None, help="also write the matrix as CSV")

    p = sub.add_parser("benchmark", parents=[common],
                       help="compare fitted utilities with regression baselines")
    _add_sim_flags(p)
    _add_fit_flags(p)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("-o", "--output", default="benchmark.csv")

    p = sub.add_parser("figure", parents=[common], help="write figure data as CSV plus a PNG rendering")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--data", type=Path, help="dataset (loss-curve)")
    p.add_argument("--model", type=Path, help="fitted model JSON (contour, demand-curve, elasticity)")
    p.add_argument("--theta", type=_floats, help="generating exponents to overlay")
    p.add_argument("--good", type=int, default=1, help="good whose demand curve is traced (1-based)")
    p.add_argument("--p", type=_floats, help="prices for the elasticity grid")
    p.add_argument("--m", type=float, default=100.0)
    p.add_argument("--no-plot", action="store_true", help="skip the PNG")
    p.add_argument("-o", "--output-stem", default=None, help="file name stem")
    return parser


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: invalid TOML: {exc}") from exc


def _merged(args, config: dict, keys) -> dict:
    """Config-file values overridden by any flag the user gave."""
    out = {k: v for k, v in config.items() if k in keys}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _out_path(args, name) -> Path:
    path = Path(name)
    if path.is_absolute():
        return path
    base = args.output_dir or os.environ.get(OUTPUT_ENV)
    if base:
        Path(base).mkdir(parents=True, exist_ok=True)
        return Path(base) / path
    return path


def _sim_spec(args, config) -> SimSpec:
    opts = _merged(args, config, SIM_KEYS)
    if args.seed is not None:
        opts["seed"] = args.seed
    noise = opts.pop("noise", "none")
    sigma = opts.pop("sigma", None)
    if noise == "random-utility":
        opts["noise"] = RandomUtilityNoise() if sigma is None else RandomUtilityNoise(sigma=sigma)
    elif noise == "endogeneity":
        opts["noise"] = EndogeneityNoise() if sigma is None else EndogeneityNoise(sigma=sigma)
    elif noise != "none":
        raise ValidationError(f"unknown noise {noise!r}")
    k = opts.get("k", 2)
    if "theta" not in opts and k != 2:
        opts["theta"] = [1.0 / k] * k
    for key in ("theta", "price_range", "income_range"):
        if key in opts:
            opts[key] = tuple(opts[key])
    return SimSpec(**opts)


FIT_FLAGS = ("epochs", "batch_size", "learning_rate", "final_learning_rate", "weight_decay", "pretrain")


def _fit_config(args, config, kind) -> FitConfig:
    values = {k: v for k, v in config.items() if k not in SIM_KEYS + ("model", "preset")}
    values.update(_merged(args, {}, FIT_FLAGS))
    if args.seed is not None:
        values["seed"] = args.seed
    preset = args.preset or config.get("preset", "default")
    return FitConfig.from_mapping(kind, values, preset)


def _load_report(path) -> FitReport:
    model, extras = load_model(path)
    return FitReport(model=model, epsilon=float(extras.get("epsilon", 1.0)), loss_history=[],
                     converged=bool(extras.get("converged", True)))


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def cmd_simulate(args, config):
    d = generate(_sim_spec(args, config))
    out = _out_path(args, args.output)
    save_dataset(d, out)
    log.info("wrote %d observations to %s", d.N, out)


def cmd_check_garp(args, config):
    d = load_dataset(args.data)
    report = check_garp(d, args.epsilon).to_dict()
    report["afriat_index"] = afriat_index(d)
    _emit(report)


def cmd_fit(args, config):
    d = load_dataset(args.data)
    kind = args.model or config.get("model", "cd")
    cfg = _fit_config(args, config, kind)
    rep = fit(d, {"kind": kind, "seed": cfg.seed}, cfg)
    out = _out_path(args, args.output)
    rep.save(out, None if args.loss_csv is None else _out_path(args, args.loss_csv))
    _emit({"model": str(out), "kind": kind, "epsilon": rep.epsilon,
           "final_loss": rep.loss_history[-1] if rep.loss_history else None,
           "converged": rep.converged})


def cmd_predict(args, config):
    rep = _load_report(args.model)
    p = np.asarray(args.p)
    if p.size != rep.model.k:
        raise ValidationError(f"model has {rep.model.k} goods but {p.size} prices were given")
    _emit(predict_demand(rep, p, args.m).tolist())


def cmd_elasticity(args, config):
    model, _ = load_model(args.model)
    p = np.asarray(args.p)
    if p.size != model.k:
        raise ValidationError(f"model has {model.k} goods but {p.size} prices were given")
    em = elasticity_matrix(model, p, args.m, args.rel_step)
    if args.output:
        em.to_csv(_out_path(args, args.output))
    _emit({"p": em.p.tolist(), "m": em.m, "elasticity": em.e.tolist()})


def cmd_benchmark(args, config):
    spec = _sim_spec(args, config)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    cfg = {kind: _fit_config(args, config, kind) for kind in ("cd", "icnn")}
    report = run_benchmark(spec, methods, cfg)
    report.to_csv(_out_path(args, args.output))
    sys.stdout.write(report.to_text())


def cmd_figure(args, config):
    stem = args.output_stem or args.kind
    out_dir = _out_path(args, ".")
    theta = None if args.theta is None else np.asarray(args.theta)
    if args.kind == "loss-curve":
        if args.data is None:
            raise ValidationError("loss-curve needs --data")
        inputs = {"d": load_dataset(args.data)}
    else:
        if args.model is None:
            raise ValidationError(f"{args.kind} needs --model")
        rep = _load_report(args.model)
        if args.kind == "contour":
            inputs = {"model": rep.model, "theta": theta}
        elif args.kind == "demand-curve":
            inputs = {"report": rep, "good": args.good - 1, "theta": theta}
        else:
            p = np.full(rep.model.k, 5.5) if args.p is None else np.asarray(args.p)
            inputs = {"model": rep.model, "p": p, "m": args.m}
    paths = emit_figure_data(args.kind, out_dir, plot=not args.no_plot, stem=stem, **inputs)
    _emit({"files": [str(p) for p in paths]})


COMMANDS = {"simulate": cmd_simulate, "check-garp": cmd_check_garp, "fit": cmd_fit,
            "predict": cmd_predict, "elasticity": cmd_elasticity, "benchmark": cmd_benchmark,
            "figure": cmd_figure}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args.config)
        handler = COMMANDS[args.command]
        if args.threads is not None:
            if args.threads < 1:
                raise ValidationError("--threads must be at least 1")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                handler(args, config)
        else:
            handler(args, config)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PearlError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
