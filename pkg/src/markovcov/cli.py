"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import typing
from pathlib import Path

import numpy as np

from .errors import NumericalError
from .estimation import ESTIMATORS, fit_estimator
from .experiments import KINDS, ExperimentConfig, run_experiment
from .kriging import solve_kriging
from .markovtest import markov_test
from .processes import Grid, Irregular, sample_curves
from .tables import ResultTable, read_curves, write_curves

PROG = "markovcov"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(conv):
    def parse(text):
        try:
            return tuple(conv(x) for x in text.split(",") if x.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}")
    return parse


def _common(parser):
    g = parser.add_argument_group("process and design")
    g.add_argument("--process", choices=("bm", "ou", "kebm"))
    g.add_argument("--theta", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--h", type=float)
    g.add_argument("--q", type=int, help="quadrature nodes for the kebm kernel")
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--r", type=int, help="observations per curve (irregular design)")
    g.add_argument("--noise-sd", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory, or a .csv file for single outputs")
    g.add_argument("--config", help="flat key=value file; its values override flags")
    e = parser.add_argument_group("estimation, testing and experiments")
    e.add_argument("--alpha", type=float)
    e.add_argument("--replicates", type=int)
    e.add_argument("--estimators", type=_csv_list(str))
    e.add_argument("--calibration", choices=("mc", "bonferroni"))
    e.add_argument("--draws", type=int)
    e.add_argument("--bandwidth", type=float)
    e.add_argument("--noise", choices=("known", "estimate"))
    e.add_argument("--n-grid", type=_csv_list(int))
    e.add_argument("--p-grid", type=_csv_list(int))
    e.add_argument("--h-grid", type=_csv_list(float))
    e.add_argument("--p-ratio", type=float)
    e.add_argument("--policy", choices=("leave-one-out", "midpoint", "fixed"))
    e.add_argument("--t0", type=float)
    e.add_argument("--ridge", type=float)
    e.add_argument("--contour", action="store_true", default=None)
    e.add_argument("--n-jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Markov covariance estimation, testing and kriging.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw curves and write them as CSV")
    _common(p)

    p = sub.add_parser("estimate", help="fit covariance estimators")
    p.add_argument("--input", help="curve CSV; simulated from the process flags if omitted")
    _common(p)

    p = sub.add_parser("test", help="test the Markov property")
    p.add_argument("--input", help="dense curve CSV; simulated from the process flags if omitted")
    _common(p)

    p = sub.add_parser("krige", help="kriging benchmark, or predictions for input curves")
    p.add_argument("--input", help="dense curve CSV to krige at --t0 from the fitted covariance")
    _common(p)

    p = sub.add_parser("experiment", help="run an experiment and write CSV and SVG outputs")
    p.add_argument("kind", choices=KINDS)
    _common(p)
    return parser


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_HINTS = typing.get_type_hints(ExperimentConfig)


def _convert(key, text):
    hint = _HINTS[key]
    args = [a for a in typing.get_args(hint) if a is not type(None)] or [hint]
    base = args[0]
    if text.strip().lower() in ("none", ""):
        return None
    if base is bool:
        if text.strip().lower() in ("1", "true", "yes", "on"):
            return True
        if text.strip().lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(text)
    if base is tuple:
        conv = {"n_grid": int, "p_grid": int, "h_grid": float}.get(key, str)
        return tuple(conv(x.strip()) for x in text.split(",") if x.strip())
    return base(text.strip())


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _FIELDS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(key, val)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {val.strip()!r}")
    return out


def make_config(args, kind) -> ExperimentConfig:
    values = {k: v for k, v in vars(args).items() if k in _FIELDS and v is not None}
    if args.config:
        values.update(read_config(args.config))
    values["kind"] = values.get("kind", kind)
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _emit(text, out, default_name):
    """Write to ``out`` (a .csv path or a directory) or to stdout."""
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.suffix.lower() != ".csv":
        path.mkdir(parents=True, exist_ok=True)
        path = path / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _data(args, cfg, need_dense=False):
    if getattr(args, "input", None):
        obs = read_curves(args.input, cfg.noise_sd)
    else:
        design = Irregular(cfg.r) if cfg.r > 0 else Grid.regular(cfg.p)
        obs = sample_curves(cfg.spec(), design, cfg.n, cfg.noise_sd, seed=cfg.seed)
    if need_dense and not obs.is_dense:
        raise UsageError("this command needs dense curves (a grid header, one row per curve)")
    return obs


def cmd_simulate(args):
    cfg = make_config(args, "estimate-one")
    obs = _data(args, cfg)
    _emit(write_curves(obs, provenance=cfg.provenance()), cfg.out, "curves.csv")


def cmd_estimate(args):
    cfg = make_config(args, "estimate-one")
    obs = _data(args, cfg)
    if not obs.is_dense and args.estimators is None:
        cfg.estimators = ("markov",)
    if not obs.is_dense and set(cfg.estimators) - {"markov"}:
        raise UsageError("only the markov estimator handles irregular curves")
    p = cfg.p if (args.p is not None or not obs.is_dense) else len(obs.grid)
    noise_var = "estimate" if cfg.noise == "estimate" else cfg.noise_sd ** 2
    if cfg.out is not None and Path(cfg.out).suffix.lower() == ".csv" and len(cfg.estimators) > 1:
        raise UsageError("--out must be a directory when fitting several estimators")
    prov = cfg.provenance()
    for name in cfg.estimators:
        est = fit_estimator(name, obs, cfg.bandwidth, p=p, noise_var=noise_var)
        _emit(est.to_csv(provenance={**prov, "estimator": name}), cfg.out, f"estimate_{name}.csv")


def cmd_test(args):
    cfg = make_config(args, "test-one")
    if getattr(args, "input", None):
        obs = _data(args, cfg, need_dense=True)
        report = markov_test(obs, cfg.alpha, cfg.calibration, cfg.draws, seed=cfg.seed)
    else:
        res = run_experiment(cfg)
        report = res.summary["report"]
    _emit(report.to_csv(provenance=cfg.provenance()), cfg.out, "test_report.csv")


def cmd_krige(args):
    cfg = make_config(args, "kriging")
    if not getattr(args, "input", None):
        res = run_experiment(cfg)
        if cfg.out is None:
            for table in res.tables.values():
                if table.name != "kriging_errors":
                    sys.stdout.write(table.to_csv())
        else:
            res.save(cfg.out)
        return
    if cfg.t0 is None:
        raise UsageError("krige --input needs --t0")
    obs = _data(args, cfg, need_dense=True)
    pts = obs.grid.points
    keep = np.abs(pts - cfg.t0) > 0
    table = ResultTable("kriging_predictions", ["estimator", "curve", "t0", "prediction", "variance"],
                        provenance=cfg.provenance())
    for name in cfg.estimators:
        est = fit_estimator(name, obs, cfg.bandwidth, noise_var=cfg.noise_sd ** 2)
        system = solve_kriging(est, pts[keep], cfg.t0, cfg.ridge)
        for i, y in enumerate(obs.values):
            table.add(estimator=name, curve=i, t0=cfg.t0, prediction=system.predict(y[keep]),
                      variance=system.variance)
    _emit(table.to_csv(), cfg.out, "kriging_predictions.csv")


def cmd_experiment(args):
    cfg = make_config(args, args.kind)
    res = run_experiment(cfg)
    if cfg.out is None:
        for table in res.tables.values():
            sys.stdout.write(table.to_csv())
        for name, text in res.files.items():
            sys.stdout.write(f"# file={name}\n{text}")
    else:
        res.save(cfg.out)


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "test": cmd_test,
    "krige": cmd_krige,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"{PROG}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
