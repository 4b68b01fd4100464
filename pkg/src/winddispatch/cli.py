"""``winddispatch`` command line: calibrate, simulate, power, optimize, evaluate.

Every command reads a JSON config. Relative paths in a config resolve against
the config file's directory; outputs go to ``--out`` (default: the config's
``out_dir`` entry, else the config directory).

Exit codes: 0 success, 2 input/config error, 3 numerical divergence,
4 constraint violation.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import benchmarks
from ._validation import ConstraintViolation, DivergenceError, InputError
from .approximator import DEFAULT_LAYER_SIZES
from .calibrate import CalibrationHyperparams, fit
from .dispatch import (
    brute_force_optimal,
    evaluate_policy,
    load_solution,
    problem_from_dict,
    save_solution,
    solve_dp,
    trace_csv,
)
from .power import PowerParams, power_report
from .sde import SdeModel, SimulationGrid, TimeSeries, simulate_ensemble

log = logging.getLogger("winddispatch")

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_VIOLATION = 0, 2, 3, 4


class Run:
    """Loaded config plus resolved paths for one command invocation."""

    def __init__(self, args):
        self.config_path = os.path.abspath(args.config)
        self.base = os.path.dirname(self.config_path)
        try:
            with open(self.config_path, encoding="utf-8") as fh:
                self.config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(self.config, dict):
            raise InputError("config must be a JSON object")
        if args.seed is not None:
            self.config["seed"] = args.seed
        out = args.out or self.config.get("out_dir") or "."
        self.out_dir = out if os.path.isabs(out) else os.path.join(
            self.base if not args.out else os.getcwd(), out)
        os.makedirs(self.out_dir, exist_ok=True)

    def path(self, value):
        return value if os.path.isabs(value) else os.path.join(self.base, value)

    def output(self, key, default):
        name = self.config.get("outputs", {}).get(key, default)
        return os.path.join(self.out_dir, name)

    def require(self, key):
        if key not in self.config:
            raise InputError(f"config is missing {key!r}")
        return self.config[key]

    @property
    def seed(self):
        seed = self.config.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise InputError(f"seed must be a nonnegative integer, got {seed!r}")
        return seed

    def grid(self):
        g = self.require("grid")
        try:
            return SimulationGrid(float(g.get("t0", 0.0)), float(g["T"]), float(g["dt"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad grid: {exc}") from None

    def model(self, key="model"):
        value = self.require(key)
        if isinstance(value, dict):
            return SdeModel.from_dict(value)
        return SdeModel.load(self.path(value))


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, doc):
    _write_text(path, json.dumps(doc, indent=1) + "\n")


def cmd_calibrate(run):
    cfg = run.config
    kind = cfg.get("state_kind", "wind_speed")
    series = TimeSeries.load_csv(run.path(run.require("series")), nonnegative=kind != "unconstrained")
    hp_cfg = dict(cfg.get("hyperparams", {}))
    hp_cfg.setdefault("seed", run.seed)
    try:
        hp = CalibrationHyperparams.from_dict(hp_cfg)
    except TypeError as exc:
        raise InputError(f"bad hyperparams: {exc}") from None
    layers = tuple(cfg.get("layer_sizes", DEFAULT_LAYER_SIZES))
    model, training_log = fit(series, hp, cfg.get("init_seed", run.seed), layers, kind)
    model_path = run.output("model", "model.json")
    model.save(model_path)
    _write_text(run.output("log", "training_log.csv"), training_log.to_csv())
    SdeModel.load(model_path)
    log.info("wrote %s", model_path)


def cmd_simulate(run):
    model = run.model()
    grid = run.grid()
    n_paths = run.config.get("n_paths", 1)
    x0 = run.require("x0")
    paths = simulate_ensemble(model, x0, grid, n_paths, run.seed)
    t = grid.times
    lines = ["t," + ",".join(f"path_{i}" for i in range(n_paths))]
    for k in range(t.size):
        lines.append(f"{t[k]:.17g}," + ",".join(f"{x:.17g}" for x in paths[:, k]))
    _write_text(run.output("ensemble", "ensemble.csv"), "\n".join(lines) + "\n")
    std = paths.std(axis=0, ddof=1) if n_paths > 1 else np.zeros(t.size)
    _write_json(run.output("summary", "summary.json"), {
        "n_paths": n_paths, "seed": run.seed,
        "t": t.tolist(), "mean": paths.mean(axis=0).tolist(), "std": std.tolist(),
    })


def cmd_power(run):
    model = run.model()
    try:
        pp = PowerParams(**run.config.get("power_params", {}))
    except TypeError as exc:
        raise InputError(f"bad power_params: {exc}") from None
    report = power_report(model, pp, run.require("v0"), run.grid(),
                          run.config.get("n_paths", 100), run.seed)
    _write_json(run.output("report", "power_report.json"), report)


def _problem(run):
    return problem_from_dict(run.config, run.base)


def cmd_optimize(run, oracle=False):
    problem = _problem(run)
    policy, values = solve_dp(problem)
    policy.validate(problem)
    extra = {"oracle_value": brute_force_optimal(problem)} if oracle else None
    doc = save_solution(run.output("solution", "solution.json"), problem, policy, values, extra)
    log.info("optimal expected fossil energy %.6g J", doc["optimal_value"])


def cmd_evaluate(run):
    problem = _problem(run)
    policy_file = run.config.get("policy")
    policy_path = run.path(policy_file) if policy_file else run.output("solution", "solution.json")
    policy, _, _ = load_solution(policy_path)
    policy.validate(problem)
    stats, rows = evaluate_policy(policy, problem, run.config.get("n_rollouts", 100), run.seed,
                                  trace=True)
    _write_json(run.output("stats", "rollout_stats.json"), stats.to_dict())
    _write_text(run.output("trace", "trace.csv"), trace_csv(rows))


def cmd_synth(run):
    cfg = dict(run.config)
    kind = cfg.pop("kind", "ou")
    out = cfg.pop("output", "series.csv")
    for key in ("seed", "out_dir", "outputs"):
        cfg.pop(key, None)
    gen = {"ou": benchmarks.ou_series, "gbm": benchmarks.gbm_series}.get(kind)
    if gen is None:
        raise InputError(f"unknown synthetic series kind {kind!r}")
    try:
        series = gen(seed=run.seed, **cfg)
    except TypeError as exc:
        raise InputError(f"bad synth config: {exc}") from None
    series.save_csv(os.path.join(run.out_dir, out))


HELP = {
    "calibrate": "fit drift and diffusion networks to a wind series",
    "simulate": "simulate an ensemble of wind paths from a fitted model",
    "power": "expected power-rate integral and physical energy estimates",
    "optimize": "solve the storage dispatch problem by dynamic programming",
    "evaluate": "roll a saved policy forward on simulated paths",
}

COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "power": cmd_power,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="winddispatch", description="Wind SDE calibration, power analysis and storage dispatch.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(HELP) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name, **({"help": HELP[name]} if name in HELP else {}))
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (default: config out_dir or its folder)")
        if name == "optimize":
            p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run = Run(args)
        if args.command == "optimize":
            cmd_optimize(run, oracle=args.oracle)
        else:
            COMMANDS[args.command](run)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConstraintViolation as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
