"""Command-line interface: ``randbeta {expand,density,markov,simulate}``.

Exit codes: 0 ok, 2 input domain, 3 convergence, 4 hypothesis not met,
5 internal error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

from . import markov, simulation, transfer
from .dynamics import MAX_DIGITS, BetaParams, expand, parse_beta, remainder_bound
from .errors import ConvergenceError, DomainError, HypothesisError

EXIT_OK, EXIT_DOMAIN, EXIT_CONVERGENCE, EXIT_HYPOTHESIS, EXIT_INTERNAL = 0, 2, 3, 4, 5

MARKOV_HYPOTHESIS = (
    "the Markov construction needs 1 = b_1/beta + ... + b_n/beta^n with every b_i >= 1"
)


@dataclass
class CliConfig:
    beta: float
    p: float = 0.5
    seed: int = 0
    grid: int = 4096
    digits: int = 64
    samples: int = 1_000_000
    format: str = "json"
    output: str | None = None

    @property
    def params(self) -> BetaParams:
        return BetaParams(self.beta, self.p)


def _common(parser: argparse.ArgumentParser, fmt_default: str = "json", formats=("json", "csv")):
    parser.add_argument("--beta", required=True, help="base: a number or golden|silver|tribonacci")
    parser.add_argument("--p", type=float, default=0.5, help="probability of heads (greedy digit)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--grid", type=int, default=4096, help="Ulam cells")
    parser.add_argument("--digits", type=int, default=64)
    parser.add_argument("--samples", type=int, default=1_000_000)
    parser.add_argument("--format", choices=formats, default=fmt_default)
    parser.add_argument("--output", help="write to FILE instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randbeta", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_exp = sub.add_parser("expand", help="digits of a greedy, lazy or random expansion")
    _common(p_exp, fmt_default="text", formats=("text", "json"))
    p_exp.add_argument("--mode", choices=("greedy", "lazy", "random"), default="greedy")
    p_exp.add_argument("--x", type=float, required=True)

    p_den = sub.add_parser("density", help="invariant density of the random map")
    _common(p_den)
    p_den.add_argument("--method", choices=("auto", "ulam", "markov"), default="auto")
    p_den.add_argument("--scheme", choices=("cesaro", "power"), default="cesaro")
    p_den.add_argument("--tol", type=float, default=1e-10)
    p_den.add_argument("--max-iter", type=int, default=100_000)

    p_mar = sub.add_parser("markov", help="Markov partition, matrices and entropies")
    _common(p_mar, formats=("json",))

    p_sim = sub.add_parser("simulate", help="Monte-Carlo experiments")
    p_sim.add_argument("experiment", choices=("switch-freq", "blocks", "diagnose", "normality"))
    _common(p_sim, formats=("json",))
    p_sim.add_argument("--x", type=float, default=None, help="start point (default 0.4142 j_max)")
    p_sim.add_argument("--max-block", type=int, default=5)
    p_sim.add_argument("--mode", choices=("greedy", "lazy", "random"), default="random")
    return parser


def _config(args) -> CliConfig:
    return CliConfig(
        beta=parse_beta(args.beta),
        p=args.p,
        seed=args.seed,
        grid=args.grid,
        digits=args.digits,
        samples=args.samples,
        format=args.format,
        output=args.output,
    )


def _emit(text: str, config: CliConfig):
    if config.output:
        with open(config.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_expand(config: CliConfig, mode: str, x: float) -> int:
    params = config.params
    if config.digits > MAX_DIGITS:
        raise DomainError(f"--digits must be at most {MAX_DIGITS}")
    coins = None
    if mode == "random":
        gen = simulation.RngSpec(config.seed).generator()
        coins = iter((gen.random(MAX_DIGITS) < params.p).astype(int).tolist())
    digits = expand(params, x, config.digits, mode, coins)
    bound = remainder_bound(params, len(digits))
    if config.format == "json":
        doc = {
            "beta": params.beta,
            "p": params.p,
            "mode": mode,
            "x": x,
            "digits": list(digits),
            "coins_used": digits.coins_used,
            "error_bound": bound,
            "seed": config.seed,
        }
        _emit(json.dumps(doc, indent=2) + "\n", config)
    else:
        _emit(" ".join(map(str, digits)) + "\n" + f"# error bound {bound:.6e}\n", config)
    return EXIT_OK


def cmd_density(config: CliConfig, method: str, scheme: str, tol: float, max_iter: int) -> int:
    params = config.params
    model = None
    if method in ("auto", "markov"):
        try:
            model = markov.build_model(params)
        except HypothesisError:
            if method == "markov":
                raise
    if model is not None:
        density, used = markov.exact_density(model), "markov-exact"
    else:
        op = transfer.build_ulam(params, config.grid)
        density, used = transfer.fixed_density(op, scheme, tol, max_iter), "ulam"
    residual = transfer.invariance_residual(params, density)
    lower = transfer.density_lower_bound(density)
    meta = {
        "beta": params.beta,
        "p": params.p,
        "method": used,
        "cells": int(density.values.size),
        "residual": residual,
        "lower_bound": lower,
    }
    if config.format == "csv":
        _emit(density.to_csv(), config)
        print("# " + " ".join(f"{k}={v}" for k, v in meta.items()), file=sys.stderr)
    else:
        meta["rows"] = [
            {"x_lo": lo, "x_hi": hi, "value": v} for lo, hi, v in density.rows()
        ]
        _emit(json.dumps(meta, indent=2) + "\n", config)
    return EXIT_OK


def cmd_markov(config: CliConfig) -> int:
    params = config.params
    model = markov.build_model(params)
    doc = model.to_dict()
    entropies = {
        "chain": markov.chain_entropy(model),
        "conjecture": markov.conjecture_entropy(model),
        "closed_form": None,
        "max_entropy": math.log(1 + params.floor_beta),
    }
    if model.pattern.quadratic:
        entropies["closed_form"] = markov.entropy_closed_form(params)
    doc["entropies"] = entropies
    doc["aperiodic"] = markov.is_aperiodic(model.adjacency)
    doc["exact_density"] = list(markov.exact_density(model).values)
    _emit(json.dumps(doc, indent=2) + "\n", config)
    return EXIT_OK


def cmd_simulate(config: CliConfig, experiment: str, x0: float | None, max_block: int, mode: str) -> int:
    params = config.params
    rng = simulation.RngSpec(config.seed)
    if x0 is None:
        x0 = (math.sqrt(2) - 1) * params.j_max
    if experiment == "switch-freq":
        target = None
        try:
            target = markov.build_model(params).switch_mass
        except HypothesisError:
            pass
        report = simulation.switch_frequency(params, x0, config.samples, rng, target=target)
    elif experiment == "blocks":
        report = simulation.block_census(params, x0, config.digits, max_block, rng, mode)
    elif experiment == "diagnose":
        if abs(params.p - 0.5) > 1e-12:
            print("error: diagnose compares against the p = 1/2 Markov measure; use --p 0.5", file=sys.stderr)
            return EXIT_HYPOTHESIS
        model = markov.build_model(params)
        report = simulation.singularity_diagnostic(params, model, config.samples, rng)
    else:
        digits = simulation.random_expansion(params, x0, config.digits, rng, mode)
        report = simulation.normality_test(digits, max_block, params.floor_beta + 1)
        report.seed = rng
    _emit(json.dumps(report.records(), indent=2) + "\n", config)
    return EXIT_OK


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config(args)
        if args.command == "expand":
            return cmd_expand(config, args.mode, args.x)
        if args.command == "density":
            return cmd_density(config, args.method, args.scheme, args.tol, args.max_iter)
        if args.command == "markov":
            return cmd_markov(config)
        return cmd_simulate(config, args.experiment, args.x, args.max_block, args.mode)
    except HypothesisError as exc:
        print(f"error: {exc}. {MARKOV_HYPOTHESIS}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


def main():
    sys.exit(run())
