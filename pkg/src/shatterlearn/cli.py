"""Command-line entry point: deterministic runs, CSV traces, summaries.

Every command accepts ``--config FILE`` (JSON) whose keys are the long
option names; explicit flags override the file.  All numeric trace and
summary fields carry the exact rational string next to a decimal
approximation.  Exit codes: 0 ok, 2 file/usage, 3 capacity, 4 invariant,
5 realizability.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

from .adversary import (
    AdaptiveRealizableAdversary,
    ImproperAdapter,
    ProperAdapter,
    lower_bound_instance,
    run_lower_bound,
)
from .core import DyadicValue, FiniteHypothesisClass, render_rational
from .dimensions import fat, ldim, sfat
from .errors import CapacityError, InvariantError, RealizabilityError, ShatterlearnError
from .experts import OseConfig, OseLearner
from .games import GameSpec, adversarial_baseline, play_game, regret
from .hil import HilLearner
from .hpl import HplConfig, HplLearner, Stabilizer
from .minimax import MatrixGame, solve
from .core import MixedHypothesis, tv_distance

EXIT_FILE = 2
EXIT_CAPACITY = 3
EXIT_INVARIANT = 4
EXIT_REALIZABILITY = 5


def _num(value: Fraction) -> str:
    return render_rational(value)


def _pair(value: Fraction) -> List[str]:
    return [render_rational(value), repr(float(value))]


def _write_csv(path: str, header: List[str], rows: List[List]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _load_class(path: str) -> FiniteHypothesisClass:
    return FiniteHypothesisClass.load(path)


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if getattr(args, "config", None):
        with open(args.config) as handle:
            payload = json.load(handle)
        for key, value in payload.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                parser.error(f"unknown config key {key!r}")
            if parser.get_default(attr) == getattr(args, attr):
                setattr(args, attr, value)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_dims(args) -> int:
    cls_ = _load_class(args.class_file)
    alpha = DyadicValue.parse(args.alpha)
    d, certificate = sfat(cls_, alpha)
    print(f"sfat({cls_.name or 'class'}, {args.alpha}) = {d}")
    binary = all(v in (0, 1) for row in cls_.hypotheses for v in row)
    if binary:
        print(f"ldim = {ldim(cls_)}")
    print(f"fat = {fat(cls_, alpha)}")
    if args.certificate and certificate is not None:
        payload = {
            "depth": certificate.depth,
            "alpha": _num(alpha),
            "labels": {"".join("LR"[b > 0] for b in k): v for k, v in certificate.labels.items()},
            "witness": {
                "".join("LR"[b > 0] for b in k): _num(v) for k, v in certificate.witness.items()
            },
        }
        Path(args.certificate).write_text(json.dumps(payload, indent=1) + "\n")
        print(f"certificate written to {args.certificate}")
    return 0


def cmd_run_hil(args) -> int:
    cls_ = _load_class(args.class_file)
    if cls_.grid_log2_denominator < args.scales:
        cls_ = cls_.with_grid(args.scales)
    learner = HilLearner(cls_, args.scales, args.rounds)
    adversary = AdaptiveRealizableAdversary(cls_, args.target, args.strategy, args.seed)
    rows = []
    for _ in range(args.rounds):
        example = adversary.next_example(lambda x: learner.predict(x))
        record = learner.update(example.x, example.y)
        rows.append(
            [record.t, record.x, *_pair(record.y), *_pair(record.emitted),
             *_pair(record.delta), *_pair(record.potential_after)]
        )
    if args.out:
        _write_csv(
            args.out,
            ["t", "x", "y", "y_float", "prediction", "prediction_float",
             "delta", "delta_float", "potential", "potential_float"],
            rows,
        )
    bound = learner.loss_bound()
    ok = learner.cumulative_delta <= bound
    print(f"cumulative_loss = {_num(learner.cumulative_loss)} ({float(learner.cumulative_loss):.6f})")
    print(f"cumulative_delta = {_num(learner.cumulative_delta)} ({float(learner.cumulative_delta):.6f})")
    print(f"bound = {_num(bound)} ({float(bound):.6f})")
    print(f"bound_satisfied = {ok}")
    if not ok:
        return EXIT_INVARIANT
    return 0


def cmd_run_hpl(args) -> int:
    cls_ = _load_class(args.class_file)
    config = HplConfig.default(args.scales)
    if cls_.grid_log2_denominator < config.n_scales:
        cls_ = cls_.with_grid(config.n_scales)
    learner = HplLearner(cls_, config)
    eta = Fraction(1, args.xi)
    stabilizer = Stabilizer(eta)
    adversary = AdaptiveRealizableAdversary(cls_, args.target, args.strategy, args.seed)
    rows = []
    previous = None
    for _ in range(args.rounds):
        mixture = learner.emit()
        smoothed = stabilizer.push(mixture)
        step = tv_distance(previous, smoothed) if previous is not None else Fraction(0)
        previous = smoothed
        example = adversary.next_example(
            lambda x: mixture.expected_value_at(cls_, x)
        )
        record = learner.observe(example.x, example.y)
        weights = ";".join(_num(w) for w in record.weights_after)
        rows.append(
            [record.t, record.branch, example.x, *_pair(example.y),
             *_pair(record.delta), len(smoothed.support), *_pair(step), weights]
        )
    if args.out:
        _write_csv(
            args.out,
            ["t", "branch", "x", "y", "y_float", "delta", "delta_float",
             "support_size", "tv_step", "tv_step_float", "level_weights"],
            rows,
        )
    bound = learner.delta_bound()
    ok = learner.cumulative_delta <= bound
    print(f"cumulative_delta = {_num(learner.cumulative_delta)} ({float(learner.cumulative_delta):.6f})")
    print(f"bound = {float(bound):.6f}")
    print(f"failure_rounds = {learner.failure_rounds}")
    print(f"bound_satisfied = {ok}")
    return 0 if ok else EXIT_INVARIANT


def cmd_run_ose(args) -> int:
    cls_ = _load_class(args.class_file)
    alpha = DyadicValue.parse(args.alpha)
    hpl_scales = max(1, cls_.grid_log2_denominator)
    hpl = HplConfig.default(
        hpl_scales,
        mixture_levels=max(1, hpl_scales - 1),
        indicator_levels=max(1, hpl_scales - 1),
        highvote_divisor=1 if hpl_scales == 1 else 2,
    )
    config = OseConfig(
        alpha=alpha,
        eta_oh=DyadicValue.parse(args.eta_oh),
        eta_psr=DyadicValue.parse(args.eta_psr),
        horizon=args.rounds,
        hpl=hpl,
        check_invariants=False,
    )
    learner = OseLearner(cls_, config, mode=args.mode)
    adversary = AdaptiveRealizableAdversary(cls_, args.target, args.strategy, args.seed)
    rows = []
    previous = None
    bound = config.stability_bound()
    for t in range(args.rounds):
        mixture = learner.announce()
        step = tv_distance(previous, mixture) if previous is not None else Fraction(0)
        if step > bound:
            print(f"stability violated at t={t}: {step} > {bound}")
            return EXIT_INVARIANT
        previous = mixture
        example = adversary.next_example(
            lambda x: mixture.expected_value_at(cls_, x)
        )
        from .core import Example, expected_abs_loss

        loss = expected_abs_loss(mixture, example, cls_)
        learner.observe(example.x, example.y)
        rows.append(
            [t + 1, example.x, *_pair(example.y), *_pair(loss), *_pair(step),
             len(mixture.support)]
        )
    if args.out:
        _write_csv(
            args.out,
            ["t", "x", "y", "y_float", "loss", "loss_float", "tv_step",
             "tv_step_float", "support_size"],
            rows,
        )
    print(f"experts = {learner.expert_total}")
    print(f"stability_bound = {_num(bound)} ({float(bound):.6f})")
    print(f"out_of_regime = {learner.out_of_regime}")
    return 0


def cmd_run_game(args) -> int:
    game = GameSpec.load(args.game_file)
    opening = None
    if args.opening:
        opening = [tuple(int(a) for a in prof.split(",")) for prof in args.opening.split(";")]
    trace = play_game(
        game,
        horizon=args.rounds,
        resolution=args.mesh,
        expert_rounds=args.expert_rounds,
        opening_moves=opening,
    )
    rows = []
    for t in range(args.rounds):
        for k, p in enumerate(trace.players):
            rows.append(
                [t + 1, k, *_pair(p.realized_losses[t]), *_pair(p.snap_errors[t])]
            )
    if args.out:
        _write_csv(
            args.out,
            ["t", "player", "loss", "loss_float", "mesh_error", "mesh_error_float"],
            rows,
        )
    for k in range(game.n_players):
        r = regret(trace, k)
        print(f"player{k}_regret = {_num(r)} ({float(r):.6f})")
    if trace.loss_stability:
        worst = max(trace.loss_stability)
        print(f"max_loss_drift = {_num(worst)} ({float(worst):.6f})")
    print(f"out_of_regime = {trace.out_of_regime}")
    return 0


def cmd_lower_bound(args) -> int:
    alpha_prime = DyadicValue.parse(args.alpha_prime)
    cls_, adversary = lower_bound_instance(args.d, alpha_prime)
    floor = Fraction(args.d) * alpha_prime / 2
    if args.learner == "hil":
        learner = HilLearner(cls_.with_grid(9), args.scales, args.d)
        adapter = ImproperAdapter(learner)
    elif args.learner == "hpl":
        config = HplConfig.default(args.scales)
        learner = HplLearner(cls_.with_grid(max(9, args.scales)), config)
        adapter = ProperAdapter(learner, cls_)
    else:
        hpl = HplConfig.default(
            2, mixture_levels=1, indicator_levels=1, highvote_divisor=1
        )
        config = OseConfig(
            alpha=Fraction(1, 4),
            eta_oh=Fraction(1, 8),
            eta_psr=Fraction(1, 8),
            horizon=args.d,
            hpl=hpl,
            check_invariants=False,
        )
        learner = OseLearner(cls_.with_grid(2), config, mode="full")
        adapter = ProperAdapter(learner, cls_.with_grid(2))
    total = run_lower_bound(adapter, adversary)
    ok = total >= floor
    print(f"forced_loss = {_num(total)} ({float(total):.6f})")
    print(f"floor = {_num(floor)} ({float(floor):.6f})")
    print(f"floor_met = {ok}")
    return 0 if ok else EXIT_INVARIANT


def cmd_minimax(args) -> int:
    with open(args.matrix) as handle:
        payload = json.load(handle)
    rows = [[Fraction(str(v)) for v in row] for row in payload]
    value, p, q = solve(MatrixGame(tuple(tuple(r) for r in rows)))
    print(f"value = {_num(value)} ({float(value):.6f})")
    print("row_strategy = " + " ".join(_num(v) for v in p))
    print("col_strategy = " + " ".join(_num(v) for v in q))
    return 0


def cmd_report(args) -> int:
    print(f"{'trace':<30} {'rows':>6} {'total_loss':>14} {'loss/T':>10}")
    series = []
    for path in args.traces:
        with open(path) as handle:
            reader = csv.DictReader(handle)
            rows = list(reader)
        loss_key = "loss" if rows and "loss" in rows[0] else "delta"
        total = sum((_parse_rational(r[loss_key]) for r in rows), Fraction(0))
        series.append((path, len(rows), total))
        print(f"{Path(path).name:<30} {len(rows):>6} {float(total):>14.6f} {float(total)/max(len(rows),1):>10.6f}")
    if len(series) >= 2:
        print("log-log loss slopes between consecutive traces:")
        for (p1, n1, l1), (p2, n2, l2) in zip(series, series[1:]):
            if n1 and n2 and l1 > 0 and l2 > 0 and n1 != n2:
                slope = (math.log(float(l2)) - math.log(float(l1))) / (
                    math.log(n2) - math.log(n1)
                )
                print(f"  {Path(p1).name} -> {Path(p2).name}: {slope:.4f}")
    return 0


def _parse_rational(text: str) -> Fraction:
    text = text.strip()
    if "2^" in text:
        return DyadicValue.parse(text)
    return Fraction(text)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shatterlearn",
        description="Exact online learners over finite hypothesis classes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("dims", help="exact shattering dimensions with certificate")
    p.add_argument("--class", dest="class_file", required=True)
    p.add_argument("--alpha", required=True, help="scale, e.g. 1/2^1")
    p.add_argument("--certificate", help="write the shattered tree here")
    add_common(p)
    p.set_defaults(func=cmd_dims)

    p = sub.add_parser("run-hil", help="improper multi-scale learner on a realizable stream")
    p.add_argument("--class", dest="class_file", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--lambda", dest="scales", type=int, default=4)
    p.add_argument("--strategy", default="round-robin")
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_run_hil)

    p = sub.add_parser("run-hpl", help="proper learner on a realizable stream")
    p.add_argument("--class", dest="class_file", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--lambda", dest="scales", type=int, default=7)
    p.add_argument("--eta", dest="xi", type=int, default=4, help="window length 1/eta")
    p.add_argument("--strategy", default="round-robin")
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_run_hpl)

    p = sub.add_parser("run-ose", help="optimistic experts learner")
    p.add_argument("--class", dest="class_file", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--alpha", default="1/2^2")
    p.add_argument("--eta-oh", default="1/2^3")
    p.add_argument("--eta-psr", default="1/2^3")
    p.add_argument("--mode", default="full", choices=("full", "lazy"))
    p.add_argument("--strategy", default="round-robin")
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_run_ose)

    p = sub.add_parser("run-game", help="self-play on a binary game")
    p.add_argument("--game", dest="game_file", required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--mesh", type=int, default=4)
    p.add_argument("--expert-rounds", type=int, default=3)
    p.add_argument("--opening", help="forced openings, e.g. '0,0;1,0'")
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_run_game)

    p = sub.add_parser("lower-bound", help="forced-loss adversary vs a learner")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--alpha-prime", default="1/2^1")
    p.add_argument("--learner", choices=("hil", "hpl", "ose"), default="hil")
    p.add_argument("--lambda", dest="scales", type=int, default=7)
    add_common(p)
    p.set_defaults(func=cmd_lower_bound)

    p = sub.add_parser("minimax", help="exact zero-sum matrix game solution")
    p.add_argument("--matrix", required=True, help="JSON matrix of rationals")
    add_common(p)
    p.set_defaults(func=cmd_minimax)

    p = sub.add_parser("report", help="summarize trace CSVs")
    p.add_argument("--traces", nargs="+", required=True)
    add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, parser)
        return args.func(args)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except RealizabilityError as exc:
        print(f"realizability violated: {exc}", file=sys.stderr)
        return EXIT_REALIZABILITY
    except (InvariantError, ShatterlearnError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
