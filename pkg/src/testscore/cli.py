"""Command line entry point: ``testscore <command> [options]``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys

from . import harness
from .errors import InvalidParameterError, TestScoreError
from .instance import load_instance, support_bound, to_json, to_text
from .rng import Streams
from .sampling import AccuracySpec, hoeffding_samples, mcdiarmid_samples, topset_samples
from .scores import estimate_item_score, estimate_scores, exact_score
from .solvers import SOLUTION_HEADER, budget_cut, celf, rank_order, streaming_tsg, tsg
from .stackexchange import BetaPrior, build_instance, build_profiles, holdout_csv, parse_dump, profiles_csv
from .valuefns import g_sup_norms, parse_value_fn

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3
LAMBDA_GRID = [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 27.0]

log = logging.getLogger("testscore")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _emit(args, name: str, text: str):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        log.info("wrote %s", path)
    else:
        sys.stdout.write(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _solution_csv(args, algorithm, sol, inst) -> str:
    return _csv([sol.as_row(algorithm, args.seed, len(inst), inst.budget, args.g)], SOLUTION_HEADER)


def _synthetic_cfg(args, **over) -> harness.SyntheticConfig:
    kw = dict(n=args.n, B=args.B, value_fn=args.g, dist=args.dist, lam=args.lam, N=args.N,
              instances=args.instances, seed=args.seed, cost_mode=args.cost_mode, test_reps=args.test_reps)
    kw.update(over)
    return harness.SyntheticConfig(**kw)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_gen(args):
    inst = harness.generate_synthetic(_synthetic_cfg(args), args.index)
    text = to_json(inst) + "\n" if args.format == "json" else to_text(inst)
    _emit(args, f"instance_{args.index}.{'json' if args.format == 'json' else 'txt'}", text)
    return EXIT_OK


def _load(args):
    inst = load_instance(args.instance)
    return inst, parse_value_fn(args.g), Streams(args.seed)


def cmd_solve(args):
    inst, g, streams = _load(args)
    scores = estimate_scores(inst, g, args.N, streams)
    sol = tsg(inst, scores, eval_reps=args.eval_reps, rng=streams)
    if args.out:
        _emit(args, "scores.csv", scores.to_csv())
    _emit(args, "solution.csv", _solution_csv(args, "tsg", sol, inst))
    return EXIT_OK


def cmd_stream(args):
    inst, g, streams = _load(args)
    scores = estimate_scores(inst, g, args.N, streams)
    order = list(inst.ids)
    if args.shuffle:
        order = [int(i) for i in streams.get("arrival").permutation(order)]
    sol, stats = streaming_tsg((inst[i] for i in order), inst.budget, lambda it: scores.r_hat(it.id),
                               args.eval_reps, streams, g=g, instance=inst)
    text = _solution_csv(args, "streaming_tsg", sol, inst)
    text += _csv([[stats.peak_buffer_items, stats.updates, ";".join(map(str, stats.final_buffer))]],
                 ["peak_buffer_items", "updates", "final_buffer"])
    _emit(args, "stream.csv", text)
    return EXIT_OK


def cmd_celf(args):
    inst, g, streams = _load(args)
    sol = celf(inst, g, args.N, streams)
    _emit(args, "celf.csv", _solution_csv(args, "celf", sol, inst))
    return EXIT_OK


def cmd_compare(args):
    rows = harness.run_comparison(_synthetic_cfg(args))
    _emit(args, "compare.csv", harness.rows_to_csv(rows, args.deterministic_header))
    s = harness.summarize(r.ratio for r in rows)
    log.info("median ratio %.4f, IQR %.4f, min %.4f", s.median, s.iqr, s.minimum)
    return EXIT_OK


def _parse_values(axis, raw):
    if axis == "lambda" and raw == "grid":
        return LAMBDA_GRID
    return [v.strip() for v in raw.split(",") if v.strip()] if raw else []


def cmd_sweep(args):
    values = _parse_values(args.axis, args.values)
    if not values:
        raise UsageError("--values must list at least one value")
    cfg = _synthetic_cfg(args, instances=100 if args.full else args.instances)
    results = harness.sweep(cfg, args.axis, values, out_dir=args.out, deterministic=args.deterministic_header)
    if not args.out:
        sys.stdout.write(harness.summary_csv(args.axis, results))
    return EXIT_OK


def cmd_plan(args):
    inst, g, streams = _load(args)
    acc = AccuracySpec(args.epsilon, args.delta)
    r, sups = {}, {}
    for it in inst.items:
        k = inst.k(it.id)
        try:
            r[it.id] = exact_score(it, g, inst.budget)
        except TestScoreError:
            samples = it.dist.sample(streams.get("plan", it.id), max(args.N, k))
            r[it.id] = estimate_item_score(samples, k, g)[0]
        b = support_bound(it.dist, args.truncation_quantile)
        sups[it.id] = g_sup_norms(g, b, k)
    order = rank_order(inst.ids, r)
    cut = budget_cut([inst[i].cost for i in order], inst.budget)
    r_cut = r[order[min(cut, len(order) - 1)]]
    ids = sorted(inst.ids)
    ks = [inst.k(i) for i in ids]
    top = topset_samples(ks, [sups[i][0] for i in ids], [sups[i][1] for i in ids], r_cut, len(ids), acc) \
        if r_cut > 0 else [math.inf] * len(ids)
    rows = []
    for i, k, t_top in zip(ids, ks, top):
        gs, g1 = sups[i]
        th = hoeffding_samples(k, gs, r[i], acc) if r[i] > 0 and gs > 0 else "inf"
        tm = mcdiarmid_samples(k, g1, r[i], acc) if r[i] > 0 and g1 > 0 else "inf"
        rows.append([i, k, th, tm, t_top if math.isfinite(t_top) else "inf"])
    _emit(args, "plan.csv", _csv(rows, ["id", "k", "T_hoeffding", "T_mcdiarmid", "T_topset"]))
    return EXIT_OK


def cmd_ingest(args):
    records = parse_dump(args.posts, args.votes)
    try:
        a0, b0 = (float(x) for x in args.prior.split(","))
    except ValueError:
        raise UsageError(f"--prior must be 'a0,b0', got {args.prior!r}") from None
    profiles = build_profiles(records, args.min_answers, BetaPrior(a0, b0), include_unvoted=not args.exclude_unvoted)
    log.info("%d answers, %d profiles", len(records), len(profiles))
    _emit(args, "profiles.csv", profiles_csv(profiles))
    if args.lam is not None:
        split = build_instance(profiles, args.lam, args.holdout, args.train, args.seed, mu_source=args.mu_source)
        if split.dropped:
            log.warning("dropped %d users whose cost exceeds the budget", len(split.dropped))
        _emit(args, "instance.txt", to_text(split.instance))
        _emit(args, "test.csv", holdout_csv(split.test))
    return EXIT_OK


def cmd_verify(args):
    rep = harness.verify_suite(args.corpus_size, args.seed)
    sys.stdout.write("\n".join(rep.lines()) + "\n")
    return EXIT_OK if rep.passed else EXIT_VERIFY


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_synthetic(p):
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--B", type=float, default=30.0)
    p.add_argument("--dist", default="bernoulli", help="bernoulli | exponential | pareto:<shape> | deterministic")
    p.add_argument("--lam", type=float, default=0.0, help="cost slope: c = 1 + lam * mu")
    p.add_argument("--cost-mode", default="correlated", choices=["correlated", "independent"])
    p.add_argument("--N", type=int, default=250, help="training samples per item")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--test-reps", type=int, default=harness.TEST_REPS)


def _common(top_level: bool) -> argparse.ArgumentParser:
    # global flags may go before or after the command; the top-level copy
    # suppresses defaults so it never overwrites a value given later
    def d(v):
        return argparse.SUPPRESS if top_level else v

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=d(0))
    common.add_argument("--out", default=d(None), help="output directory (default: stdout)")
    common.add_argument("--format", default=d("csv"), choices=["csv", "json", "text"])
    common.add_argument("--deterministic-header", action="store_true", default=d(False),
                        help="omit timestamps and wall times so reruns are byte-identical")
    common.add_argument("--config", default=d(None), help="key=value file of option defaults")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    common.add_argument("--g", default=d("modular"), help="value function, e.g. modular, sqrt, ces:2, topr:1")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(False)
    parser = argparse.ArgumentParser(prog="testscore", description=__doc__.splitlines()[0],
                                     parents=[_common(True)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic instance")
    _add_synthetic(p)
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    for name, func, helptext in (("solve", cmd_solve, "estimate scores and run the score greedy"),
                                 ("stream", cmd_stream, "single-pass score greedy"),
                                 ("celf", cmd_celf, "lazy greedy benchmark")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("instance")
        p.add_argument("--N", type=int, default=250)
        p.add_argument("--eval-reps", type=int, default=10_000)
        if name == "stream":
            p.add_argument("--shuffle", action="store_true", help="random arrival order")
        p.set_defaults(func=func)

    p = sub.add_parser("compare", parents=[common], help="score greedy vs lazy greedy on synthetic instances")
    _add_synthetic(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", parents=[common], help="comparison over a parameter axis")
    _add_synthetic(p)
    p.add_argument("--axis", required=True, choices=sorted(harness.SWEEP_AXES))
    p.add_argument("--values", default="", help="comma-separated values ('grid' for the lambda grid)")
    p.add_argument("--full", action="store_true", help="100 instances per cell")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plan", parents=[common], help="sufficient sample sizes per item")
    p.add_argument("instance")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--N", type=int, default=100_000, help="samples for scores without a closed form")
    p.add_argument("--truncation-quantile", type=float, default=1 - 1e-6)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("ingest", parents=[common], help="build instances from a StackExchange dump")
    p.add_argument("--posts", required=True)
    p.add_argument("--votes", required=True)
    p.add_argument("--min-answers", type=int, default=130)
    p.add_argument("--prior", default="5,5", help="a0,b0")
    p.add_argument("--exclude-unvoted", action="store_true")
    p.add_argument("--lam", type=float, default=None, help="also build an instance with this cost slope")
    p.add_argument("--train", type=int, default=100)
    p.add_argument("--holdout", type=int, default=30)
    p.add_argument("--mu-source", default="all", choices=["all", "train"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("verify", parents=[common], help="run the invariant self-checks")
    p.add_argument("--corpus-size", type=int, default=50)
    p.set_defaults(func=cmd_verify)
    return parser


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            out[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return out


def _set_sub_defaults(parser, values: dict, from_text: bool):
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest: a for a in sp._actions}
            for key, val in values.items():
                a = dests.get(key)
                if a is None:
                    continue
                if from_text and isinstance(a, argparse._StoreTrueAction):
                    val = val.lower() in ("1", "true", "yes")
                elif from_text and a.type:
                    val = a.type(val)
                sp.set_defaults(**{key: val})


def _apply_defaults(parser, argv):
    """Config file values, then flags given before the command, become subcommand defaults."""
    commands = set()
    for action in parser._subparsers._group_actions:
        commands |= set(action.choices)
    cut = next((pos for pos, tok in enumerate(argv) if tok in commands), len(argv))
    top, _ = _common(True).parse_known_args(argv[:cut])
    config = getattr(top, "config", None)
    if config is None:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        config = pre.parse_known_args(argv)[0].config
    if config:
        _set_sub_defaults(parser, read_config(config), True)
    _set_sub_defaults(parser, vars(top), False)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        _apply_defaults(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except (UsageError, OSError, ValueError) as exc:
        print(f"testscore: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidParameterError) as exc:
        print(f"testscore: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TestScoreError, OSError, ValueError) as exc:
        print(f"testscore: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
