"""Command line interface.

Subcommands:

    patmat compile PATTERNS.pm OUT.pmb      serialize a pattern file
    patmat match RULESET TERMFILE --pattern NAME [--all-subterms]
    patmat rewrite RULESET TERMFILE         greedy fixpoint rewriting
    patmat check RULESET --cases N          machine vs. oracle fuzzing
    patmat bench RULESET --nodes N --trials T [--report-dir DIR]

RULESET is either a `.pm` source file or a compiled `.pmb` file.  Exit
codes: 0 success / matched, 1 diagnostics or invalid configuration,
2 I/O errors, 3 no match, 4 budget exhausted.  `--format machine` prints
line-oriented key=value output; CORPM_SEED overrides --seed.
"""

from __future__ import annotations

import argparse
import os
import random
import statistics
import sys
import time

from . import declarative, difftest, vm
from .frontend import CompileError, ParseError, compile_text, parse_term, print_term
from .gen import random_term_of_size
from .rewriting import BudgetExhaustedError, RuleSet, StuckMatchError, rewrite_fixpoint
from .terms import DEFAULT_INTERPRETER, EngineError, subterms
from .wire import SchemaError, VersionMismatch, deserialize_ruleset, serialize_ruleset

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_IO = 2
EXIT_NO_MATCH = 3
EXIT_BUDGET = 4


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def load_ruleset(path: str) -> RuleSet:
    if path.endswith(".pmb"):
        with open(path, "rb") as fh:
            return deserialize_ruleset(fh.read())
    return compile_text(_read_text(path))


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _seed(args: argparse.Namespace) -> int:
    env = os.environ.get("CORPM_SEED")
    if env is not None:
        return int(env)
    return args.seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patmat", description=__doc__.splitlines()[0])
    parser.add_argument("--format", choices=("human", "machine"), default="human")
    sub = parser.add_subparsers(dest="command", required=True)

    p_compile = sub.add_parser("compile", help="compile a pattern file to the portable format")
    p_compile.add_argument("source")
    p_compile.add_argument("output")

    p_match = sub.add_parser("match", help="match one pattern against a term")
    p_match.add_argument("ruleset")
    p_match.add_argument("termfile")
    p_match.add_argument("--pattern", required=True)
    p_match.add_argument("--all-subterms", action="store_true")
    p_match.add_argument("--step-budget", type=_positive, default=vm.DEFAULT_STEP_BUDGET)
    p_match.add_argument("--trace", action="store_true")

    p_rewrite = sub.add_parser("rewrite", help="rewrite a term to a fixpoint")
    p_rewrite.add_argument("ruleset")
    p_rewrite.add_argument("termfile")
    p_rewrite.add_argument("--step-budget", type=_positive, default=vm.DEFAULT_STEP_BUDGET)
    p_rewrite.add_argument("--pass-limit", type=_positive, default=10_000)

    p_check = sub.add_parser("check", help="differential fuzzing: machine vs. declarative oracle")
    p_check.add_argument("ruleset")
    p_check.add_argument("--cases", type=int, default=1000)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--max-depth", type=_positive, default=5)
    p_check.add_argument("--fuel", type=_positive, default=declarative.DEFAULT_FUEL)
    p_check.add_argument("--step-budget", type=_positive, default=vm.DEFAULT_STEP_BUDGET)

    p_bench = sub.add_parser("bench", help="time rewrite_fixpoint on random terms")
    p_bench.add_argument("ruleset")
    p_bench.add_argument("--nodes", type=_positive, default=10_000)
    p_bench.add_argument("--trials", type=int, default=5)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--step-budget", type=_positive, default=vm.DEFAULT_STEP_BUDGET)
    p_bench.add_argument("--pass-limit", type=_positive, default=10_000)
    p_bench.add_argument("--report-dir")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compile":
            return cmd_compile(args)
        if args.command == "match":
            return cmd_match(args)
        if args.command == "rewrite":
            return cmd_rewrite(args)
        if args.command == "check":
            return cmd_check(args)
        if args.command == "bench":
            return cmd_bench(args)
    except (ParseError, CompileError, SchemaError, VersionMismatch) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except EngineError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    raise AssertionError("unreachable")


def cmd_compile(args: argparse.Namespace) -> int:
    try:
        source = _read_text(args.source)
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    try:
        ruleset = compile_text(source)
    except (ParseError, CompileError) as err:
        if isinstance(err, CompileError):
            for diag in err.diagnostics:
                print(f"{args.source}: {diag}", file=sys.stderr)
        else:
            print(f"{args.source}:{err}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    data = serialize_ruleset(ruleset)
    with open(args.output, "wb") as fh:
        fh.write(data)
    print(f"wrote {args.output} ({len(data)} bytes)")
    return EXIT_OK


def _emit(args: argparse.Namespace, pairs: list[tuple[str, str]], human: str | None = None) -> None:
    if args.format == "machine":
        for key, value in pairs:
            print(f"{key}={value}")
    elif human is not None:
        print(human)


def cmd_match(args: argparse.Namespace) -> int:
    ruleset = load_ruleset(args.ruleset)
    pdef = ruleset.pattern_def(args.pattern)
    if pdef is None:
        print(f"error: no pattern named {args.pattern}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    term = parse_term(ruleset.signature, _read_text(args.termfile))
    trace = (lambda line: print(f"trace {line}")) if args.trace else None

    def bindings_lines(outcome: vm.Matched) -> list[str]:
        lines = []
        for name in sorted(outcome.theta):
            lines.append(f"  {name} = {print_term(outcome.theta[name])}")
        for name in sorted(outcome.phi):
            lines.append(f"  ${name} = {outcome.phi[name]}")
        return lines

    if not args.all_subterms:
        outcome = vm.run_match(
            ruleset.signature, DEFAULT_INTERPRETER, pdef.pattern, term, args.step_budget, trace
        )
        if isinstance(outcome, vm.Matched):
            pairs = [("outcome", "matched"), ("steps", str(outcome.steps))]
            pairs += [(f"theta.{k}", print_term(v)) for k, v in sorted(outcome.theta.items())]
            pairs += [(f"phi.{k}", v) for k, v in sorted(outcome.phi.items())]
            _emit(args, pairs, "Matched\n" + "\n".join(bindings_lines(outcome)))
            return EXIT_OK
        if isinstance(outcome, vm.NoMatch):
            _emit(args, [("outcome", "nomatch")], "NoMatch")
            return EXIT_NO_MATCH
        if isinstance(outcome, vm.BudgetExhausted):
            _emit(args, [("outcome", "budget-exhausted")], "BudgetExhausted")
            return EXIT_BUDGET
        _emit(args, [("outcome", "stuck"), ("detail", outcome.description)], f"Stuck: {outcome.description}")
        return EXIT_DIAGNOSTICS

    hits = 0
    budget_hit = False
    paths: list[tuple[tuple[int, ...], object]] = [((), term)]
    order: list[tuple[tuple[int, ...], object]] = []
    while paths:
        path, node = paths.pop()
        order.append((path, node))
        for i in range(len(node.children) - 1, -1, -1):
            paths.append((path + (i,), node.children[i]))
    for path, node in order:
        outcome = vm.run_match(
            ruleset.signature, DEFAULT_INTERPRETER, pdef.pattern, node, args.step_budget
        )
        if isinstance(outcome, vm.Matched):
            hits += 1
            site = "/" + "/".join(map(str, path)) if path else "/"
            pairs = [("site", site)]
            pairs += [(f"theta.{k}", print_term(v)) for k, v in sorted(outcome.theta.items())]
            pairs += [(f"phi.{k}", v) for k, v in sorted(outcome.phi.items())]
            _emit(args, pairs, f"Matched at {site}\n" + "\n".join(
                f"  {k} = {print_term(v)}" for k, v in sorted(outcome.theta.items())
            ))
        elif isinstance(outcome, vm.BudgetExhausted):
            budget_hit = True
    _emit(args, [("matches", str(hits))], f"{hits} matching positions")
    if budget_hit:
        return EXIT_BUDGET
    return EXIT_OK if hits else EXIT_NO_MATCH


def cmd_rewrite(args: argparse.Namespace) -> int:
    ruleset = load_ruleset(args.ruleset)
    term = parse_term(ruleset.signature, _read_text(args.termfile))
    try:
        result, stats = rewrite_fixpoint(
            ruleset, DEFAULT_INTERPRETER, term, args.pass_limit, args.step_budget
        )
    except BudgetExhaustedError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BUDGET
    except StuckMatchError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    pairs = [("result", print_term(result))] + stats.as_items()
    human = [print_term(result), "--"]
    human += [f"{key} = {value}" for key, value in stats.as_items()]
    _emit(args, pairs, "\n".join(human))
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    if args.cases < 0:
        print("error: --cases must be >= 0", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    ruleset = load_ruleset(args.ruleset)
    seed = _seed(args)
    report = difftest.run_check(
        ruleset,
        DEFAULT_INTERPRETER,
        cases=args.cases,
        seed=seed,
        max_depth=args.max_depth,
        fuel=args.fuel,
        step_budget=args.step_budget,
    )
    pairs = [
        ("cases", str(report.cases)),
        ("matched", str(report.matched)),
        ("failed", str(report.failed)),
        ("budget_exhausted", str(report.budget_exhausted)),
        ("violations", str(len(report.violations))),
        ("seed", str(seed)),
    ]
    human = [
        f"cases={report.cases} matched={report.matched} failed={report.failed} "
        f"budget_exhausted={report.budget_exhausted} violations={len(report.violations)} seed={seed}"
    ]
    for v in report.violations:
        human.append(f"VIOLATION case={v.case_index} kind={v.kind} {v.detail}")
        human.append(f"  repro: {v.repro(seed)}")
        pairs.append((f"violation.{v.case_index}", v.repro(seed)))
    _emit(args, pairs, "\n".join(human))
    return EXIT_OK if report.ok else EXIT_DIAGNOSTICS


def cmd_bench(args: argparse.Namespace) -> int:
    if args.trials <= 0:
        print("error: --trials must be positive", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    ruleset = load_ruleset(args.ruleset)
    seed = _seed(args)
    from .report import TrialRecord, write_report
    from .terms import term_size

    trials: list[TrialRecord] = []
    for i in range(args.trials):
        rng = random.Random(f"{seed}:bench:{i}")
        term = random_term_of_size(ruleset.signature, rng, args.nodes)
        start = time.perf_counter()
        _, stats = rewrite_fixpoint(
            ruleset, DEFAULT_INTERPRETER, term, args.pass_limit, args.step_budget
        )
        elapsed = time.perf_counter() - start
        trials.append(
            TrialRecord(
                trial=i,
                nodes=term_size(term),
                seconds=elapsed,
                fires=dict(stats.fires),
                traversals=stats.traversals,
                vm_steps=stats.vm_steps,
            )
        )

    times = [t.seconds for t in trials]
    total_fires = sum(sum(t.fires.values()) for t in trials)
    pairs = [
        ("trials", str(args.trials)),
        ("nodes", str(args.nodes)),
        ("median_s", f"{statistics.median(times):.6f}"),
        ("mean_s", f"{statistics.fmean(times):.6f}"),
        ("max_s", f"{max(times):.6f}"),
        ("total_fires", str(total_fires)),
        ("seed", str(seed)),
    ]
    human = (
        f"trials={args.trials} nodes={args.nodes} median={statistics.median(times):.4f}s "
        f"mean={statistics.fmean(times):.4f}s max={max(times):.4f}s fires={total_fires} seed={seed}"
    )
    lines = [human]
    if args.report_dir:
        written = write_report(args.report_dir, trials)
        pairs += [(f"report.{i}", path) for i, path in enumerate(written)]
        lines += [f"wrote {path}" for path in written]
    _emit(args, pairs, "\n".join(lines))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
