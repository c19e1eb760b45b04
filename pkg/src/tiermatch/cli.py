"""Command-line front end: run mechanisms, diagnose stability and cycles,
enumerate equilibria, audit guarantees, and verify documented results.

Exit codes: 0 success, 1 assertion failure (with counterexample dump),
2 input error, 3 size guard exceeded. The TIERMATCH_GUARD_PROFILES
environment variable overrides the strategy-profile guard.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .analysis import (
    find_blocking_pairs,
    find_cycles,
    is_stable_wrt_tiers,
    sosm,
    unacceptable_assignments,
)
from .core import (
    GuardExceeded,
    Matching,
    Problem,
    ProblemValidationError,
    TierStructure,
    load_problem,
    matching_to_dict,
    parse_matching,
    parse_profile,
)
from .fixtures import BAYESIAN_FIXTURES, FIXTURES, fixture
from .game import (
    DEFAULT_PROFILE_GUARD,
    enumerate_nash_outcomes,
    enumerate_undominated_nash_outcomes,
    guarantee_audit,
    outcome_table,
    verify_theorems,
)
from .mechanisms import apply_mechanism, finest_tiers, tiered_deferred_acceptance
from .reference_checks import BAYES_CHECKS, EXAMPLE_CHECKS, run_checks

OK, FAILED, INPUT_ERROR, GUARD = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = INPUT_ERROR):
        super().__init__(message)
        self.code = code


def _profile_guard(args) -> int:
    env = os.environ.get("TIERMATCH_GUARD_PROFILES")
    if getattr(args, "guard_profiles", None):
        return args.guard_profiles
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"TIERMATCH_GUARD_PROFILES must be an integer, got {env!r}")
    return DEFAULT_PROFILE_GUARD


def _load_problem(args) -> Problem:
    if args.fixture and args.problem:
        raise CliError("pass either --fixture or --problem, not both")
    if args.fixture:
        if args.fixture not in FIXTURES:
            raise CliError(
                f"unknown fixture {args.fixture!r}; available: {', '.join(FIXTURES)}"
            )
        if args.fixture in BAYESIAN_FIXTURES:
            raise CliError(
                f"{args.fixture} is a Bayesian fixture; use `verify --suite bayes`"
            )
        return fixture(args.fixture)
    if args.problem:
        try:
            return load_problem(Path(args.problem))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read problem file: {exc}")
    raise CliError("one of --fixture or --problem is required")


def _parse_tier_vector(text: str, problem: Problem) -> TierStructure:
    parts = text.split(",")
    if len(parts) != len(problem.schools):
        raise CliError(
            f"--tiers needs {len(problem.schools)} comma-separated integers "
            f"(one per school, in school-list order {list(problem.schools)})"
        )
    try:
        levels = [int(x) for x in parts]
    except ValueError:
        raise CliError(f"--tiers must be integers, got {text!r}")
    tiers = TierStructure(dict(zip(problem.schools, levels)))
    issues = tiers.issues(problem.schools)
    if issues:
        raise CliError("bad tier vector: " + "; ".join(issues))
    return tiers


def _resolve_tiers(args, problem: Problem) -> TierStructure:
    if getattr(args, "tiers", None):
        return _parse_tier_vector(args.tiers, problem)
    return problem.tiers


def _matching_text(matching: Matching) -> str:
    return (
        "("
        + ", ".join(
            f"({i}, {s if s is not None else i})" for i, s in sorted(matching.assignment.items())
        )
        + ")"
    )


def _emit(args, payload: dict, text_lines: list[str]) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def cmd_run(args) -> int:
    problem = _load_problem(args)
    reported = problem.preferences
    if args.report:
        reported = parse_profile(Path(args.report))
        missing = set(problem.students) - set(reported)
        if missing:
            raise CliError(f"report file misses students {sorted(missing)}")
    tiers = _resolve_tiers(args, problem)
    if args.mechanism == "finest-tda":
        tiers = finest_tiers(problem.schools, problem.schools)
    payload: dict = {"mechanism": args.mechanism}
    lines = []
    if args.mechanism == "da":
        matching = apply_mechanism(problem, "da", reported)
        lines.append(f"matching: {_matching_text(matching)}")
    else:
        trace = tiered_deferred_acceptance(
            problem.students, problem.schools, problem.quotas, problem.priorities, tiers, reported
        )
        matching = trace.final
        payload["tiers"] = {s: tiers.tier_of[s] for s in problem.schools}
        payload["rounds"] = [
            {
                "tier": r.tier,
                "participants": sorted(r.participants),
                "matched": dict(sorted(r.matched.items())),
            }
            for r in trace.rounds
        ]
        lines.append(f"matching: {_matching_text(matching)}")
        for r in trace.rounds:
            lines.append(
                f"round {r.tier}: participants {sorted(r.participants)}, "
                f"matched {dict(sorted(r.matched.items()))}"
            )
    payload.update(matching_to_dict(matching))
    _emit(args, payload, lines)
    return OK


def _select_matching(args, problem: Problem, tiers: TierStructure) -> Matching:
    name = args.matching
    if name == "sosm" or name == "da-truthful":
        return sosm(problem)
    if name == "tda-truthful":
        return apply_mechanism(problem, "tda", tiers=tiers)
    try:
        return parse_matching(Path(name))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(
            f"--matching must be sosm, da-truthful, tda-truthful, or a matching file: {exc}"
        )


def cmd_diagnose(args) -> int:
    problem = _load_problem(args)
    tiers = _resolve_tiers(args, problem)
    tiered = problem.with_tiers(tiers)
    payload: dict = {}
    lines = []

    cycles = []
    for k in range(1, tiers.tier_count + 1):
        for c in find_cycles(problem.quotas, problem.priorities, tiers.schools_in(k)):
            cycles.append((k, c))
    acyclic = not cycles
    payload["within_tier_acyclic"] = acyclic
    payload["cycles"] = [
        {
            "tier": k,
            "school_a": c.school_a,
            "school_b": c.school_b,
            "students": [c.high, c.mid, c.low],
            "extras_a": sorted(c.extras_a),
            "extras_b": sorted(c.extras_b),
        }
        for k, c in cycles
    ]
    lines.append(f"within-tier acyclic: {str(acyclic).lower()}")
    for k, c in cycles:
        lines.append(
            f"cycle in tier {k}: schools ({c.school_a}, {c.school_b}), "
            f"students ({c.high}, {c.mid}, {c.low}), "
            f"extras ({sorted(c.extras_a)}, {sorted(c.extras_b)})"
        )

    if args.matching:
        matching = _select_matching(args, tiered, tiers)
        bad = matching.issues(tiered)
        if bad:
            raise CliError("invalid matching: " + "; ".join(bad))
        pairs = find_blocking_pairs(tiered, matching)
        ir = unacceptable_assignments(tiered, matching)
        stable = not pairs and not ir
        tier_stable = is_stable_wrt_tiers(tiered, matching)
        payload["matching"] = matching_to_dict(matching)["assignment"]
        payload["stable"] = stable
        payload["tier_stable"] = tier_stable
        payload["blocking_pairs"] = [
            {"student": p.student, "school": p.school, "kind": p.kind} for p in pairs
        ]
        payload["unacceptable_assignments"] = ir
        lines.append(f"matching: {_matching_text(matching)}")
        lines.append(f"stable: {str(stable).lower()}")
        for p in pairs:
            lines.append(f"blocking pair: ({p.student}, {p.school}) [{p.kind}]")
        for i in ir:
            lines.append(f"unacceptable assignment: student {i}")
        lines.append(f"tier-stable: {str(tier_stable).lower()}")
    _emit(args, payload, lines)
    return OK


def cmd_equilibria(args) -> int:
    problem = _load_problem(args)
    tiers = _resolve_tiers(args, problem)
    if args.mechanism == "finest-tda":
        tiers = finest_tiers(problem.schools, problem.schools)
        mechanism = "tda"
    else:
        mechanism = args.mechanism
    guard = _profile_guard(args)
    try:
        table = outcome_table(problem, tiers, mechanism, max_profiles=guard)
        if args.undominated:
            report = enumerate_undominated_nash_outcomes(problem, tiers, mechanism, table)
        else:
            report = enumerate_nash_outcomes(problem, tiers, mechanism, table)
    except GuardExceeded as exc:
        print(f"guard exceeded: {exc}", file=sys.stderr)
        print(
            "hint: shrink the instance or raise TIERMATCH_GUARD_PROFILES / --guard-profiles",
            file=sys.stderr,
        )
        return GUARD
    outcomes = sorted(report.outcomes, key=lambda m: tuple(sorted(m.assignment.items(), key=str)))
    payload = {
        "mechanism": args.mechanism,
        "undominated": bool(args.undominated),
        "equilibrium_count": len(report.equilibria),
        "outcomes": [matching_to_dict(m)["assignment"] for m in outcomes],
    }
    lines = [
        f"equilibria: {len(report.equilibria)}",
        f"outcomes: {len(outcomes)}",
    ]
    lines.extend(f"  {_matching_text(m)}" for m in outcomes)
    if args.show_profiles:
        payload["equilibria"] = [
            {
                i: {"acceptable": list(p.acceptable), "unacceptable": list(p.unacceptable)}
                for i, p in profile.items()
            }
            for profile in report.profiles()
        ]
        for profile in report.profiles():
            lines.append(
                "profile: "
                + "; ".join(f"{i}: {','.join(p.acceptable) or '-'}" for i, p in profile.items())
            )
    _emit(args, payload, lines)
    return OK


def _verify_examples(args) -> int:
    checks = dict(EXAMPLE_CHECKS)
    if args.fixture:
        checks = {k: v for k, v in checks.items() if k.startswith(args.fixture)}
        if not checks:
            raise CliError(f"no example checks for fixture {args.fixture!r}")
    results = run_checks(checks)
    worst = OK
    for name, ok, detail in results:
        print(f"{'pass' if ok else 'FAIL'}  {name}  {detail}")
        if not ok:
            worst = FAILED
    return worst


def _verify_bayes(args) -> int:
    checks = dict(BAYES_CHECKS)
    if args.fixture:
        checks = {k: v for k, v in checks.items() if k.startswith(args.fixture)}
        if not checks:
            raise CliError(f"no bayes checks for fixture {args.fixture!r}")
    results = run_checks(checks)
    worst = OK
    for name, ok, detail in results:
        print(f"{'pass' if ok else 'FAIL'}  {name}  {detail}")
        if not ok:
            worst = FAILED
    return worst


def _verify_guarantee(args) -> int:
    if not args.fixture and not args.problem:
        raise CliError("guarantee suite needs --fixture or --problem")
    if not args.protect:
        raise CliError("guarantee suite needs --protect with school ids")
    if args.fixture in BAYESIAN_FIXTURES:
        raise CliError("guarantee audit runs on deterministic problems")
    problem = (
        fixture(args.fixture) if args.fixture else load_problem(Path(args.problem))
    )
    tiers = _resolve_tiers(args, problem)
    protected = [s.strip() for s in args.protect.split(",") if s.strip()]
    unknown = [s for s in protected if s not in problem.schools]
    if unknown:
        raise CliError(f"--protect names unknown schools {unknown}")
    report = guarantee_audit(
        problem.quotas, problem.priorities, tiers, protected, max_profiles=_profile_guard(args)
    )
    if report.passed:
        print(f"pass  guarantee holds for {protected} over {report.profiles_checked} true profiles")
        return OK
    v = report.violation
    print(f"FAIL  guarantee violated for school {v.school} ({v.verdict})")
    print("  true profile:")
    for i, p in sorted(v.true_profile.items()):
        print(f"    {i}: {','.join(p.acceptable) or '-'} | {','.join(p.unacceptable)}")
    print("  equilibrium profile:")
    for i, p in sorted(v.equilibrium.items()):
        print(f"    {i}: {','.join(p.acceptable) or '-'} | {','.join(p.unacceptable)}")
    print(f"  equilibrium outcome: {_matching_text(v.outcome)}")
    print(f"  truthful optimum:    {_matching_text(v.truthful_optimum)}")
    return FAILED


def _verify_theorems(args) -> int:
    if args.seed is None:
        raise CliError("the theorems suite needs --seed for reproducibility")
    report = verify_theorems(
        seed=args.seed,
        trials=args.trials,
        n_students=args.students,
        n_schools=args.schools,
        jobs=args.jobs,
        probe_conjecture=args.probe_conjecture,
    )
    for check, count in sorted(report.checks.items()):
        print(f"pass  {check}  ({count} instances)")
    for f in report.failures:
        print(f"FAIL  {f.check}  trial {f.trial}: {f.detail}")
        print("  counterexample: " + json.dumps(f.problem, sort_keys=True))
    if report.conjecture_counterexamples:
        print(
            f"note: {len(report.conjecture_counterexamples)} tier-relabelling "
            f"counterexample candidates collected (conjecture probe, not asserted)"
        )
    print(
        f"{'pass' if report.passed else 'FAIL'}  theorems suite: "
        f"{report.trials} trials, {len(report.failures)} failures, {report.elapsed:.1f}s"
    )
    return OK if report.passed else FAILED


def cmd_verify(args) -> int:
    suites = {
        "examples": _verify_examples,
        "bayes": _verify_bayes,
        "guarantee": _verify_guarantee,
        "theorems": _verify_theorems,
    }
    return suites[args.suite](args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiermatch",
        description="matching mechanisms, stability diagnostics, and equilibrium analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, mechanisms=False):
        p.add_argument("--fixture", help=f"built-in scenario ({', '.join(FIXTURES)})")
        p.add_argument("--problem", help="path to a scenario JSON file")
        p.add_argument(
            "--tiers", help="tier vector like 1,2,2 ordered by the school list", default=None
        )
        p.add_argument("--format", choices=["text", "json"], default="text")
        p.add_argument(
            "--guard-profiles", type=int, default=None, help="override the profile-count guard"
        )
        if mechanisms:
            p.add_argument(
                "--mechanism", choices=["da", "tda", "finest-tda"], default="tda"
            )

    p_run = sub.add_parser("run", help="run a mechanism and print the matching (+ trace)")
    add_common(p_run, mechanisms=True)
    p_run.add_argument("--report", help="profile file with reported preferences")
    p_run.set_defaults(func=cmd_run)

    p_diag = sub.add_parser("diagnose", help="stability, blocking pairs, and cycle report")
    add_common(p_diag)
    p_diag.add_argument(
        "--matching",
        help="sosm | da-truthful | tda-truthful | path to a matching file",
        default=None,
    )
    p_diag.set_defaults(func=cmd_diagnose)

    p_eq = sub.add_parser("equilibria", help="exhaustive Nash equilibrium outcomes")
    add_common(p_eq, mechanisms=True)
    p_eq.add_argument("--undominated", action="store_true")
    p_eq.add_argument("--show-profiles", action="store_true")
    p_eq.set_defaults(func=cmd_equilibria)

    p_ver = sub.add_parser("verify", help="replay documented results and theorem suites")
    add_common(p_ver)
    p_ver.add_argument(
        "--suite", choices=["examples", "bayes", "guarantee", "theorems"], required=True
    )
    p_ver.add_argument("--seed", type=int, default=None)
    p_ver.add_argument("--trials", type=int, default=200)
    p_ver.add_argument("--students", type=int, default=3)
    p_ver.add_argument("--schools", type=int, default=3)
    p_ver.add_argument("--jobs", type=int, default=1)
    p_ver.add_argument("--protect", help="comma-separated school ids for the guarantee suite")
    p_ver.add_argument("--probe-conjecture", action="store_true")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ProblemValidationError as exc:
        print("invalid problem:", file=sys.stderr)
        for issue in exc.issues:
            print(f"  - {issue}", file=sys.stderr)
        return INPUT_ERROR
    except GuardExceeded as exc:
        print(f"guard exceeded: {exc}", file=sys.stderr)
        return GUARD


if __name__ == "__main__":
    sys.exit(main())
