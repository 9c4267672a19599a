"""Command-line driver: ``wigner-lab run|check|matrix|sample|fmt|examples``.

Exit codes: 0 success, 1 diagnostics or bad input, 2 an ``expect``
annotation did not match, 3 an internal invariant broke.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import InvariantError, WignerLabError
from .hilbert import dump_state
from .scenarios import CERTAIN_TOL, SUITES, check_statement, run, statement_matrix

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_MISMATCH, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def shipped_dir() -> Path:
    return Path(str(resources.files("wigner_lab") / "examples"))


def shipped_files() -> list[Path]:
    return sorted(shipped_dir().glob("*.scn"))


def resolve_path(name: str) -> Path:
    """A path as given, else a shipped example of that name."""
    p = Path(name)
    if p.exists():
        return p
    for cand in (shipped_dir() / p.name, shipped_dir() / f"{p.name}.scn"):
        if cand.exists():
            return cand
    raise UsageError(f"no such file: {name} (shipped examples: {', '.join(f.name for f in shipped_files())})")


def _load(name: str):
    from .dsl import load_file

    path = resolve_path(name)
    compiled = load_file(path)
    for w in compiled.warnings:
        print(w.format(str(path)), file=sys.stderr)
    return compiled.scenario


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def cmd_run(args) -> int:
    scenario = _load(args.file)
    result = run(scenario, seed=args.seed)
    joint = result.report_joint
    if args.json:
        payload = {"scenario": scenario.name, **joint.to_dict()}
        if args.dump_state:
            payload["final_state"] = None if result.final_state is None else dump_state(result.final_state).splitlines()
        print(_dump(payload))
        return EXIT_OK
    print(f"# {scenario.name}")
    print(joint.to_text(exact=args.exact))
    if args.dump_state:
        print()
        if result.final_state is None:
            print("# no single final state: some collapse has an open outcome (pass --seed to draw one history)")
        else:
            print(dump_state(result.final_state))
    return EXIT_OK


def cmd_check(args) -> int:
    scenario = _load(args.file)
    result = run(scenario)
    rows = []
    mismatch = False
    for st in scenario.statements:
        res = check_statement(result, st, args.tolerance)
        ok = st.expect is None or st.expect is res.verdict
        mismatch |= not ok
        rows.append((st, res, ok))
    if args.json:
        print(
            _dump(
                {
                    "scenario": scenario.name,
                    "statements": [
                        {**res.to_dict(), "expect": None if st.expect is None else st.expect.value, "match": ok}
                        for st, res, ok in rows
                    ],
                }
            )
        )
    else:
        print(f"# {scenario.name}")
        width = max((len(st.id) for st in scenario.statements), default=0)
        for st, res, ok in rows:
            p = f"{res.probability:.6f}"
            if args.exact and res.exact_probability is not None:
                p += f" ({res.exact_probability})"
            status = "" if st.expect is None else ("  ok" if ok else f"  MISMATCH (expected {st.expect.value})")
            print(f"{st.id.ljust(width)}  {res.verdict.value:<7}  p={p}  after step {res.step}{status}")
    return EXIT_MISMATCH if mismatch else EXIT_OK


def cmd_matrix(args) -> int:
    report = statement_matrix(SUITES[args.suite], tolerance=args.tolerance, mixed=args.mixed)
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK


def cmd_sample(args) -> int:
    from .interpretations import default_seed, sample_trajectories

    scenario = _load(args.file)
    seed = default_seed() if args.seed is None else args.seed
    result = sample_trajectories(scenario, args.kernel, args.n, seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            result.write_jsonl(fh)
    summary = result.summary()
    print(json.dumps(summary, ensure_ascii=False, indent=None if args.compact else 2))
    if not summary["marginals_ok"]:
        raise InvariantError("sampled marginals drifted more than 4/sqrt(n) from the Born marginals")
    return EXIT_OK


def cmd_fmt(args) -> int:
    from .dsl import format_doc, parse_scenario

    path = resolve_path(args.file)
    print(format_doc(parse_scenario(path.read_text(encoding="utf-8"), str(path))), end="")
    return EXIT_OK


def cmd_examples(args) -> int:
    for f in shipped_files():
        print(f)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wigner-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--tolerance", type=float, default=CERTAIN_TOL, help="certainty tolerance (default 1e-9)")
    ap.add_argument("--exact", action="store_true", help="also print exact rationals where available")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="joint distribution of a scenario")
    p.add_argument("file")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--table", action="store_true", help="aligned text (the default)")
    p.add_argument("--dump-state", action="store_true", help="print the final state vector")
    p.add_argument("--seed", type=int, help="draw one collapse history instead of keeping every branch")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="evaluate the scenario's statements against their expect annotations")
    p.add_argument("file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("matrix", help="configuration x statement verdict table")
    p.add_argument("--suite", choices=sorted(SUITES), default="fr")
    p.add_argument("--json", action="store_true")
    p.add_argument("--mixed", action="store_true", help="append a row mixing configurations (non-physical)")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("sample", help="pointer-configuration trajectories")
    p.add_argument("file")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None, help="root seed (default: $WIGNER_LAB_SEED or 0)")
    p.add_argument("--kernel", choices=["independent", "minimal"], default="minimal")
    p.add_argument("--out", help="write trajectories here as JSON lines")
    p.add_argument("--compact", action="store_true", help="single-line summary")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fmt", help="print a scenario file in canonical form")
    p.add_argument("file")
    p.set_defaults(func=cmd_fmt)

    p = sub.add_parser("examples", help="list the shipped scenario files")
    p.set_defaults(func=cmd_examples)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    from .dsl import DiagnosticError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DiagnosticError as exc:
        for d in exc.diagnostics:
            print(d.format(exc.filename), file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (WignerLabError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS


if __name__ == "__main__":
    sys.exit(main())
