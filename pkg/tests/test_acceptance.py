"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines.
"""

from __future__ import annotations

import subprocess
import sys
from fractions import Fraction

import dense_oracle as oracle
from wigner_lab.cli import shipped_files
from wigner_lab.dsl import DiagnosticError, format_doc, load_file, parse_scenario
from wigner_lab.interpretations import build_kernel, grw_scenario, sample_trajectories
from wigner_lab.measurement import enumerate_branches, sequential_joint_distribution
from wigner_lab.scenarios import (
    FR_SUITE,
    SQ_FBAR,
    SQ_WBAR,
    Ordering,
    Verdict,
    build_fr_scenario,
    check_statement,
    run,
    statement_matrix,
)

F = Fraction


def report(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"[acceptance {number:>2}] {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def _close(joint, expected: dict) -> float:
    return max(abs(joint[k] - v) for k, v in expected.items())


def test_01_no_collapse_table():
    joint = run(build_fr_scenario()).joint.marginal(["wbar", "w"])
    want = {("okbar", "OK"): F(1, 12), ("okbar", "fail"): F(1, 12), ("failbar", "OK"): F(1, 12), ("failbar", "fail"): F(3, 4)}
    exact_ok = all(joint.exact_value(k) == v for k, v in want.items())
    dev = _close(joint, {k: float(v) for k, v in want.items()})
    report(1, "no-collapse joint {1/12, 1/12, 1/12, 3/4}", exact_ok and dev <= 1e-10, f"max dev {dev:.1e}, exact {exact_ok}")


def test_02_fbar_collapse_tails():
    joint = run(build_fr_scenario(collapse_at={"Fbar"}, postselect={"r": "t"})).joint
    p_ok = joint.probability({"w": "OK"})
    p_okbar = joint.probability({"wbar": "okbar"})
    p_failbar = joint.probability({"wbar": "failbar"})
    ok = abs(p_ok) <= 1e-12 and abs(p_okbar - 0.5) <= 1e-10 and abs(p_failbar - 0.5) <= 1e-10
    report(2, "Fbar collapses on tails: P(OK)=0, P(okbar)=P(failbar)=1/2", ok, f"P(OK)={p_ok:.1e}")


def test_03_double_collapse_uniform():
    scenario = build_fr_scenario(collapse_at={"Fbar", "F"}, postselect={"r": "t", "z": "up"})
    joint = run(scenario).joint.marginal(["wbar", "w"])
    dev = max(abs(joint[(a, b)] - 0.25) for a in ("okbar", "failbar") for b in ("OK", "fail"))
    space = oracle.fr_space()
    v, t = oracle.joint(space, oracle.fr_steps(), collapse={"r", "z"}, select={"r": "t", "z": "up"})
    ref = oracle.marginal(v, t, ["wbar", "w"])
    odev = max(abs(ref.get((a, b), 0.0) - 0.25) for a in ("okbar", "failbar") for b in ("OK", "fail"))
    report(3, "Fbar and F collapse (tails, up): uniform 1/4", dev <= 1e-10 and odev <= 1e-10, f"dev {dev:.1e}, oracle {odev:.1e}")


def test_04_w_before_wbar():
    result = run(build_fr_scenario(ordering=Ordering.FBAR_F_W_WBAR))
    joint = result.joint_at("w").marginal(["r", "w"])
    want = {("h", "OK"): 1 / 6, ("h", "fail"): 1 / 6, ("t", "fail"): 2 / 3, ("t", "OK"): 0.0}
    dev = _close(joint, want)
    verdict = check_statement(result, SQ_FBAR).verdict
    report(4, "W before Wbar: {1/6, 1/6, 2/3, 0}; SQ_FBAR HOLDS", dev <= 1e-10 and verdict is Verdict.HOLDS, f"dev {dev:.1e}, {verdict.value}")


def test_05_wbar_before_fbar():
    base = build_fr_scenario(ordering=Ordering.F_WBAR_FBAR, collapse_at={"Wbar", "Fbar"}, postselect={"wbar": "okbar"})
    res = run(base)
    p_up = res.joint_at("wbar").conditional({"z": "up"}, {"wbar": "okbar"})
    sq_wbar = check_statement(res, SQ_WBAR).verdict
    tails = run(build_fr_scenario(FR_SUITE[4]))
    p_ok = tails.joint.probability({"w": "OK"})
    sq_fbar = check_statement(tails, SQ_FBAR).verdict
    ok = abs(p_up - 1) <= 1e-9 and sq_wbar is Verdict.HOLDS and abs(p_ok - 0.5) <= 1e-10 and sq_fbar is Verdict.FAILS
    report(5, "Wbar before Fbar: P(up|okbar)=1, then P(OK|tails)=1/2", ok, f"{sq_wbar.value}/{sq_fbar.value}")


def test_06_hidden_qubit():
    joint = run(build_fr_scenario(hidden_qubit=True)).joint
    zero = joint.probability({"wbar": "okbar", "w": "OK", "g": "t"})
    m = joint.marginal(["wbar", "w"])
    want = {("okbar", "OK"): 1 / 12, ("okbar", "fail"): 5 / 12, ("failbar", "OK"): 1 / 12, ("failbar", "fail"): 5 / 12}
    dev = _close(m, want)
    report(6, "hidden qubit: P(okbar, OK, g=t)=0; {1/12, 5/12, 1/12, 5/12}", abs(zero) <= 1e-12 and dev <= 1e-10, f"dev {dev:.1e}")


def test_07_no_all_holds_row():
    rep = statement_matrix(FR_SUITE)
    rows = rep.all_hold_rows()
    report(7, "statement matrix has no all-HOLDS row", len(rep.rows) == 6 and not rows)


def test_08_no_signaling():
    full = build_fr_scenario()
    p_with = run(full).joint.probability({"w": "OK"})
    p_without = run(full.without("wbar")).joint.probability({"w": "OK"})
    ok = abs(p_with - 1 / 6) <= 1e-10 and abs(p_without - 1 / 6) <= 1e-10
    report(8, "no-signaling: P(OK)=1/6 with and without Wbar", ok, f"{p_with:.12f} / {p_without:.12f}")


def _shipped_scenarios():
    out = [build_fr_scenario(o) for o in FR_SUITE] + [build_fr_scenario(hidden_qubit=True)]
    out += [load_file(p).scenario for p in shipped_files()]
    return out


def test_09_wigner_formula_equals_enumeration():
    worst = 0.0
    for sc in _shipped_scenarios():
        a = sequential_joint_distribution(sc.preparation, sc.steps)
        b = enumerate_branches(sc.preparation, sc.steps)
        worst = max(worst, a.max_abs_diff(b))
    report(9, "projector formula equals branch enumeration on shipped scenarios", worst <= 1e-10, f"max dev {worst:.1e}")


def test_10_beable_flips():
    scenario = build_fr_scenario(collapse_at={"Fbar"}, postselect={"r": "t"})
    n = 100_000
    res = sample_trajectories(scenario, "minimal", n, seed=20240611)
    flip = res.flip_statistics["Fbar"]["ever"]
    at_wbar = res.flip_statistics["Fbar"]["by_step"]["wbar"]
    marg_ok = all(c["ok"] for c in res.marginal_checks)
    kern = max(k.marginal_error() for k in res.kernels)
    tails = {("tails", "t"): 1.0}
    after = {("heads", "h"): 0.5, ("tails", "t"): 0.5}
    pair = max(build_kernel(tails, after, kind).marginal_error() for kind in ("minimal", "independent"))
    ok = abs(flip - 0.5) <= 0.006 and abs(at_wbar - 0.5) <= 0.006 and marg_ok and kern <= 1e-10 and pair <= 1e-10
    report(10, "beable sampler: Fbar flip 0.5 +- 0.006, marginals within 4/sqrt(n)", ok, f"flip {flip:.4f}")


def test_11_grw_equals_all_collapse():
    grw = run(grw_scenario(build_fr_scenario())).joint
    every = build_fr_scenario(collapse_at={"Fbar", "F", "Wbar", "W"})
    allc = run(every).joint
    ref = enumerate_branches(every.preparation, every.steps)
    dev = max(grw.max_abs_diff(allc), grw.max_abs_diff(ref))
    report(11, "GRW ensemble equals the all-collapse distribution", dev <= 1e-10, f"dev {dev:.1e}")


def test_12_parser_corpus():
    files = shipped_files()
    round_trip = True
    for path in files:
        text = path.read_text(encoding="utf-8")
        doc = parse_scenario(text)
        round_trip &= parse_scenario(format_doc(doc)) == doc
    bad = "factor coin { heads tails }\nprepare { 0.5 heads }\nbasis B on coin { u = 1/sqrt(2) heads + 1/sqrt(2) heads }\n"
    seen = []
    for _ in range(3):
        try:
            parse_scenario(bad)
        except DiagnosticError as exc:
            seen.append(exc.diagnostics)
    deterministic = len(seen) == 3 and seen[0] == seen[1] == seen[2] and len(seen[0]) >= 2
    codes = [
        subprocess.run([sys.executable, "-m", "wigner_lab", "check", str(p)], capture_output=True, text=True).returncode
        for p in files
    ]
    ok = len(files) >= 7 and round_trip and deterministic and all(c == 0 for c in codes)
    report(12, "parser round trip, deterministic diagnostics, all expect annotations pass", ok, f"{len(files)} files, exit codes {codes}")
