"""The two-lab friend/super-observer protocol and its certainty statements.

Factors, in ket-writing order: ``coin``, ``Fbar``, ``spin``, ``F``,
optionally ``Gbar`` (a hidden copy of Fbar's record), ``Wbar``, ``W``.
Agent memories are 3-level with the blank label ``"0"``.

Outcome variables are named after what they record:

==========  =========  ====================
variable    recorder   outcomes
==========  =========  ====================
``r``       Fbar       ``h``, ``t``
``g``       Gbar       ``h``, ``t``
``z``       F          ``down``, ``up``
``wbar``    Wbar       ``okbar``, ``failbar``
``w``       W          ``OK``, ``fail``
==========  =========  ====================

A statement is judged on one run, at one time: right after the last
measurement it mentions, on the joint distribution of the records as they
stand then.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Any

import numpy as np

from .errors import InvariantError, ScenarioError
from .exact import Surd
from .hilbert import (
    ExactMatrix,
    FactorSpace,
    ObservableBasis,
    ProductSpace,
    StateVector,
    apply_unitary,
    make_product_space,
    superpose,
)
from .measurement import (
    CLAMP_TOL,
    Branch,
    JointDistribution,
    MeasurementStep,
    ProtocolTrace,
    controlled_unitary,
    run_protocol,
)

CERTAIN_TOL = 1e-9
POSSIBLE_TOL = 1e-9
VACUOUS_TOL = 1e-12

AGENT_VARIABLE = {"Fbar": "r", "F": "z", "Gbar": "g", "Wbar": "wbar", "W": "w"}


class Ordering(str, Enum):
    FBAR_F_WBAR_W = "FBAR_F_WBAR_W"
    F_WBAR_FBAR = "F_WBAR_FBAR"
    FBAR_F_W_WBAR = "FBAR_F_W_WBAR"


class Verdict(str, Enum):
    HOLDS = "HOLDS"
    FAILS = "FAILS"
    VACUOUS = "VACUOUS"


# -- steps ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UnitaryStep:
    """Unitary on a factor subset.  Also the hook for free evolution between
    measurements, which is the identity unless one is inserted."""

    matrix: np.ndarray
    targets: tuple[str, ...]
    exact: ExactMatrix | None = None
    name: str = "U"

    def __call__(self, state: StateVector) -> StateVector:
        return apply_unitary(state, self.matrix, self.targets, self.exact)


@dataclass(frozen=True, eq=False)
class ControlledStep:
    control: str
    cases: Mapping[str, tuple[np.ndarray, ExactMatrix | None]]
    targets: tuple[str, ...]
    name: str = "control"

    def __call__(self, state: StateVector) -> StateVector:
        return controlled_unitary(state, self.control, self.cases, self.targets)


def _step_factors(step) -> set[str]:
    if isinstance(step, MeasurementStep):
        out = set(step.basis.targets)
        if step.recorder:
            out.add(step.recorder)
        return out
    if isinstance(step, ControlledStep):
        return {step.control, *step.targets}
    if isinstance(step, UnitaryStep):
        return set(step.targets)
    return set()


# -- statements -------------------------------------------------------------


Atom = tuple[str, str, str]  # (variable, "=" | "!=", outcome)


@dataclass(frozen=True)
class Predicate:
    """Disjunction of conjunctions of ``variable = outcome`` tests."""

    clauses: tuple[tuple[Atom, ...], ...]

    @classmethod
    def of(cls, spec: Predicate | Mapping[str, str]) -> Predicate:
        if isinstance(spec, Predicate):
            return spec
        return cls((tuple((v, "=", x) for v, x in spec.items()),))

    @property
    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for clause in self.clauses:
            for v, _, _ in clause:
                seen[v] = None
        return tuple(seen)

    def __call__(self, outcome: Mapping[str, str]) -> bool:
        return any(
            all((outcome[v] == x) == (op == "=") for v, op, x in clause) for clause in self.clauses
        )

    def __str__(self) -> str:
        return " or ".join(" and ".join(f"{v} {op} {x}" for v, op, x in c) for c in self.clauses)


@dataclass(frozen=True)
class Statement:
    id: str
    form: str  # "CERTAIN" or "POSSIBLE"
    event: Predicate
    condition: Predicate | None = None
    expect: Verdict | None = None

    def __post_init__(self):
        if self.form not in ("CERTAIN", "POSSIBLE"):
            raise ScenarioError(f"statement form must be CERTAIN or POSSIBLE, got {self.form!r}")
        if self.expect is not None:
            object.__setattr__(self, "expect", Verdict(self.expect))

    @classmethod
    def certain(cls, id: str, consequent, given=None, expect=None) -> Statement:
        return cls(id, "CERTAIN", Predicate.of(consequent), None if given is None else Predicate.of(given), expect)

    @classmethod
    def possible(cls, id: str, event, expect=None) -> Statement:
        return cls(id, "POSSIBLE", Predicate.of(event), None, expect)

    @property
    def variables(self) -> tuple[str, ...]:
        out = dict.fromkeys(self.event.variables)
        if self.condition is not None:
            out.update(dict.fromkeys(self.condition.variables))
        return tuple(out)

    def __str__(self) -> str:
        inner = str(self.event) + (f" given {self.condition}" if self.condition else "")
        return f"{self.form.lower()}({inner})"


SQ_FBAR = Statement.certain("SQ_FBAR", {"w": "fail"}, given={"r": "t"})
SQ_WBAR = Statement.certain("SQ_WBAR", {"z": "up"}, given={"wbar": "okbar"})
SQ_W = Statement.possible("SQ_W", {"wbar": "okbar", "w": "OK"})
# F's statement about Fbar's record; not part of the verdict table.
SQ_F_SAMPLE = Statement.certain("SQ_F", {"r": "t"}, given={"z": "up"})
TABLE_STATEMENTS = (SQ_FBAR, SQ_WBAR, SQ_W)


@dataclass(frozen=True)
class StatementResult:
    statement_id: str
    probability: float
    verdict: Verdict
    condition_probability: float | None = None
    witness: tuple[tuple[tuple[str, ...], float], ...] = ()
    exact_probability: Fraction | None = None
    step: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.statement_id,
            "verdict": self.verdict.value,
            "p": self.probability,
            "p_exact": None if self.exact_probability is None else _frac(self.exact_probability),
            "condition_p": self.condition_probability,
            "step": self.step,
        }


def _frac(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def evaluate_statement(
    joint: JointDistribution, statement: Statement, tolerance: float = CERTAIN_TOL
) -> StatementResult:
    missing = [v for v in statement.variables if v not in joint.variables]
    if missing:
        raise ScenarioError(
            f"statement {statement.id} uses unknown variable(s) {', '.join(missing)} "
            f"(known: {', '.join(joint.variables) or 'none'})"
        )

    def pred(p: Predicate):
        return lambda o: p(o)

    if statement.form == "POSSIBLE":
        p = joint.probability(pred(statement.event))
        keys = [k for k in joint.table if statement.event(dict(zip(joint.variables, k)))]
        verdict = Verdict.HOLDS if p > tolerance else Verdict.FAILS
        return StatementResult(
            statement.id,
            p,
            verdict,
            None,
            tuple((k, joint[k]) for k in keys),
            joint.exact_probability(pred(statement.event)),
        )

    cond = statement.condition or Predicate(((),))
    both = lambda o: cond(o) and statement.event(o)  # noqa: E731
    pa = joint.probability(pred(cond))
    keys = [k for k in joint.table if cond(dict(zip(joint.variables, k)))]
    witness = tuple((k, joint[k]) for k in keys)
    if pa < VACUOUS_TOL:
        return StatementResult(statement.id, float("nan"), Verdict.VACUOUS, pa, witness)
    p = joint.probability(both) / pa
    exact = None
    ea, eab = joint.exact_probability(pred(cond)), joint.exact_probability(both)
    if ea is not None and eab is not None and ea != 0:
        exact = eab / ea
    verdict = Verdict.HOLDS if abs(p - 1.0) <= tolerance else Verdict.FAILS
    return StatementResult(statement.id, p, verdict, pa, witness, exact)


# -- scenarios --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    space: ProductSpace
    preparation: StateVector
    steps: tuple
    statements: tuple[Statement, ...] = ()
    report: tuple[str, ...] | None = None
    report_at: str | None = None  # read the report right after this variable's step

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "statements", tuple(self.statements))
        if self.preparation.space != self.space:
            raise ScenarioError("preparation lives in a different space")
        known = set(self.space.labels)
        recorders, variables = set(), set()
        for i, step in enumerate(self.steps):
            bad = _step_factors(step) - known
            if bad:
                raise ScenarioError(f"step {i} references undeclared factor(s) {sorted(bad)}")
            if isinstance(step, MeasurementStep):
                if step.recorder is not None:
                    if step.recorder in recorders:
                        raise ScenarioError(f"agent {step.recorder!r} would record twice")
                    recorders.add(step.recorder)
                if step.name in variables:
                    raise ScenarioError(f"variable {step.name!r} is produced twice")
                variables.add(step.name)
        for st in self.statements:
            for v in st.variables:
                if v not in variables:
                    raise ScenarioError(f"statement {st.id} uses unknown variable {v!r}")
        for v in self.report or ():
            if v not in variables:
                raise ScenarioError(f"report variable {v!r} is not produced by any step")
        if self.report_at is not None:
            if self.report_at not in variables:
                raise ScenarioError(f"report_at variable {self.report_at!r} is not produced by any step")
            late = [v for v in self.report or () if self.step_of(v) > self.step_of(self.report_at)]
            if late:
                raise ScenarioError(f"report variable(s) {late} are produced after {self.report_at!r}")

    @property
    def measurements(self) -> list[tuple[int, MeasurementStep]]:
        return [(i, s) for i, s in enumerate(self.steps) if isinstance(s, MeasurementStep)]

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(s.name for _, s in self.measurements)

    @property
    def recorders(self) -> tuple[str, ...]:
        return tuple(s.recorder for _, s in self.measurements if s.recorder)

    def step_of(self, variable: str) -> int:
        for i, s in self.measurements:
            if s.name == variable:
                return i
        raise ScenarioError(f"no step produces variable {variable!r}")

    def measurement(self, variable: str) -> MeasurementStep:
        return self.steps[self.step_of(variable)]

    def has_unselected_collapse(self) -> bool:
        return any(s.collapse and s.selected_outcome is None for _, s in self.measurements)

    def with_steps(self, steps: Iterable, name: str | None = None) -> Scenario:
        steps = tuple(steps)
        produced = {s.name for s in steps if isinstance(s, MeasurementStep)}
        statements = tuple(st for st in self.statements if set(st.variables) <= produced)
        report = None if self.report is None else tuple(v for v in self.report if v in produced)
        at = self.report_at if self.report_at in produced else None
        return replace(self, name=name or self.name, steps=steps, statements=statements, report=report, report_at=at)

    def without(self, variable: str) -> Scenario:
        """Drop the measurement that produces ``variable``."""
        i = self.step_of(variable)
        return self.with_steps(self.steps[:i] + self.steps[i + 1:], f"{self.name} without {variable}")


def _vec(factors: Sequence[FactorSpace], terms: Sequence[tuple[Surd, Sequence[str]]]) -> dict[int, Surd]:
    out: dict[int, Surd] = {}
    for coef, labels in terms:
        idx = 0
        for f, lab in zip(factors, labels):
            idx = idx * f.dim + f.index(lab)
        out[idx] = out.get(idx, Surd(0)) + coef
    return out


HALF_ROOT = Surd.sqrt(Fraction(1, 2))


def fr_space(hidden_qubit: bool = False) -> ProductSpace:
    factors = [
        FactorSpace("coin", ("heads", "tails")),
        FactorSpace("Fbar", ("0", "h", "t")),
        FactorSpace("spin", ("down", "up")),
        FactorSpace("F", ("0", "down", "up")),
    ]
    if hidden_qubit:
        factors.append(FactorSpace("Gbar", ("0", "h", "t")))
    factors += [FactorSpace("Wbar", ("0", "okbar", "failbar")), FactorSpace("W", ("0", "OK", "fail"))]
    return make_product_space(factors)


def fr_bases(space: ProductSpace) -> dict[str, ObservableBasis]:
    coin, fbar, spin, f = (space.factor(n) for n in ("coin", "Fbar", "spin", "F"))
    s = HALF_ROOT
    bases = {
        "coin_z": ObservableBasis.from_exact(
            "coin_z", (coin,), [("h", _vec((coin,), [(Surd(1), ("heads",))])), ("t", _vec((coin,), [(Surd(1), ("tails",))]))]
        ),
        "spin_z": ObservableBasis.computational(spin, "spin_z"),
        "spin_x": ObservableBasis.from_exact(
            "spin_x",
            (spin,),
            [
                ("plus", _vec((spin,), [(s, ("down",)), (s, ("up",))])),
                ("minus", _vec((spin,), [(s, ("down",)), (-s, ("up",))])),
            ],
        ),
        "wbar": ObservableBasis.from_exact(
            "wbar",
            (coin, fbar),
            [
                ("okbar", _vec((coin, fbar), [(s, ("heads", "h")), (-s, ("tails", "t"))])),
                ("failbar", _vec((coin, fbar), [(s, ("heads", "h")), (s, ("tails", "t"))])),
            ],
        ),
        # Wbar's basis while Fbar is still blank
        "wbar_blank": ObservableBasis.from_exact(
            "wbar_blank",
            (coin, fbar),
            [
                ("okbar", _vec((coin, fbar), [(s, ("heads", "0")), (-s, ("tails", "0"))])),
                ("failbar", _vec((coin, fbar), [(s, ("heads", "0")), (s, ("tails", "0"))])),
            ],
        ),
        "w": ObservableBasis.from_exact(
            "w",
            (spin, f),
            [
                ("OK", _vec((spin, f), [(s, ("down", "down")), (-s, ("up", "up"))])),
                ("fail", _vec((spin, f), [(s, ("down", "down")), (s, ("up", "up"))])),
            ],
        ),
        "fbar_record": ObservableBasis.from_exact(
            "fbar_record", (fbar,), [("h", _vec((fbar,), [(Surd(1), ("h",))])), ("t", _vec((fbar,), [(Surd(1), ("t",))]))]
        ),
    }
    return bases


def transverse_rotation(space: ProductSpace) -> tuple[np.ndarray, ExactMatrix]:
    """down -> (down + up)/sqrt2, up -> (down - up)/sqrt2."""
    return fr_bases(space)["spin_x"].as_unitary()


def fr_preparation(space: ProductSpace) -> StateVector:
    return superpose(
        space,
        [(Surd.sqrt(Fraction(1, 3)), {"coin": "heads"}), (Surd.sqrt(Fraction(2, 3)), {"coin": "tails"})],
    )


@dataclass(frozen=True)
class FROptions:
    ordering: Ordering = Ordering.FBAR_F_WBAR_W
    collapse_at: frozenset[str] = frozenset()
    hidden_qubit: bool = False
    postselect: Mapping[str, str] = field(default_factory=dict)
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "ordering", Ordering(self.ordering))
        object.__setattr__(self, "collapse_at", frozenset(self.collapse_at))
        object.__setattr__(self, "postselect", dict(self.postselect))

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        parts = [self.ordering.value]
        if self.collapse_at:
            parts.append("collapse=" + "+".join(sorted(self.collapse_at)))
        if self.postselect:
            parts.append("select=" + ",".join(f"{k}:{v}" for k, v in sorted(self.postselect.items())))
        if self.hidden_qubit:
            parts.append("hidden")
        return " ".join(parts)


def build_fr_scenario(options: FROptions | None = None, **kwargs) -> Scenario:
    """Build one configuration of the protocol.  Keyword arguments are
    forwarded to :class:`FROptions` when ``options`` is omitted."""
    opts = options if options is not None else FROptions(**kwargs)
    space = fr_space(opts.hidden_qubit)
    bases = fr_bases(space)
    agents = {"Fbar", "F", "Wbar", "W"} | ({"Gbar"} if opts.hidden_qubit else set())
    unknown = opts.collapse_at - agents
    if unknown:
        raise ScenarioError(f"collapse_at names unknown agent(s) {sorted(unknown)}")
    select: dict[str, str] = {}
    for key, outcome in opts.postselect.items():
        var = AGENT_VARIABLE.get(key, key)
        if var not in AGENT_VARIABLE.values() or (var == "g" and not opts.hidden_qubit):
            raise ScenarioError(f"cannot postselect unknown variable {key!r}")
        select[var] = outcome

    def measure(basis: str, agent: str) -> MeasurementStep:
        var = AGENT_VARIABLE[agent]
        collapse = agent in opts.collapse_at
        if var in select and not collapse:
            raise ScenarioError(f"postselecting {var}={select[var]} needs {agent} to collapse")
        return MeasurementStep(bases[basis], agent, collapse, select.get(var), var)

    rot = transverse_rotation(space)
    fbar = [measure("coin_z", "Fbar")] + ([measure("fbar_record", "Gbar")] if opts.hidden_qubit else [])
    f = [measure("spin_z", "F")]
    w = [measure("w", "W")]
    if opts.ordering is Ordering.F_WBAR_FBAR:
        # no record exists yet, so the coin itself steers the spin
        prep = [ControlledStep("coin", {"tails": rot}, ("spin",), "coin:tails -> spin_x")]
        steps = prep + f + [measure("wbar_blank", "Wbar")] + fbar + w
    else:
        send = [ControlledStep("Fbar", {"t": rot}, ("spin",), "Fbar:t -> spin_x")]
        wbar = [measure("wbar", "Wbar")]
        tail = wbar + w if opts.ordering is Ordering.FBAR_F_WBAR_W else w + wbar
        steps = fbar + send + f + tail
    return Scenario(
        opts.label,
        space,
        fr_preparation(space),
        tuple(steps),
        TABLE_STATEMENTS,
        ("wbar", "w"),
    )


# -- running ----------------------------------------------------------------


@dataclass
class RunResult:
    scenario: Scenario
    joint: JointDistribution
    snapshots: list[JointDistribution]
    final_state: StateVector | None
    records: dict[str, dict[str, Any]]
    branches: list[Branch]
    selection_probability: float

    def joint_at(self, key: int | str) -> JointDistribution:
        """Snapshot right after step ``key`` (an index, or the variable that
        step produces)."""
        i = self.scenario.step_of(key) if isinstance(key, str) else key
        return self.snapshots[i]

    @property
    def report_joint(self) -> JointDistribution:
        joint = self.joint if self.scenario.report_at is None else self.joint_at(self.scenario.report_at)
        if self.scenario.report:
            return joint.marginal(self.scenario.report)
        return joint


def run(scenario: Scenario, seed: int | None = None) -> RunResult:
    """Run every collapse branch, or with ``seed`` draw a single history."""
    rng = None if seed is None else np.random.default_rng(seed)
    trace: ProtocolTrace = run_protocol(scenario.preparation, scenario.steps, rng)
    final = None
    if len(trace.branches) == 1 and (rng is not None or not scenario.has_unselected_collapse()):
        final = trace.branches[0].state.normalized()
    records = {}
    fixed = dict(trace.branches[0].assignment) if len(trace.branches) == 1 else {}
    for i, s in scenario.measurements:
        records[s.name] = {
            "step": i,
            "recorder": s.recorder,
            "basis": s.basis.name,
            "collapse": s.collapse,
            "outcome": fixed.get(s.name),
        }
    return RunResult(
        scenario, trace.snapshots[-1], trace.snapshots, final, records, trace.branches, trace.selection_probability
    )


def statement_time(scenario: Scenario, statement: Statement) -> int:
    return max(scenario.step_of(v) for v in statement.variables)


def check_statement(result: RunResult, statement: Statement, tolerance: float = CERTAIN_TOL) -> StatementResult:
    """Judge ``statement`` right after the last measurement it mentions."""
    t = statement_time(result.scenario, statement)
    res = evaluate_statement(result.snapshots[t], statement, tolerance)
    return replace(res, step=t)


# -- configuration x statement table ----------------------------------------

FR_SUITE: tuple[FROptions, ...] = (
    FROptions(name="no collapse"),
    FROptions(collapse_at={"Fbar"}, postselect={"r": "t"}, name="Fbar collapses (tails)"),
    FROptions(collapse_at={"Fbar", "F"}, postselect={"r": "t"}, name="Fbar and F collapse (tails)"),
    FROptions(collapse_at={"Fbar", "F", "Wbar", "W"}, name="every agent collapses"),
    FROptions(
        Ordering.F_WBAR_FBAR,
        {"Wbar", "Fbar"},
        postselect={"wbar": "okbar", "r": "t"},
        name="Wbar before Fbar (okbar, tails)",
    ),
    FROptions(Ordering.FBAR_F_W_WBAR, name="W before Wbar"),
)

SUITES = {"fr": FR_SUITE}


@dataclass
class MatrixReport:
    statement_ids: tuple[str, ...]
    rows: list[tuple[str, dict[str, StatementResult]]]
    mixed_row: tuple[str, dict[str, tuple[StatementResult, str]]] | None = None

    def all_hold_rows(self, ids: Sequence[str] = tuple(s.id for s in TABLE_STATEMENTS)) -> list[str]:
        out = []
        for name, cells in self.rows:
            if all(i in cells for i in ids) and all(cells[i].verdict is Verdict.HOLDS for i in ids):
                out.append(name)
        return out

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "statements": list(self.statement_ids),
            "rows": [
                {"configuration": name, "cells": {i: cells[i].to_dict() for i in self.statement_ids if i in cells}}
                for name, cells in self.rows
            ],
        }
        if self.mixed_row is not None:
            name, cells = self.mixed_row
            data["mixed"] = {
                "configuration": name,
                "non_physical": True,
                "cells": {i: {**res.to_dict(), "taken_from": src} for i, (res, src) in cells.items()},
            }
        return data

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("ensure_ascii", False)
        return json.dumps(self.to_dict(), **kwargs)

    def to_text(self) -> str:
        def cell(res: StatementResult) -> str:
            p = "-" if math.isnan(res.probability) else f"{res.probability:.4f}"
            return f"{res.verdict.value} ({p})"

        head = ["configuration"] + list(self.statement_ids)
        body = [[name] + [cell(c[i]) if i in c else "n/a" for i in self.statement_ids] for name, c in self.rows]
        if self.mixed_row is not None:
            name, cells = self.mixed_row
            body.append([name] + [cell(cells[i][0]) if i in cells else "n/a" for i in self.statement_ids])
        widths = [max(len(r[k]) for r in [head] + body) for k in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + body]
        if self.mixed_row is not None:
            lines.append("(last row mixes configurations: NOT a single state vector, non-physical)")
        return "\n".join(lines)


def statement_matrix(
    configurations: Iterable[FROptions | Scenario],
    statements: Sequence[Statement] = TABLE_STATEMENTS,
    tolerance: float = CERTAIN_TOL,
    mixed: bool = False,
) -> MatrixReport:
    """Verdict table, one row per configuration.

    Raises :class:`InvariantError` if some single configuration makes every
    one of the three table statements hold.  ``mixed`` appends a row that
    cherry-picks each statement from whichever configuration favours it.
    """
    rows = []
    for conf in configurations:
        scenario = conf if isinstance(conf, Scenario) else build_fr_scenario(conf)
        result = run(scenario)
        cells = {}
        for st in statements:
            if all(v in scenario.variables for v in st.variables):
                cells[st.id] = check_statement(result, st, tolerance)
        rows.append((scenario.name, cells))
    report = MatrixReport(tuple(s.id for s in statements), rows)
    bad = report.all_hold_rows()
    if bad:
        raise InvariantError(f"configuration(s) {bad} satisfy every table statement at once")
    if mixed and rows:
        picked = {}
        for st in statements:
            candidates = [(name, cells[st.id]) for name, cells in rows if st.id in cells]
            if not candidates:
                continue
            holding = [c for c in candidates if c[1].verdict is Verdict.HOLDS]
            name, res = (holding or candidates)[0]
            picked[st.id] = (res, name)
        report.mixed_row = ("MIXED (non-physical)", picked)
    return report
