"""Turn a parsed :class:`ScenarioDoc` into a runnable :class:`Scenario`."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errors import NonOrthonormalBasisError, ScenarioError, SpaceError, WignerLabError, ZeroVectorError
from ..exact import Surd
from ..hilbert import FactorSpace, ObservableBasis, make_product_space, superpose
from ..measurement import MeasurementStep
from ..scenarios import ControlledStep, Predicate, Scenario, Statement, UnitaryStep
from .syntax import (
    AgentDecl,
    AmpExpr,
    ApplyStep,
    BasisDecl,
    Coef,
    ControlStep,
    Diagnostic,
    DiagnosticError,
    FactorDecl,
    MeasureStep,
    OptionDecl,
    Pred,
    PrepareDecl,
    ScenarioDoc,
    Span,
    StatementDecl,
    parse_scenario,
)

BLANK = "0"
KNOWN_OPTIONS = ("report", "report_at", "name")


def coef_value(c: Coef | None) -> Surd:
    if c is None:
        return Surd(1)
    if c.radicand is not None:
        v = Surd.sqrt(c.radicand)
        return v if c.div is None else v / c.div
    v = Surd(c.ratio)
    return v if c.root is None else v / Surd.sqrt(c.root)


@dataclass
class CompiledScenario:
    scenario: Scenario
    warnings: list[Diagnostic]


class _Compiler:
    def __init__(self, doc: ScenarioDoc):
        self.doc = doc
        self.diags: list[Diagnostic] = []
        self.factors: dict[str, FactorSpace] = {}
        self.bases: dict[str, ObservableBasis] = {}
        self.basis_decls: dict[str, BasisDecl] = {}

    def error(self, span: Span, message: str, hint: str | None = None) -> None:
        self.diags.append(Diagnostic("error", span, message, hint))

    def warn(self, span: Span, message: str, hint: str | None = None) -> None:
        self.diags.append(Diagnostic("warning", span, message, hint))

    # declarations

    def declare_factors(self) -> None:
        for b in self.doc.of_type(BasisDecl):
            if b.name in self.basis_decls:
                self.error(b.span, f"basis {b.name!r} is declared twice")
            else:
                self.basis_decls[b.name] = b
        first_record: dict[str, MeasureStep] = {}
        for m in self.doc.of_type(MeasureStep):
            if m.recorder is not None and m.recorder not in first_record:
                first_record[m.recorder] = m
        for d in self.doc.decls:
            if not isinstance(d, (FactorDecl, AgentDecl)):
                continue
            if d.name in self.factors:
                self.error(d.span, f"factor {d.name!r} is declared twice")
                continue
            if isinstance(d, FactorDecl):
                if len(set(d.labels)) != len(d.labels):
                    self.error(d.span, f"factor {d.name!r} repeats a basis label")
                    continue
                self.factors[d.name] = FactorSpace(d.name, d.labels)
                continue
            m = first_record.get(d.name)
            if m is None:
                self.error(
                    d.span,
                    f"agent {d.name!r} never records a measurement, so its memory has no labels",
                    hint="add 'measure <basis> by " + d.name + "' or declare it as a factor",
                )
                continue
            bdecl = self.basis_decls.get(m.basis)
            if bdecl is None:
                continue  # reported with the step
            labels = (BLANK,) + tuple(o.label for o in bdecl.outcomes)
            if len(set(labels)) != len(labels):
                self.error(d.span, f"agent {d.name!r}: an outcome of {m.basis!r} is named {BLANK!r}, the blank label")
                continue
            self.factors[d.name] = FactorSpace(d.name, labels)

    def resolve_targets(self, targets, span: Span) -> list[FactorSpace] | None:
        out = []
        for t in targets:
            if t not in self.factors:
                self.error(span, f"unknown factor {t!r}", hint=self._known("factors", self.factors))
                return None
            out.append(self.factors[t])
        if len(set(targets)) != len(targets):
            self.error(span, "a factor appears twice in a target list")
            return None
        return out

    def _known(self, what: str, names) -> str:
        return f"known {what}: {', '.join(names) or 'none'}"

    def vector(self, expr: AmpExpr, factors: list[FactorSpace], what: str) -> dict[int, Surd] | None:
        """Exact vector on ``factors``; kets are read positionally unless every
        label is qualified."""
        out: dict[int, Surd] = {}
        names = [f.label for f in factors]
        ok = True
        for term in expr.terms:
            labels: dict[str, str] = {}
            if all(k.factor is not None for k in term.kets):
                for k in term.kets:
                    if k.factor not in names:
                        self.error(k.span, f"{what}: factor {k.factor!r} is not a target", hint=f"targets: {', '.join(names)}")
                        ok = False
                    elif k.factor in labels:
                        self.error(k.span, f"{what}: factor {k.factor!r} appears twice in one term")
                        ok = False
                    else:
                        labels[k.factor] = k.label
                missing = [n for n in names if n not in labels]
                if ok and missing:
                    self.error(term.span, f"{what}: term gives no label for {', '.join(missing)}")
                    ok = False
            elif len(term.kets) != len(factors):
                self.error(
                    term.span,
                    f"{what}: term has {len(term.kets)} label(s) but the targets are {' ⊗ '.join(names)}",
                    hint="give one label per target factor, in target order",
                )
                ok = False
            else:
                for k, f in zip(term.kets, factors):
                    if k.factor is not None and k.factor != f.label:
                        self.error(k.span, f"{what}: expected a label of {f.label!r} here, got {k.factor}:{k.label}")
                        ok = False
                    labels[f.label] = k.label
            if not ok:
                continue
            idx = 0
            for f in factors:
                lab = labels[f.label]
                if lab not in f.basis_labels:
                    self.error(
                        term.span, f"{what}: unknown label {lab!r} for factor {f.label!r}",
                        hint=f"labels of {f.label}: {', '.join(f.basis_labels)}",
                    )
                    ok = False
                    break
                idx = idx * f.dim + f.index(lab)
            if ok:
                value = coef_value(term.coef) * term.sign
                out[idx] = out.get(idx, Surd(0)) + value
        return out if ok else None

    def declare_bases(self) -> None:
        for name, b in self.basis_decls.items():
            factors = self.resolve_targets(b.targets, b.span)
            if factors is None:
                continue
            if len({o.label for o in b.outcomes}) != len(b.outcomes):
                self.error(b.span, f"basis {name!r} repeats an outcome label")
                continue
            outcomes = []
            for o in b.outcomes:
                vec = self.vector(o.expr, factors, f"basis {name!r}, outcome {o.label!r}")
                if vec is None:
                    break
                outcomes.append((o.label, vec))
            else:
                try:
                    self.bases[name] = ObservableBasis.from_exact(name, factors, outcomes)
                except (NonOrthonormalBasisError, ZeroVectorError, SpaceError) as exc:
                    self.error(b.span, str(exc), hint="outcome vectors must be normalized and mutually orthogonal")

    def preparation(self, space):
        preps = self.doc.of_type(PrepareDecl)
        if not preps:
            self.error(Span(1, 1, 1, 1), "no preparation", hint="add  prepare { <amplitude expression> }")
            return None
        for extra in preps[1:]:
            self.error(extra.span, "more than one preparation")
        prep = preps[0]
        owners: dict[str, list[str]] = {}
        for f in space.factors:
            for lab in f.basis_labels:
                owners.setdefault(lab, []).append(f.label)
        terms = []
        ok = True
        for term in prep.expr.terms:
            labels: dict[str, str] = {}
            for k in term.kets:
                if k.factor is not None:
                    if k.factor not in self.factors:
                        self.error(k.span, f"unknown factor {k.factor!r}", hint=self._known("factors", self.factors))
                        ok = False
                        continue
                    fac = k.factor
                    if k.label not in self.factors[fac].basis_labels:
                        self.error(k.span, f"unknown label {k.label!r} for factor {fac!r}")
                        ok = False
                        continue
                else:
                    cands = owners.get(k.label, [])
                    if not cands:
                        self.error(k.span, f"unknown label {k.label!r}")
                        ok = False
                        continue
                    if len(cands) > 1:
                        self.error(
                            k.span, f"label {k.label!r} is ambiguous (factors {', '.join(cands)})",
                            hint=f"qualify it, e.g. {cands[0]}:{k.label}",
                        )
                        ok = False
                        continue
                    fac = cands[0]
                if fac in labels:
                    self.error(k.span, f"factor {fac!r} appears twice in one term")
                    ok = False
                    continue
                labels[fac] = k.label
            terms.append((coef_value(term.coef) * term.sign, labels))
        if not ok:
            return None
        try:
            state = superpose(space, terms)
        except ZeroVectorError:
            self.error(prep.span, "the preparation is the zero vector")
            return None
        n2 = sum((c * c for c in _collect(space, terms).values()), Surd(0))
        if n2 != 1:
            self.warn(prep.span, f"preparation has squared norm {n2}; it is normalized before use")
        return state

    def steps(self):
        steps = []
        produced: dict[str, MeasurementStep] = {}
        for d in self.doc.decls:
            if isinstance(d, MeasureStep):
                basis = self.bases.get(d.basis)
                if basis is None:
                    if d.basis not in self.basis_decls:
                        self.error(d.span, f"unknown basis {d.basis!r}", hint=self._known("bases", self.basis_decls))
                    continue
                if d.recorder is not None and d.recorder not in self.factors:
                    self.error(d.span, f"unknown agent {d.recorder!r}", hint=self._known("factors", self.factors))
                    continue
                if d.selected is not None and d.selected not in basis.labels:
                    self.error(
                        d.span, f"{d.selected!r} is not an outcome of {d.basis!r}",
                        hint=f"outcomes: {', '.join(basis.labels)}",
                    )
                    continue
                try:
                    step = MeasurementStep(basis, d.recorder, d.collapse, d.selected, d.variable)
                except (ScenarioError, SpaceError) as exc:
                    self.error(d.span, str(exc))
                    continue
                if step.name in produced:
                    self.error(d.span, f"variable {step.name!r} is produced twice", hint="name it with 'as <variable>'")
                    continue
                produced[step.name] = step
                steps.append(step)
            elif isinstance(d, (ControlStep, ApplyStep)):
                targets = self.resolve_targets(d.targets, d.span)
                unitary = self.bases.get(d.unitary)
                if unitary is None and d.unitary not in self.basis_decls:
                    self.error(d.span, f"unknown basis {d.unitary!r}", hint=self._known("bases", self.basis_decls))
                if targets is None or unitary is None:
                    continue
                if not unitary.is_complete:
                    self.error(d.span, f"basis {d.unitary!r} is incomplete and cannot be used as a unitary")
                    continue
                dt = 1
                for f in targets:
                    dt *= f.dim
                if dt != unitary.dim:
                    self.error(d.span, f"basis {d.unitary!r} has dimension {unitary.dim}, targets have {dt}")
                    continue
                mat = unitary.as_unitary()
                if isinstance(d, ApplyStep):
                    steps.append(UnitaryStep(mat[0], tuple(d.targets), mat[1], d.unitary))
                    continue
                if d.control not in self.factors:
                    self.error(d.span, f"unknown factor {d.control!r}", hint=self._known("factors", self.factors))
                    continue
                if d.label not in self.factors[d.control].basis_labels:
                    self.error(d.span, f"unknown label {d.label!r} for factor {d.control!r}")
                    continue
                if d.control in d.targets:
                    self.error(d.span, f"control {d.control!r} is also a target")
                    continue
                steps.append(
                    ControlledStep(d.control, {d.label: mat}, tuple(d.targets), f"{d.control}:{d.label} -> {d.unitary}")
                )
        return steps, produced

    def predicate(self, pred: Pred, produced) -> Predicate | None:
        ok = True
        for clause in pred:
            for a in clause:
                step = produced.get(a.variable)
                if step is None:
                    self.error(a.span, f"unknown outcome variable {a.variable!r}", hint=self._known("variables", produced))
                    ok = False
                elif a.label not in step.basis.labels:
                    self.error(
                        a.span, f"{a.label!r} is not an outcome of {a.variable!r}",
                        hint=f"outcomes: {', '.join(step.basis.labels)}",
                    )
                    ok = False
        if not ok:
            return None
        return Predicate(tuple(tuple((a.variable, a.op, a.label) for a in c) for c in pred))

    def statements(self, produced) -> list[Statement]:
        out = []
        seen = set()
        for d in self.doc.of_type(StatementDecl):
            if d.id in seen:
                self.error(d.span, f"statement {d.id!r} is declared twice")
                continue
            seen.add(d.id)
            event = self.predicate(d.event, produced)
            cond = self.predicate(d.condition, produced) if d.condition is not None else None
            if event is None or (d.condition is not None and cond is None):
                continue
            out.append(Statement(d.id, d.form, event, cond, d.expect))
        return out

    def options(self, produced) -> dict[str, tuple[str, ...]]:
        out = {}
        for d in self.doc.of_type(OptionDecl):
            if d.key not in KNOWN_OPTIONS:
                self.warn(d.span, f"unknown option {d.key!r} ignored", hint=f"known options: {', '.join(KNOWN_OPTIONS)}")
                continue
            if d.key in ("report", "report_at"):
                if d.key == "report_at" and len(d.values) != 1:
                    self.error(d.span, "report_at takes a single variable")
                    continue
                bad = [v for v in d.values if v not in produced]
                if bad:
                    self.error(d.span, f"report names unknown variable(s) {', '.join(bad)}")
                    continue
            out[d.key] = d.values
        return out

    def run(self, default_name: str) -> CompiledScenario:
        self.declare_factors()
        self.declare_bases()
        space = None
        if self.factors:
            space = make_product_space(list(self.factors.values()))
        prep = self.preparation(space) if space is not None else None
        if space is None and not self.doc.of_type(PrepareDecl):
            self.error(Span(1, 1, 1, 1), "no preparation", hint="declare factors and add  prepare { ... }")
        steps, produced = self.steps()
        statements = self.statements(produced)
        options = self.options(produced)
        scenario = None
        if not any(d.severity == "error" for d in self.diags) and prep is not None:
            name = options.get("name", (default_name,))[0]
            report = options.get("report")
            at = options.get("report_at", (None,))[0]
            try:
                scenario = Scenario(name, space, prep, tuple(steps), tuple(statements), report, at)
            except WignerLabError as exc:
                self.error(Span(1, 1, 1, 1), str(exc))
        errors = [d for d in self.diags if d.severity == "error"]
        if errors or scenario is None:
            raise DiagnosticError(_ordered(self.diags))
        return CompiledScenario(scenario, [d for d in self.diags if d.severity == "warning"])


def _collect(space, terms) -> dict[int, Surd]:
    out: dict[int, Surd] = {}
    for c, labels in terms:
        idx = space.index(labels)
        out[idx] = out.get(idx, Surd(0)) + c
    return out


def _ordered(diags: list[Diagnostic]) -> list[Diagnostic]:
    # stable: by position, then discovery order
    return [d for _, d in sorted(enumerate(diags), key=lambda p: (p[1].span, p[0]))]


def compile_scenario(doc: ScenarioDoc, name: str = "scenario") -> CompiledScenario:
    return _Compiler(doc).run(name)


def load_scenario(source: str, filename: str = "<input>", name: str | None = None) -> CompiledScenario:
    """Parse and compile ``.scn`` text.  Raises :class:`DiagnosticError`."""
    doc = parse_scenario(source, filename)
    try:
        return compile_scenario(doc, name or Path(filename).stem)
    except DiagnosticError as exc:
        exc.filename = filename
        raise DiagnosticError(exc.diagnostics, filename) from None


def load_file(path: str | Path) -> CompiledScenario:
    path = Path(path)
    return load_scenario(path.read_text(encoding="utf-8"), str(path), path.stem)
