"""Canonical ``.scn`` text for a parsed document.  Reparsing the output gives
back an equal AST."""

from __future__ import annotations

from fractions import Fraction

from .syntax import (
    AgentDecl,
    AmpExpr,
    ApplyStep,
    BasisDecl,
    Coef,
    ControlStep,
    FactorDecl,
    Ket,
    MeasureStep,
    OptionDecl,
    Pred,
    PrepareDecl,
    ScenarioDoc,
    StatementDecl,
)


def _rat(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_coef(c: Coef) -> str:
    if c.radicand is not None:
        text = f"sqrt({_rat(c.radicand)})"
        return text if c.div is None else f"{text}/{c.div}"
    text = _rat(c.ratio)
    return text if c.root is None else f"{text}/sqrt({_rat(c.root)})"


def format_ket(k: Ket) -> str:
    return k.label if k.factor is None else f"{k.factor}:{k.label}"


def format_expr(e: AmpExpr) -> str:
    out = []
    for i, t in enumerate(e.terms):
        body = " ".join(([format_coef(t.coef)] if t.coef else []) + [format_ket(k) for k in t.kets])
        if i == 0:
            out.append(("- " if t.sign < 0 else "") + body)
        else:
            out.append(("- " if t.sign < 0 else "+ ") + body)
    return " ".join(out)


def format_pred(p: Pred) -> str:
    return " or ".join(" and ".join(f"{a.variable} {a.op} {a.label}" for a in clause) for clause in p)


def format_decl(d) -> str:
    if isinstance(d, FactorDecl):
        return f"factor {d.name} {{ {', '.join(d.labels)} }}"
    if isinstance(d, AgentDecl):
        return f"agent {d.name}"
    if isinstance(d, BasisDecl):
        lines = [f"basis {d.name} on {' ⊗ '.join(d.targets)} {{"]
        lines += [f"    {o.label} = {format_expr(o.expr)}" for o in d.outcomes]
        return "\n".join(lines + ["}"])
    if isinstance(d, PrepareDecl):
        return f"prepare {{ {format_expr(d.expr)} }}"
    if isinstance(d, MeasureStep):
        text = f"measure {d.basis}"
        if d.recorder:
            text += f" by {d.recorder}"
        if d.collapse:
            text += " collapse" + (f" = {d.selected}" if d.selected is not None else "")
        if d.variable:
            text += f" as {d.variable}"
        return text
    if isinstance(d, ControlStep):
        return f"control {d.control}:{d.label} apply {d.unitary} on {' ⊗ '.join(d.targets)}"
    if isinstance(d, ApplyStep):
        return f"apply {d.unitary} on {' ⊗ '.join(d.targets)}"
    if isinstance(d, StatementDecl):
        inner = format_pred(d.event)
        if d.condition is not None:
            inner += f" given {format_pred(d.condition)}"
        text = f"statement {d.id}: {d.form.lower()}({inner})"
        return text + (f" expect {d.expect}" if d.expect else "")
    if isinstance(d, OptionDecl):
        return f"option {d.key} = {', '.join(d.values)}"
    raise TypeError(f"not a declaration: {d!r}")


def format_doc(doc: ScenarioDoc) -> str:
    return "\n".join(format_decl(d) for d in doc.decls) + "\n"
