"""Lexer, AST and recursive-descent parser for ``.scn`` scenario files.

::

    doc       := decl*
    decl      := factor | agent | basis | prepare | step | statement | option
    factor    := "factor" IDENT "{" label ("," label)+ "}"
    agent     := "agent" IDENT
    basis     := "basis" IDENT "on" targets "{" (IDENT "=" ampexpr [","])+ "}"
    targets   := IDENT (("⊗" | "*") IDENT)*
    prepare   := "prepare" "{" ampexpr "}"
    step      := "measure" IDENT ["by" IDENT] ["collapse" ["=" label]] ["as" IDENT]
               | "control" IDENT ":" label "apply" IDENT "on" targets
               | "apply" IDENT "on" targets
    statement := "statement" IDENT ":" ("certain" | "possible")
                 "(" pred ["given" pred] ")" ["expect" VERDICT]
    option    := "option" IDENT "=" IDENT ("," IDENT)*
    ampexpr   := ["-"] term (("+" | "-") term)*
    term      := [coef] ket+
    coef      := RATIONAL ["/" "sqrt" "(" RATIONAL ")"] | "sqrt" "(" RATIONAL ")" ["/" INT]
    ket       := label | IDENT ":" label
    pred      := conj ("or" conj)* ;  conj := atom ("and" atom)*
    atom      := IDENT ("=" | "!=") label
    RATIONAL  := INT ["/" INT]

``#`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

KEYWORDS = frozenset(
    {
        "factor", "agent", "basis", "on", "prepare", "measure", "by", "collapse", "as", "control",
        "apply", "statement", "certain", "possible", "given", "and", "or", "expect", "option", "sqrt",
    }
)
DECL_KEYWORDS = frozenset({"factor", "agent", "basis", "prepare", "measure", "control", "apply", "statement", "option"})
VERDICTS = ("HOLDS", "FAILS", "VACUOUS")


# -- diagnostics -------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def to(self, other: Span) -> Span:
        return Span(self.line, self.col, other.end_line, other.end_col)

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOWHERE = Span(1, 1, 1, 1)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    span: Span
    message: str
    hint: str | None = None

    def format(self, filename: str = "<input>") -> str:
        text = f"{filename}:{self.span}: {self.severity}: {self.message}"
        if self.hint:
            text += f"\n  hint: {self.hint}"
        return text

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "line": self.span.line,
            "col": self.span.col,
            "end_line": self.span.end_line,
            "end_col": self.span.end_col,
            "message": self.message,
            "hint": self.hint,
        }


class DiagnosticError(Exception):
    def __init__(self, diagnostics: list[Diagnostic], filename: str = "<input>"):
        self.diagnostics = list(diagnostics)
        self.filename = filename
        super().__init__("\n".join(d.format(filename) for d in self.diagnostics))


# -- lexer -------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT INT FLOAT PUNCT EOF
    text: str
    span: Span


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<float>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[^\W\d]\w*)
  | (?P<punct>!=|[{}(),=:+\-/*⊗])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            span = Span(line, col, line, col + 1)
            diags.append(Diagnostic("error", span, f"unexpected character {text[pos]!r}"))
            pos += 1
            continue
        kind = m.lastgroup
        value = m.group()
        end = m.end()
        if kind == "ws" or kind == "comment":
            for k, ch in enumerate(value):
                if ch == "\n":
                    line += 1
                    line_start = pos + k + 1
            pos = end
            continue
        span = Span(line, col, line, col + len(value))
        if kind == "punct" and value == "*":
            value = "⊗"
        tokens.append(Token(kind.upper(), value, span))
        pos = end
    col = pos - line_start + 1
    tokens.append(Token("EOF", "", Span(line, col, line, col)))
    return tokens, diags


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Coef:
    """``ratio / sqrt(root) * sqrt(radicand) / div``; unused parts are None."""

    ratio: Fraction | None = None
    root: Fraction | None = None
    radicand: Fraction | None = None
    div: int | None = None


@dataclass(frozen=True)
class Ket:
    factor: str | None
    label: str
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class Term:
    sign: int
    coef: Coef | None
    kets: tuple[Ket, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class AmpExpr:
    terms: tuple[Term, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class FactorDecl:
    name: str
    labels: tuple[str, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class AgentDecl:
    name: str
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class Outcome:
    label: str
    expr: AmpExpr
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class BasisDecl:
    name: str
    targets: tuple[str, ...]
    outcomes: tuple[Outcome, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class PrepareDecl:
    expr: AmpExpr
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class MeasureStep:
    basis: str
    recorder: str | None
    collapse: bool
    selected: str | None
    variable: str | None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class ControlStep:
    control: str
    label: str
    unitary: str
    targets: tuple[str, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class ApplyStep:
    unitary: str
    targets: tuple[str, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class Atom:
    variable: str
    op: str
    label: str
    span: Span = field(default=NOWHERE, compare=False)


Pred = tuple[tuple[Atom, ...], ...]  # disjunction of conjunctions


@dataclass(frozen=True)
class StatementDecl:
    id: str
    form: str
    event: Pred
    condition: Pred | None
    expect: str | None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class OptionDecl:
    key: str
    values: tuple[str, ...]
    span: Span = field(default=NOWHERE, compare=False)


Decl = Union[FactorDecl, AgentDecl, BasisDecl, PrepareDecl, MeasureStep, ControlStep, ApplyStep, StatementDecl, OptionDecl]


@dataclass(frozen=True)
class ScenarioDoc:
    decls: tuple[Decl, ...]
    source: str = field(default="", compare=False, repr=False)

    def of_type(self, cls) -> list:
        return [d for d in self.decls if isinstance(d, cls)]


# -- parser ------------------------------------------------------------------


class _Bail(Exception):
    pass


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens, self.diagnostics = tokenize(text)
        self.pos = 0

    # token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("IDENT", "PUNCT")

    def error(self, message: str, span: Span | None = None, hint: str | None = None) -> _Bail:
        self.diagnostics.append(Diagnostic("error", span or self.tok.span, message, hint))
        return _Bail()

    def _describe(self, t: Token) -> str:
        return "end of input" if t.kind == "EOF" else repr(t.text)

    def expect(self, text: str, hint: str | None = None) -> Token:
        if self.at(text):
            return self.advance()
        raise self.error(f"expected {text!r}, found {self._describe(self.tok)}", hint=hint)

    def float_error(self) -> _Bail:
        return self.error(
            f"floating-point literal {self.tok.text!r} is not allowed",
            hint="amplitudes are exact: write a rational times a square root, e.g. 1/sqrt(3) or sqrt(2/3)",
        )

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind == "IDENT" and t.text not in KEYWORDS:
            return self.advance()
        if t.kind == "IDENT":
            raise self.error(f"expected {what}, found keyword {t.text!r}")
        if t.kind == "FLOAT":
            raise self.float_error()
        raise self.error(f"expected {what}, found {self._describe(t)}")

    def label(self, what: str = "label") -> Token:
        if self.tok.kind == "INT":
            return self.advance()
        return self.ident(what)

    def integer(self) -> tuple[int, Span]:
        t = self.tok
        if t.kind == "INT":
            self.advance()
            return int(t.text), t.span
        if t.kind == "FLOAT":
            raise self.float_error()
        raise self.error(f"expected an integer, found {self._describe(t)}")

    def rational(self) -> Fraction:
        n, span = self.integer()
        if self.at("/") and self.peek().kind == "INT":
            self.advance()
            d, dspan = self.integer()
            if d == 0:
                raise self.error("division by zero in amplitude", dspan)
            return Fraction(n, d)
        return Fraction(n)

    def sync(self, start: int) -> None:
        """Skip to the next top-level declaration keyword after token ``start``,
        where the failed declaration began."""
        depth = 0
        if self.pos == start:
            self.advance()
        while self.tok.kind != "EOF":
            t = self.tok
            if t.text == "{":
                depth += 1
            elif t.text == "}":
                depth = max(depth - 1, 0)
                if depth == 0 and self.pos > start:
                    self.advance()
                    if self.tok.kind == "IDENT" and self.tok.text in DECL_KEYWORDS:
                        return
                    continue
            elif depth == 0 and self.pos > start and t.kind == "IDENT" and t.text in DECL_KEYWORDS:
                return
            self.advance()

    # grammar

    def parse(self) -> ScenarioDoc:
        decls = []
        while self.tok.kind != "EOF":
            start = self.pos
            try:
                decls.append(self.decl())
            except _Bail:
                self.sync(start)
        return ScenarioDoc(tuple(decls), self.text)

    def decl(self) -> Decl:
        t = self.tok
        rule = {
            "factor": self.factor,
            "agent": self.agent,
            "basis": self.basis,
            "prepare": self.prepare,
            "measure": self.measure,
            "control": self.control,
            "apply": self.apply,
            "statement": self.statement,
            "option": self.option,
        }.get(t.text if t.kind == "IDENT" else "")
        if rule is None:
            if t.kind == "FLOAT":
                raise self.float_error()
            raise self.error(
                f"expected a declaration, found {self._describe(t)}",
                hint="declarations start with one of: " + ", ".join(sorted(DECL_KEYWORDS)),
            )
        return rule()

    def factor(self) -> FactorDecl:
        start = self.advance().span
        name = self.ident("factor name").text
        self.expect("{")
        labels = [self.label().text]
        while self.at(","):
            self.advance()
            labels.append(self.label().text)
        end = self.expect("}", hint="labels are separated by commas").span
        if len(labels) < 2:
            raise self.error(f"factor {name!r} needs at least two basis labels", start.to(end))
        return FactorDecl(name, tuple(labels), start.to(end))

    def agent(self) -> AgentDecl:
        start = self.advance().span
        t = self.ident("agent name")
        return AgentDecl(t.text, start.to(t.span))

    def targets(self) -> tuple[list[str], Span]:
        first = self.ident("factor name")
        names, end = [first.text], first.span
        while self.at("⊗"):
            self.advance()
            t = self.ident("factor name")
            names.append(t.text)
            end = t.span
        return names, first.span.to(end)

    def basis(self) -> BasisDecl:
        start = self.advance().span
        name = self.ident("basis name").text
        self.expect("on")
        targets, _ = self.targets()
        self.expect("{")
        outcomes = []
        while not self.at("}"):
            if self.tok.kind == "EOF":
                raise self.error("unterminated basis: expected '}'")
            lab = self.label("outcome label")
            self.expect("=", hint="each outcome is written  label = amplitude-expression")
            expr = self.ampexpr(stop_at_outcome=True)
            outcomes.append(Outcome(lab.text, expr, lab.span.to(expr.span)))
            if self.at(","):
                self.advance()
        end = self.advance().span
        if not outcomes:
            raise self.error(f"basis {name!r} declares no outcomes", start.to(end))
        return BasisDecl(name, tuple(targets), tuple(outcomes), start.to(end))

    def prepare(self) -> PrepareDecl:
        start = self.advance().span
        self.expect("{")
        expr = self.ampexpr(stop_at_outcome=False)
        end = self.expect("}").span
        return PrepareDecl(expr, start.to(end))

    def _outcome_start(self) -> bool:
        return self.tok.kind in ("IDENT", "INT") and self.peek().text == "=" and self.peek().kind == "PUNCT"

    def ampexpr(self, stop_at_outcome: bool) -> AmpExpr:
        start = self.tok.span
        terms = []
        sign = 1
        if self.at("-") or self.at("+"):
            sign = -1 if self.advance().text == "-" else 1
        terms.append(self.term(sign, stop_at_outcome))
        while self.at("+") or self.at("-"):
            sign = -1 if self.advance().text == "-" else 1
            terms.append(self.term(sign, stop_at_outcome))
        return AmpExpr(tuple(terms), start.to(terms[-1].span))

    def coef(self) -> Coef | None:
        t = self.tok
        if t.kind == "FLOAT":
            raise self.float_error()
        if t.kind == "INT":
            ratio = self.rational()
            if self.at("/") and self.peek().text == "sqrt":
                self.advance()
                return Coef(ratio=ratio, root=self.sqrt_arg())
            return Coef(ratio=ratio)
        if self.at("sqrt"):
            rad = self.sqrt_arg()
            div = None
            if self.at("/"):
                self.advance()
                div, span = self.integer()
                if div == 0:
                    raise self.error("division by zero in amplitude", span)
            return Coef(radicand=rad, div=div)
        return None

    def sqrt_arg(self) -> Fraction:
        self.expect("sqrt")
        self.expect("(")
        value = self.rational()
        self.expect(")")
        if value <= 0:
            raise self.error("square root of a non-positive number", hint="only real, nonzero amplitudes are supported")
        return value

    def term(self, sign: int, stop_at_outcome: bool) -> Term:
        start = self.tok.span
        coef = self.coef()
        kets = []
        while True:
            t = self.tok
            if stop_at_outcome and self._outcome_start():
                break
            if t.kind == "INT" or (t.kind == "IDENT" and t.text not in KEYWORDS):
                kets.append(self.ket())
                if self.at("⊗"):
                    self.advance()
                continue
            break
        if not kets:
            if self.tok.kind == "FLOAT":
                raise self.float_error()
            raise self.error(
                f"malformed amplitude: expected a basis label, found {self._describe(self.tok)}",
                hint="a term is an optional coefficient followed by labels, e.g. 1/sqrt(2) heads Fbar:h",
            )
        return Term(sign, coef, tuple(kets), start.to(kets[-1].span))

    def ket(self) -> Ket:
        first = self.label()
        if self.at(":"):
            self.advance()
            lab = self.label()
            return Ket(first.text, lab.text, first.span.to(lab.span))
        return Ket(None, first.text, first.span)

    def measure(self) -> MeasureStep:
        start = self.advance().span
        end = self.tok.span
        basis = self.ident("basis name")
        end = basis.span
        recorder = None
        collapse = False
        selected = None
        variable = None
        if self.at("by"):
            self.advance()
            t = self.ident("agent name")
            recorder, end = t.text, t.span
        if self.at("collapse"):
            end = self.advance().span
            collapse = True
            if self.at("="):
                self.advance()
                t = self.label("outcome label")
                selected, end = t.text, t.span
        if self.at("as"):
            self.advance()
            t = self.ident("variable name")
            variable, end = t.text, t.span
        return MeasureStep(basis.text, recorder, collapse, selected, variable, start.to(end))

    def control(self) -> ControlStep:
        start = self.advance().span
        ctrl = self.ident("control factor").text
        self.expect(":", hint="write the control as factor:label")
        lab = self.label().text
        self.expect("apply")
        unitary = self.ident("basis name").text
        self.expect("on")
        targets, tspan = self.targets()
        return ControlStep(ctrl, lab, unitary, tuple(targets), start.to(tspan))

    def apply(self) -> ApplyStep:
        start = self.advance().span
        unitary = self.ident("basis name").text
        self.expect("on")
        targets, tspan = self.targets()
        return ApplyStep(unitary, tuple(targets), start.to(tspan))

    def statement(self) -> StatementDecl:
        start = self.advance().span
        sid = self.ident("statement id").text
        self.expect(":")
        if not (self.at("certain") or self.at("possible")):
            raise self.error(f"expected 'certain' or 'possible', found {self._describe(self.tok)}")
        form = self.advance().text.upper()
        self.expect("(")
        event = self.pred()
        cond = None
        if self.at("given"):
            if form == "POSSIBLE":
                raise self.error("'given' is only allowed in certain(...) statements")
            self.advance()
            cond = self.pred()
        end = self.expect(")").span
        expect = None
        if self.at("expect"):
            self.advance()
            t = self.tok
            if t.kind != "IDENT" or t.text not in VERDICTS:
                raise self.error(f"expected one of {', '.join(VERDICTS)}, found {self._describe(t)}")
            self.advance()
            expect, end = t.text, t.span
        return StatementDecl(sid, form, event, cond, expect, start.to(end))

    def pred(self) -> Pred:
        clauses = [self.conj()]
        while self.at("or"):
            self.advance()
            clauses.append(self.conj())
        return tuple(clauses)

    def conj(self) -> tuple[Atom, ...]:
        atoms = [self.atom()]
        while self.at("and"):
            self.advance()
            atoms.append(self.atom())
        return tuple(atoms)

    def atom(self) -> Atom:
        var = self.ident("outcome variable")
        if not (self.at("=") or self.at("!=")):
            raise self.error(f"expected '=' or '!=', found {self._describe(self.tok)}")
        op = self.advance().text
        lab = self.label("outcome label")
        return Atom(var.text, op, lab.text, var.span.to(lab.span))

    def option(self) -> OptionDecl:
        start = self.advance().span
        key = self.ident("option name").text
        self.expect("=")
        t = self.label("option value")
        values, end = [t.text], t.span
        while self.at(","):
            self.advance()
            t = self.label("option value")
            values.append(t.text)
            end = t.span
        return OptionDecl(key, tuple(values), start.to(end))


def parse_scenario(text: str, filename: str = "<input>") -> ScenarioDoc:
    """Parse ``.scn`` source.  Raises :class:`DiagnosticError` listing every
    syntax error found (the parser resynchronizes at the next declaration)."""
    parser = Parser(text)
    doc = parser.parse()
    errors = [d for d in parser.diagnostics if d.severity == "error"]
    if errors:
        raise DiagnosticError(sorted(parser.diagnostics, key=lambda d: d.span), filename)
    return doc
