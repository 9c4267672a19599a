"""Projective measurement, agent records and joint outcome distributions.

Agents measure by *premeasurement*: an isometry that copies the outcome of
a basis into a blank memory factor without collapsing anything.  A step
flagged ``collapse`` additionally applies the von Neumann projection.

Joint distributions follow the time-ordered projector rule

    P(a, b, ...) = || ... P_b U_b P_a U_a |psi> ||^2

where a collapsing step contributes its projector at the time it happens
and a coherent (non-collapsing) record is read off its memory factor at the
moment the distribution is taken.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Any, Union

import numpy as np

from .errors import BranchError, InvariantError, NonUnitaryError, RecordError, ScenarioError, SpaceError
from .exact import Surd
from .hilbert import (
    NORM_TOL,
    ExactMatrix,
    ObservableBasis,
    StateVector,
    apply_local,
    project_component,
    unitarity_deviation,
)

__all__ = [
    "ObservableBasis",
    "MeasurementStep",
    "JointDistribution",
    "premeasure",
    "controlled_unitary",
    "born_distribution",
    "exact_born_distribution",
    "project",
    "sequential_joint_distribution",
    "joint_snapshots",
    "enumerate_branches",
]

PERP_TOL = 1e-10
CLAMP_TOL = 1e-12
SUM_TOL = 1e-9
BLANK_OUTCOME = "⊥"


@dataclass(frozen=True, eq=False)
class MeasurementStep:
    basis: ObservableBasis
    recorder: str | None = None
    collapse: bool = False
    selected_outcome: str | None = None
    variable: str | None = None

    def __post_init__(self):
        if self.selected_outcome is not None:
            if not self.collapse:
                raise ScenarioError(
                    f"cannot postselect {self.selected_outcome!r} on non-collapsing measurement {self.name!r}"
                )
            self.basis.index_of(self.selected_outcome)
        if self.recorder is not None and self.recorder in self.basis.targets:
            raise ScenarioError(f"recorder {self.recorder!r} is also a measured factor of {self.basis.name!r}")

    @property
    def name(self) -> str:
        return self.variable or self.recorder or self.basis.name

    def replace(self, **changes) -> MeasurementStep:
        fields = dict(
            basis=self.basis,
            recorder=self.recorder,
            collapse=self.collapse,
            selected_outcome=self.selected_outcome,
            variable=self.variable,
        )
        fields.update(changes)
        return MeasurementStep(**fields)


Step = Union[MeasurementStep, Callable[[StateVector], StateVector]]


# -- records ----------------------------------------------------------------


def recorder_labels(basis: ObservableBasis, state_or_space, recorder: str) -> dict[str, str]:
    """Outcome -> memory label.  Same-named labels win, otherwise the
    non-blank labels are used in declaration order."""
    space = getattr(state_or_space, "space", state_or_space)
    fac = space.factor(recorder)
    free = list(fac.basis_labels[1:])
    if len(free) < len(basis.labels):
        raise RecordError(
            f"recorder {recorder!r} has {len(free)} non-blank labels but basis {basis.name!r} "
            f"has {len(basis.labels)} outcomes"
        )
    mapping = {}
    for lab in basis.labels:
        if lab in free:
            mapping[lab] = lab
            free.remove(lab)
    for lab in basis.labels:
        if lab not in mapping:
            mapping[lab] = free.pop(0)
    return mapping


def _shift_label(state: StateVector, factor: str, src: int, dst: int) -> StateVector:
    """Move the amplitude sitting at ``factor = src`` to ``factor = dst``."""
    space = state.space
    pos = space.position(factor)
    t = state.amplitudes.reshape(space.dims)
    out = np.zeros_like(t)
    sl_src = [slice(None)] * len(space.dims)
    sl_dst = list(sl_src)
    sl_src[pos], sl_dst[pos] = src, dst
    out[tuple(sl_dst)] = t[tuple(sl_src)]
    exact = None
    if state.exact is not None:
        stride = space.strides[pos]
        exact = {}
        for idx, amp in state.exact.items():
            if (idx // stride) % space.dims[pos] == src:
                exact[idx + (dst - src) * stride] = amp
    return StateVector(space, out.reshape(-1), exact)


def _blank_weight_missing(state: StateVector, recorder: str) -> float:
    dist = state.factor_distribution(recorder)
    blank = state.space.factor(recorder).blank
    return sum(p for lab, p in dist.items() if lab != blank) / max(state.norm2(), 1e-300)


def premeasure(state: StateVector, basis: ObservableBasis, recorder: str, strict: bool = True) -> StateVector:
    """Copy the ``basis`` outcome into the blank memory ``recorder``.

    The complement of the declared outcomes leaves the memory blank, which
    keeps the map isometric.  With ``strict`` a populated complement is an
    internal error, since protocol states never reach it.
    """
    if recorder in basis.targets:
        raise ScenarioError(f"recorder {recorder!r} cannot record a measurement of itself")
    if _blank_weight_missing(state, recorder) > NORM_TOL:
        raise RecordError(f"agent already holds a record: factor {recorder!r} is not blank")
    fac = state.space.factor(recorder)
    mapping = recorder_labels(basis, state, recorder)
    rest = apply_local(state, np.eye(basis.dim) - basis.vectors.T @ basis.vectors.conj(), basis.targets,
                       basis.exact_complement_projector())
    if strict and rest.norm2() > PERP_TOL * max(state.norm2(), 1e-300):
        raise InvariantError(
            f"state has weight {rest.norm2():.3e} outside the declared outcomes of basis {basis.name!r}"
        )
    out = rest
    for lab in basis.labels:
        comp = project_component(state, basis, lab)
        out = out + _shift_label(comp, recorder, 0, fac.index(mapping[lab]))
    return out


def controlled_unitary(
    state: StateVector,
    control: str,
    case_map: Mapping[str, np.ndarray | tuple[np.ndarray, ExactMatrix | None]],
    targets: Sequence[str],
) -> StateVector:
    """Apply ``case_map[c]`` to ``targets`` on the branch where ``control`` reads
    ``c``; identity for control labels not in the map.

    A case value is a matrix or a ``(matrix, exact_matrix)`` pair.
    """
    targets = tuple(targets)
    if control in targets:
        raise ScenarioError(f"control {control!r} is also a target")
    space = state.space
    cfac = space.factor(control)
    dt = math.prod(space.factor(t).dim for t in targets)
    dc = cfac.dim
    full = np.zeros((dc * dt, dc * dt), dtype=complex)
    exact: ExactMatrix | None = {}
    ident_exact = {j: [(j, Surd(1))] for j in range(dt)}
    for c, lab in enumerate(cfac.basis_labels):
        case = case_map.get(lab)
        if case is None:
            mat, ex = np.eye(dt), ident_exact
        elif isinstance(case, tuple):
            mat, ex = case
        else:
            mat, ex = case, None
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (dt, dt):
            raise SpaceError(f"case {lab!r} matrix has shape {mat.shape}, target dimension is {dt}")
        dev = unitarity_deviation(mat)
        if dev > NORM_TOL:
            raise NonUnitaryError(dev, f"case {lab!r} of control {control!r}")
        full[c * dt:(c + 1) * dt, c * dt:(c + 1) * dt] = mat
        if ex is None:
            exact = None
        elif exact is not None:
            for col, entries in ex.items():
                exact[c * dt + col] = [(c * dt + r, v) for r, v in entries]
    for lab in case_map:
        cfac.index(lab)
    return apply_local(state, full, (control,) + targets, exact)


# -- single measurements ----------------------------------------------------


def _clamp(p: float) -> float:
    if p < -CLAMP_TOL:
        raise InvariantError(f"negative probability {p:.3e}")
    return max(p, 0.0)


def born_distribution(state: StateVector, basis: ObservableBasis, tol: float = CLAMP_TOL) -> dict[str, float]:
    """Outcome probabilities; complement outcomes listed only when populated."""
    n2 = state.norm2()
    out = {}
    for lab in basis.labels:
        out[lab] = _clamp(project_component(state, basis, lab).norm2() / n2)
    for lab, _ in basis.completion:
        p = _clamp(project_component(state, basis, lab).norm2() / n2)
        if p > tol:
            out[lab] = p
    return out


def exact_born_distribution(state: StateVector, basis: ObservableBasis) -> dict[str, Fraction] | None:
    n2 = state.exact_norm2()
    if n2 is None or not n2.is_rational() or n2.is_zero():
        return None
    out = {}
    for lab in basis.labels:
        w = project_component(state, basis, lab).exact_norm2()
        if w is None or not w.is_rational():
            return None
        out[lab] = w.to_fraction() / n2.to_fraction()
    return out


def project(state: StateVector, basis: ObservableBasis, outcome: str) -> StateVector:
    """Von Neumann projection onto ``outcome``, renormalized."""
    comp = project_component(state, basis, outcome)
    p = comp.norm2() / state.norm2()
    if p <= CLAMP_TOL:
        raise BranchError(f"branch does not exist: outcome {outcome!r} of {basis.name!r} has probability {p:.3e}")
    return comp.normalized()


# -- joint distributions ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointDistribution:
    variables: tuple[str, ...]
    table: dict[tuple[str, ...], float]
    exact: dict[tuple[str, ...], Fraction] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        clean = {tuple(k): _clamp(v) for k, v in self.table.items()}
        object.__setattr__(self, "table", clean)
        if clean:
            total = sum(clean.values())
            if abs(total - 1.0) > SUM_TOL:
                raise InvariantError(f"joint distribution sums to {total!r}")
        for k in clean:
            if len(k) != len(self.variables):
                raise InvariantError(f"outcome {k} does not match variables {self.variables}")

    def __getitem__(self, outcome: Sequence[str]) -> float:
        return self.table.get(tuple(outcome), 0.0)

    def __iter__(self):
        return iter(self.table.items())

    def __len__(self) -> int:
        return len(self.table)

    def exact_value(self, outcome: Sequence[str]) -> Fraction | None:
        if self.exact is None:
            return None
        return self.exact.get(tuple(outcome), Fraction(0))

    def _as_dict(self, outcome: tuple[str, ...]) -> dict[str, str]:
        return dict(zip(self.variables, outcome))

    def _select(self, event) -> list[tuple[str, ...]]:
        if event is None:
            return list(self.table)
        if isinstance(event, Mapping):
            for v in event:
                if v not in self.variables:
                    raise ScenarioError(f"unknown variable {v!r} (known: {', '.join(self.variables)})")
            return [k for k in self.table if all(self._as_dict(k)[v] == x for v, x in event.items())]
        return [k for k in self.table if event(self._as_dict(k))]

    def probability(self, event=None) -> float:
        """``event``: a ``{variable: outcome}`` conjunction or a predicate on
        the outcome dict."""
        return float(sum(self.table[k] for k in self._select(event)))

    def exact_probability(self, event=None) -> Fraction | None:
        if self.exact is None:
            return None
        return sum((self.exact.get(k, Fraction(0)) for k in self._select(event)), Fraction(0))

    def conditional(self, event, given) -> float:
        pa = self.probability(given)
        if pa <= CLAMP_TOL:
            raise BranchError("conditioning event has zero probability")
        return self.probability(lambda o: _match(event, o) and _match(given, o)) / pa

    def marginal(self, variables: Sequence[str]) -> JointDistribution:
        variables = tuple(variables)
        pos = []
        for v in variables:
            if v not in self.variables:
                raise ScenarioError(f"unknown variable {v!r} (known: {', '.join(self.variables)})")
            pos.append(self.variables.index(v))
        table: dict[tuple[str, ...], float] = {}
        exact: dict[tuple[str, ...], Fraction] | None = {} if self.exact is not None else None
        for k, p in self.table.items():
            key = tuple(k[i] for i in pos)
            table[key] = table.get(key, 0.0) + p
            if exact is not None:
                exact[key] = exact.get(key, Fraction(0)) + self.exact.get(k, Fraction(0))
        return JointDistribution(variables, table, exact)

    def support(self, tol: float = CLAMP_TOL) -> dict[tuple[str, ...], float]:
        return {k: p for k, p in self.table.items() if p > tol}

    def max_abs_diff(self, other: JointDistribution) -> float:
        if set(self.variables) != set(other.variables):
            raise ScenarioError("distributions over different variables")
        other = other.marginal(self.variables)
        keys = set(self.table) | set(other.table)
        return max((abs(self[k] - other[k]) for k in keys), default=0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "variables": list(self.variables),
            "table": [
                {
                    "outcome": list(k),
                    "p": p,
                    "p_exact": None if self.exact is None else _frac_str(self.exact.get(k, Fraction(0))),
                }
                for k, p in self.table.items()
            ],
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("separators", (",", ":"))
        kwargs.setdefault("ensure_ascii", False)
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> JointDistribution:
        table = {tuple(row["outcome"]): float(row["p"]) for row in data["table"]}
        exact = None
        if data["table"] and all(row.get("p_exact") is not None for row in data["table"]):
            exact = {tuple(row["outcome"]): Fraction(row["p_exact"]) for row in data["table"]}
        return cls(tuple(data["variables"]), table, exact)

    def to_text(self, exact: bool = False) -> str:
        head = list(self.variables) + ["p"] + (["exact"] if exact else [])
        rows = []
        for k, p in self.table.items():
            row = list(k) + [f"{p:.12f}"]
            if exact:
                ex = self.exact_value(k)
                row.append("-" if ex is None else _frac_str(ex))
            rows.append(row)
        widths = [max(len(str(r[i])) for r in [head] + rows) for i in range(len(head))]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(head, widths)).rstrip()]
        lines += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        return "\n".join(lines)


def _match(event, outcome: Mapping[str, str]) -> bool:
    if event is None:
        return True
    if isinstance(event, Mapping):
        return all(outcome.get(v) == x for v, x in event.items())
    return bool(event(outcome))


def _frac_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


# -- protocol engine ----------------------------------------------------------


@dataclass(frozen=True)
class _Produced:
    variable: str
    step: int
    outcomes: tuple[str, ...]
    recorder: str | None = None  # set for coherent records read at snapshot time
    record_map: Mapping[str, str] | None = None  # memory label -> outcome


@dataclass
class Branch:
    """One collapse history: the outcomes fixed by projections so far and the
    unnormalized state that goes with them."""

    assignment: tuple[tuple[str, str], ...]
    state: StateVector


@dataclass
class ProtocolTrace:
    snapshots: list[JointDistribution]
    branches: list[Branch]
    produced: list[_Produced]
    selection_probability: float


def _is_zero(state: StateVector) -> bool:
    n2 = state.exact_norm2()
    if n2 is not None:
        return n2.is_zero()
    return state.norm2() <= 1e-28


def _readout(branches: list[Branch], produced: list[_Produced], total: float, total_exact: Fraction | None):
    variables = tuple(p.variable for p in produced)
    domain = set(product(*[p.outcomes for p in produced]))
    table = {k: 0.0 for k in product(*[p.outcomes for p in produced])}
    exact: dict[tuple[str, ...], Fraction] | None = None
    if total_exact is not None:
        exact = {k: Fraction(0) for k in table}
    records = [p for p in produced if p.recorder is not None]
    for br in branches:
        fixed = dict(br.assignment)
        space = br.state.space
        rec_pos = [space.position(r.recorder) for r in records]
        probs = np.moveaxis(br.state.probabilities().reshape(space.dims), rec_pos, range(len(rec_pos)))
        marg = probs.sum(axis=tuple(range(len(rec_pos), probs.ndim)))
        exact_marg: dict[tuple[int, ...], Surd] = {}
        if exact is not None and br.state.exact is None:
            exact = None
        if exact is not None:
            for idx, amp in br.state.exact.items():
                d = space.digits(idx)
                key = tuple(d[q] for q in rec_pos)
                exact_marg[key] = exact_marg.get(key, Surd(0)) + amp * amp
        for digs in product(*[range(space.dims[q]) for q in rec_pos]):
            read = {
                r.variable: r.record_map.get(space.factors[q].basis_labels[d], BLANK_OUTCOME)
                for r, q, d in zip(records, rec_pos, digs)
            }
            key = tuple(read[v.variable] if v.recorder is not None else fixed[v.variable] for v in produced)
            table[key] = table.get(key, 0.0) + float(marg[digs]) / total
            if exact is not None:
                w = exact_marg.get(digs, Surd(0))
                if w.is_rational():
                    exact[key] = exact.get(key, Fraction(0)) + w.to_fraction() / total_exact
                else:
                    exact = None
    # a blank memory read where nothing sits is not an outcome
    for key in [k for k, p in table.items() if k not in domain and p <= CLAMP_TOL]:
        del table[key]
        if exact is not None:
            exact.pop(key, None)
    return JointDistribution(variables, table, exact)


def _total(branches: list[Branch]) -> tuple[float, Fraction | None]:
    total = sum(b.state.norm2() for b in branches)
    ex = Fraction(0)
    for b in branches:
        n2 = b.state.exact_norm2()
        if n2 is None or not n2.is_rational():
            ex = None
            break
        ex += n2.to_fraction()
    return total, ex


def run_protocol(
    initial: StateVector,
    steps: Iterable[Step],
    rng: np.random.Generator | None = None,
) -> ProtocolTrace:
    """Evolve all collapse branches through ``steps``.

    Unitary steps are callables ``StateVector -> StateVector``.  With ``rng``
    a single collapse history is drawn with Born weights instead of keeping
    every branch.
    """
    branches = [Branch((), initial)]
    produced: list[_Produced] = []
    snapshots: list[JointDistribution] = []
    seen_vars: set[str] = set()
    for t, step in enumerate(steps):
        if isinstance(step, MeasurementStep):
            var = step.name
            if var in seen_vars:
                raise ScenarioError(f"variable {var!r} is produced twice")
            seen_vars.add(var)
            basis = step.basis
            if step.recorder is not None:
                branches = [Branch(b.assignment, premeasure(b.state, basis, step.recorder)) for b in branches]
            if step.recorder is not None and not step.collapse:
                mapping = recorder_labels(basis, initial, step.recorder)
                produced.append(_Produced(var, t, basis.labels, step.recorder, {m: o for o, m in mapping.items()}))
            else:
                new = []
                for b in branches:
                    for lab in basis.labels:
                        if step.selected_outcome is not None and lab != step.selected_outcome:
                            continue
                        comp = project_component(b.state, basis, lab)
                        if not _is_zero(comp):
                            new.append(Branch(b.assignment + ((var, lab),), comp))
                    for lab, _ in basis.completion:
                        comp = project_component(b.state, basis, lab)
                        if comp.norm2() > PERP_TOL * max(b.state.norm2(), 1e-300):
                            raise InvariantError(
                                f"complement outcome {lab} of basis {basis.name!r} is populated "
                                f"(weight {comp.norm2():.3e})"
                            )
                if not new:
                    raise BranchError(
                        f"branch does not exist: {step.selected_outcome!r} of {basis.name!r} has probability 0"
                    )
                if rng is not None and len(new) > 1:
                    w = np.array([b.state.norm2() for b in new])
                    k = int(rng.choice(len(new), p=w / w.sum()))
                    new = [Branch(new[k].assignment, new[k].state.normalized())]
                branches = new
                produced.append(_Produced(var, t, basis.labels))
        else:
            branches = [Branch(b.assignment, step(b.state)) for b in branches]
        total, total_exact = _total(branches)
        if total <= CLAMP_TOL:
            raise BranchError("postselected branch does not exist")
        snapshots.append(_readout(branches, produced, total, total_exact))
    if not snapshots:
        snapshots.append(JointDistribution((), {(): 1.0}, {(): Fraction(1)}))
    total, _ = _total(branches)
    init_n2 = initial.norm2()
    return ProtocolTrace(snapshots, branches, produced, total / init_n2)


def sequential_joint_distribution(initial: StateVector, steps: Iterable[Step]) -> JointDistribution:
    return run_protocol(initial, steps).snapshots[-1]


def joint_snapshots(initial: StateVector, steps: Iterable[Step]) -> list[JointDistribution]:
    """Joint distribution of the variables produced so far, after each step."""
    return run_protocol(initial, steps).snapshots


def enumerate_branches(initial: StateVector, steps: Sequence[Step]) -> JointDistribution:
    """Brute-force reference for :func:`sequential_joint_distribution`.

    Walks every collapse path with renormalized states, multiplying the
    conditional Born weights along the way, and reads coherent records at
    the end from their computational distribution.
    """
    steps = list(steps)
    variables: list[str] = []
    records: list[tuple[str, str, dict[str, str]]] = []
    for s in steps:
        if isinstance(s, MeasurementStep):
            variables.append(s.name)
            if s.recorder is not None and not s.collapse:
                mapping = recorder_labels(s.basis, initial, s.recorder)
                records.append((s.name, s.recorder, {m: o for o, m in mapping.items()}))

    acc: dict[tuple[str, ...], float] = {}

    def walk(i: int, state: StateVector, weight: float, fixed: dict[str, str]) -> None:
        if i == len(steps):
            # joint computational readout of all coherent records, index by index
            probs = state.probabilities()
            space = state.space
            for idx in range(space.dimension):
                q = float(probs[idx])
                if q == 0.0:
                    continue
                labels = dict(zip(space.labels, space.labels_of(idx)))
                vals = dict(fixed)
                for var, rec, back in records:
                    vals[var] = back.get(labels[rec], BLANK_OUTCOME)
                key = tuple(vals[v] for v in variables)
                acc[key] = acc.get(key, 0.0) + weight * q
            return
        s = steps[i]
        if not isinstance(s, MeasurementStep):
            walk(i + 1, s(state), weight, fixed)
            return
        if s.recorder is not None:
            state = premeasure(state, s.basis, s.recorder)
        if s.recorder is not None and not s.collapse:
            walk(i + 1, state, weight, fixed)
            return
        for lab, p in born_distribution(state, s.basis).items():
            if p <= CLAMP_TOL:
                continue
            if s.selected_outcome is not None and lab != s.selected_outcome:
                continue
            walk(i + 1, project(state, s.basis, lab), weight * p, {**fixed, s.name: lab})

    walk(0, initial.normalized(), 1.0, {})
    total = sum(acc.values())
    if total <= CLAMP_TOL:
        raise BranchError("postselected branch does not exist")
    return JointDistribution(tuple(variables), {k: v / total for k, v in acc.items()})
