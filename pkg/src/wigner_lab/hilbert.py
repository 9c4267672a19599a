"""Labeled tensor-product spaces and pure states.

Amplitudes are double-precision complex numbers.  When every coefficient
that went into a state was of closed form (see :mod:`wigner_lab.exact`) the
state also carries an exact sparse copy, evolved by separate code, so that
Born weights can be reported as exact rationals.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import NonOrthonormalBasisError, NonUnitaryError, SpaceError, ZeroVectorError
from .exact import Surd

NORM_TOL = 1e-10

ExactVector = dict[int, Surd]
ExactMatrix = dict[int, list[tuple[int, Surd]]]  # column -> [(row, entry)]


@dataclass(frozen=True)
class FactorSpace:
    label: str
    basis_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "basis_labels", tuple(self.basis_labels))
        if len(self.basis_labels) < 2:
            raise SpaceError(f"factor {self.label!r} needs at least 2 basis labels")
        if len(set(self.basis_labels)) != len(self.basis_labels):
            raise SpaceError(f"factor {self.label!r} has duplicate basis labels")

    @property
    def dim(self) -> int:
        return len(self.basis_labels)

    @property
    def blank(self) -> str:
        """First label; agent memories use it for the pre-measurement state."""
        return self.basis_labels[0]

    def index(self, label: str) -> int:
        try:
            return self.basis_labels.index(label)
        except ValueError:
            raise SpaceError(
                f"factor {self.label!r} has no basis label {label!r} "
                f"(expected one of {', '.join(self.basis_labels)})"
            ) from None


@dataclass(frozen=True)
class ProductSpace:
    factors: tuple[FactorSpace, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        seen = set()
        for f in self.factors:
            if f.label in seen:
                raise SpaceError(f"duplicate factor label {f.label!r}")
            seen.add(f.label)
        if not self.factors:
            raise SpaceError("a product space needs at least one factor")

    @cached_property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dimension(self) -> int:
        return math.prod(self.dims)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @cached_property
    def strides(self) -> tuple[int, ...]:
        out, acc = [], 1
        for d in reversed(self.dims):
            out.append(acc)
            acc *= d
        return tuple(reversed(out))

    @cached_property
    def _positions(self) -> dict[str, int]:
        return {f.label: i for i, f in enumerate(self.factors)}

    def position(self, label: str) -> int:
        try:
            return self._positions[label]
        except KeyError:
            raise SpaceError(f"no factor named {label!r}") from None

    def factor(self, label: str) -> FactorSpace:
        return self.factors[self.position(label)]

    def digits(self, index: int) -> tuple[int, ...]:
        return tuple((index // s) % d for s, d in zip(self.strides, self.dims))

    def index_of_digits(self, digits: Sequence[int]) -> int:
        return sum(d * s for d, s in zip(digits, self.strides))

    def index(self, labels: Sequence[str] | Mapping[str, str]) -> int:
        """Basis index of a full label tuple, or of a factor->label mapping
        (unmentioned factors sit at their first label)."""
        if isinstance(labels, Mapping):
            for name in labels:
                self.position(name)
            digits = [f.index(labels[f.label]) if f.label in labels else 0 for f in self.factors]
        else:
            labels = tuple(labels)
            if len(labels) != len(self.factors):
                raise SpaceError(f"expected {len(self.factors)} labels, got {len(labels)}")
            digits = [f.index(lab) for f, lab in zip(self.factors, labels)]
        return self.index_of_digits(digits)

    def labels_of(self, index: int) -> tuple[str, ...]:
        return tuple(f.basis_labels[d] for f, d in zip(self.factors, self.digits(index)))


def make_product_space(factors: Iterable[FactorSpace]) -> ProductSpace:
    return ProductSpace(tuple(factors))


@dataclass(frozen=True, eq=False)
class StateVector:
    space: ProductSpace
    amplitudes: np.ndarray
    exact: Mapping[int, Surd] | None = field(default=None, repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.dimension:
            raise SpaceError(f"amplitude vector has length {amps.shape[0]}, space has {self.space.dimension}")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        if self.exact is not None:
            object.__setattr__(self, "exact", {i: a for i, a in self.exact.items() if not a.is_zero()})

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def exact_norm2(self) -> Surd | None:
        if self.exact is None:
            return None
        return sum((a * a for a in self.exact.values()), Surd(0))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm2() - 1.0) <= tol

    def normalized(self) -> StateVector:
        n2 = self.norm2()
        if n2 <= 1e-30:
            raise ZeroVectorError("cannot normalize the zero vector")
        exact = None
        en2 = self.exact_norm2()
        if en2 is not None and en2.is_rational() and not en2.is_zero():
            scale = Surd.sqrt(en2.to_fraction()).inverse()
            exact = {i: a * scale for i, a in self.exact.items()}
        return StateVector(self.space, self.amplitudes / math.sqrt(n2), exact)

    def scaled(self, c: complex | Surd) -> StateVector:
        if isinstance(c, Surd):
            exact = None if self.exact is None else {i: a * c for i, a in self.exact.items()}
            return StateVector(self.space, self.amplitudes * float(c), exact)
        return StateVector(self.space, self.amplitudes * c, None)

    def __add__(self, other: StateVector) -> StateVector:
        _same_space(self, other)
        exact = None
        if self.exact is not None and other.exact is not None:
            exact = dict(self.exact)
            for i, a in other.exact.items():
                exact[i] = exact[i] + a if i in exact else a
        return StateVector(self.space, self.amplitudes + other.amplitudes, exact)

    def amplitude(self, labels: Sequence[str] | Mapping[str, str]) -> complex:
        return complex(self.amplitudes[self.space.index(labels)])

    def support(self, tol: float = 1e-12) -> list[int]:
        return [int(i) for i in np.flatnonzero(np.abs(self.amplitudes) ** 2 > tol)]

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def factor_distribution(self, label: str) -> dict[str, float]:
        """Marginal distribution of one factor's computational labels."""
        pos = self.space.position(label)
        probs = self.probabilities().reshape(self.space.dims)
        axes = tuple(i for i in range(len(self.space.dims)) if i != pos)
        marg = probs.sum(axis=axes)
        return dict(zip(self.space.factors[pos].basis_labels, (float(p) for p in marg)))

    def dump(self, tol: float = 1e-12) -> str:
        return dump_state(self, tol)


def _same_space(a: StateVector, b: StateVector) -> None:
    if a.space != b.space:
        raise SpaceError("states live in different spaces")


def basis_state(space: ProductSpace, labels: Sequence[str] | Mapping[str, str]) -> StateVector:
    idx = space.index(labels)
    amps = np.zeros(space.dimension, dtype=complex)
    amps[idx] = 1.0
    return StateVector(space, amps, {idx: Surd(1)})


def _as_exact(c) -> Surd | None:
    if isinstance(c, Surd):
        return c
    if isinstance(c, (int, Fraction)) and not isinstance(c, bool):
        return Surd(c)
    return None


def superpose(space: ProductSpace, terms: Iterable[tuple[object, Sequence[str] | Mapping[str, str]]]) -> StateVector:
    """Normalized linear combination of basis kets.

    Coefficients may be :class:`Surd`, int, Fraction (exact) or any complex
    number (the result then carries no exact copy).
    """
    amps = np.zeros(space.dimension, dtype=complex)
    exact: dict[int, Surd] | None = {}
    for coef, labels in terms:
        idx = space.index(labels)
        ex = _as_exact(coef)
        amps[idx] += float(ex) if ex is not None else complex(coef)
        if ex is None:
            exact = None
        elif exact is not None:
            exact[idx] = exact[idx] + ex if idx in exact else ex
    state = StateVector(space, amps, exact)
    en2 = state.exact_norm2()
    if (en2 is not None and en2.is_zero()) or (en2 is None and state.norm2() <= 1e-24):
        raise ZeroVectorError("superposition is the zero vector")
    return state.normalized()


# -- local operators --------------------------------------------------------


def target_axes(space: ProductSpace, targets: Sequence[str]) -> tuple[int, ...]:
    axes = tuple(space.position(t) for t in targets)
    if len(set(axes)) != len(axes):
        raise SpaceError(f"repeated target factor in {list(targets)}")
    return axes


def apply_local(
    state: StateVector,
    matrix: np.ndarray,
    targets: Sequence[str],
    exact: ExactMatrix | None = None,
) -> StateVector:
    """Apply ``matrix`` to the listed factors (identity elsewhere).

    No unitarity check: projectors go through here too.  The target-local
    index is mixed radix in the order of ``targets``.
    """
    space = state.space
    axes = target_axes(space, targets)
    tdims = [space.dims[a] for a in axes]
    d = math.prod(tdims)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (d, d):
        raise SpaceError(f"operator shape {matrix.shape} does not match target dimension {d}")

    t = state.amplitudes.reshape(space.dims)
    t = np.moveaxis(t, axes, range(len(axes)))
    shape = t.shape
    t = (matrix @ t.reshape(d, -1)).reshape(shape)
    amps = np.moveaxis(t, range(len(axes)), axes).reshape(-1)

    new_exact = None
    if exact is not None and state.exact is not None:
        new_exact = {}
        strides = space.strides
        lstrides = [math.prod(tdims[k + 1:]) for k in range(len(tdims))]
        for idx, amp in state.exact.items():
            digits = space.digits(idx)
            col = sum(digits[a] * ls for a, ls in zip(axes, lstrides))
            base = idx - sum(digits[a] * strides[a] for a in axes)
            for row, entry in exact.get(col, ()):
                new_idx = base + sum(((row // ls) % td) * strides[a] for a, ls, td in zip(axes, lstrides, tdims))
                v = amp * entry
                new_exact[new_idx] = new_exact[new_idx] + v if new_idx in new_exact else v
    return StateVector(space, amps, new_exact)


def exact_matrix_from_columns(columns: Sequence[Mapping[int, Surd]]) -> ExactMatrix:
    return {j: sorted(col.items()) for j, col in enumerate(columns)}


def dense_exact(matrix: ExactMatrix, d: int) -> np.ndarray:
    out = np.zeros((d, d), dtype=complex)
    for col, entries in matrix.items():
        for row, v in entries:
            out[row, col] = float(v)
    return out


def unitarity_deviation(matrix: np.ndarray) -> float:
    m = np.asarray(matrix, dtype=complex)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def apply_unitary(
    state: StateVector,
    matrix: np.ndarray,
    targets: Sequence[str],
    exact: ExactMatrix | None = None,
) -> StateVector:
    dev = unitarity_deviation(matrix)
    if dev > NORM_TOL:
        raise NonUnitaryError(dev)
    return apply_local(state, matrix, targets, exact)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>, antilinear in the first argument."""
    _same_space(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def exact_inner_product(a: StateVector, b: StateVector) -> Surd | None:
    _same_space(a, b)
    if a.exact is None or b.exact is None:
        return None
    return sum((v * b.exact[i] for i, v in a.exact.items() if i in b.exact), Surd(0))


# -- observable bases -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObservableBasis:
    """Orthonormal outcome vectors on a subset of factors.

    ``vectors[k]`` is the outcome-``k`` ket on the target subspace, indexed
    mixed radix in ``factors`` order.  A basis may be incomplete; the
    orthogonal complement is exposed through :meth:`completion` with
    outcome labels ``⊥0, ⊥1, ...``.
    """

    name: str
    factors: tuple[FactorSpace, ...]
    labels: tuple[str, ...]
    vectors: np.ndarray
    exact: tuple[ExactVector, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "labels", tuple(self.labels))
        vecs = np.atleast_2d(np.asarray(self.vectors, dtype=complex)).copy()
        vecs.flags.writeable = False
        object.__setattr__(self, "vectors", vecs)
        if len(set(self.labels)) != len(self.labels):
            raise SpaceError(f"basis {self.name!r} has duplicate outcome labels")
        if vecs.shape != (len(self.labels), self.dim):
            raise SpaceError(
                f"basis {self.name!r}: expected {len(self.labels)} vectors of length {self.dim}, got {vecs.shape}"
            )
        if len({f.label for f in self.factors}) != len(self.factors):
            raise SpaceError(f"basis {self.name!r} repeats a target factor")
        self._check_orthonormal()

    def _check_orthonormal(self) -> None:
        gram = self.vectors.conj() @ self.vectors.T
        for i in range(len(self.labels)):
            for j in range(i, len(self.labels)):
                want = 1.0 if i == j else 0.0
                if abs(gram[i, j] - want) > NORM_TOL:
                    if i == j and abs(gram[i, i]) <= 1e-24:
                        raise ZeroVectorError(f"basis {self.name!r}: outcome {self.labels[i]!r} is the zero vector")
                    raise NonOrthonormalBasisError(self.name, self.labels[i], self.labels[j], complex(gram[i, j]))

    @classmethod
    def from_exact(
        cls, name: str, factors: Sequence[FactorSpace], outcomes: Sequence[tuple[str, Mapping[int, Surd]]]
    ) -> ObservableBasis:
        d = math.prod(f.dim for f in factors)
        vecs = np.zeros((len(outcomes), d), dtype=complex)
        exact = []
        for k, (_, vec) in enumerate(outcomes):
            clean = {i: v for i, v in vec.items() if not v.is_zero()}
            for i, v in clean.items():
                vecs[k, i] = float(v)
            exact.append(clean)
        return cls(name, tuple(factors), tuple(lab for lab, _ in outcomes), vecs, tuple(exact))

    @classmethod
    def computational(cls, factor: FactorSpace, name: str | None = None, labels: Sequence[str] | None = None) -> ObservableBasis:
        """Computational basis of one factor; ``labels`` renames outcomes."""
        labels = tuple(labels) if labels is not None else factor.basis_labels
        return cls.from_exact(
            name or f"{factor.label}_z", (factor,), [(lab, {i: Surd(1)}) for i, lab in enumerate(labels)]
        )

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @property
    def dim(self) -> int:
        return math.prod(f.dim for f in self.factors)

    @property
    def is_complete(self) -> bool:
        return len(self.labels) == self.dim

    def local_index(self, labels: Sequence[str] | Mapping[str, str]) -> int:
        if isinstance(labels, Mapping):
            labels = [labels[f.label] for f in self.factors]
        idx = 0
        for f, lab in zip(self.factors, labels):
            idx = idx * f.dim + f.index(lab)
        return idx

    @cached_property
    def completion(self) -> tuple[tuple[str, np.ndarray], ...]:
        """Orthonormal basis of the complement, labeled ``⊥k``."""
        if self.is_complete:
            return ()
        proj = np.eye(self.dim) - self.vectors.T @ self.vectors.conj()
        u, s, _ = np.linalg.svd(proj)
        rank = self.dim - len(self.labels)
        return tuple((f"⊥{k}", u[:, k].copy()) for k in range(rank))

    @property
    def all_labels(self) -> tuple[str, ...]:
        return self.labels + tuple(lab for lab, _ in self.completion)

    def index_of(self, outcome: str) -> int:
        try:
            return self.labels.index(outcome)
        except ValueError:
            raise SpaceError(
                f"basis {self.name!r} has no outcome {outcome!r} (outcomes: {', '.join(self.labels)})"
            ) from None

    def vector(self, outcome: str) -> np.ndarray:
        if outcome in self.labels:
            return self.vectors[self.labels.index(outcome)]
        for lab, vec in self.completion:
            if lab == outcome:
                return vec
        self.index_of(outcome)
        raise AssertionError  # unreachable

    def projector(self, outcome: str) -> np.ndarray:
        v = self.vector(outcome)
        return np.outer(v, v.conj())

    def exact_projector(self, outcome: str) -> ExactMatrix | None:
        if self.exact is None or outcome not in self.labels:
            return None
        vec = self.exact[self.labels.index(outcome)]
        return {c: sorted((r, vr * vc) for r, vr in vec.items()) for c, vc in vec.items()}

    def exact_complement_projector(self) -> ExactMatrix | None:
        """I minus the sum of declared projectors (real exact vectors)."""
        if self.exact is None:
            return None
        acc: dict[tuple[int, int], Surd] = {(i, i): Surd(1) for i in range(self.dim)}
        for vec in self.exact:
            for r, vr in vec.items():
                for c, vc in vec.items():
                    acc[r, c] = acc.get((r, c), Surd(0)) - vr * vc
        out: ExactMatrix = {}
        for (r, c), v in sorted(acc.items()):
            if not v.is_zero():
                out.setdefault(c, []).append((r, v))
        return out

    def tensor(self, other: ObservableBasis, name: str | None = None) -> ObservableBasis:
        """Product basis; outcome labels are joined with ``,``."""
        labels = tuple(f"{a},{b}" for a in self.labels for b in other.labels)
        vecs = np.array([np.kron(a, b) for a in self.vectors for b in other.vectors])
        exact = None
        if self.exact is not None and other.exact is not None:
            exact = tuple(
                {i * other.dim + j: vi * vj for i, vi in a.items() for j, vj in b.items()}
                for a in self.exact
                for b in other.exact
            )
        return ObservableBasis(name or f"{self.name}⊗{other.name}", self.factors + other.factors, labels, vecs, exact)

    def as_unitary(self) -> tuple[np.ndarray, ExactMatrix | None]:
        """Unitary sending the j-th computational ket of the targets to outcome j."""
        if not self.is_complete:
            raise SpaceError(f"basis {self.name!r} is incomplete and cannot define a unitary")
        exact = None if self.exact is None else exact_matrix_from_columns(self.exact)
        return self.vectors.T.copy(), exact


class Component(NamedTuple):
    outcome: str
    component: StateVector
    norm: float
    exact_weight: Fraction | None

    @property
    def weight(self) -> float:
        return self.norm**2


def project_component(state: StateVector, basis: ObservableBasis, outcome: str) -> StateVector:
    """Unnormalized P_outcome |state>."""
    return apply_local(state, basis.projector(outcome), basis.targets, basis.exact_projector(outcome))


def _exact_fraction(s: StateVector) -> Fraction | None:
    n2 = s.exact_norm2()
    if n2 is None or not n2.is_rational():
        return None
    return n2.to_fraction()


def expand_in_basis(state: StateVector, basis: ObservableBasis, tol: float = 1e-12) -> list[Component]:
    """Split ``state`` into its components along ``basis``.

    Declared outcomes are always listed; complement outcomes only when their
    weight exceeds ``tol``.
    """
    out = []
    for lab in basis.labels:
        comp = project_component(state, basis, lab)
        out.append(Component(lab, comp, comp.norm(), _exact_fraction(comp)))
    for lab, _ in basis.completion:
        comp = project_component(state, basis, lab)
        if comp.norm2() > tol:
            out.append(Component(lab, comp, comp.norm(), None))
    return out


def computational_basis(space: ProductSpace) -> ObservableBasis:
    """Full computational basis of ``space``; outcome labels use ``⊗``."""
    labels = ["⊗".join(space.labels_of(i)) for i in range(space.dimension)]
    return ObservableBasis.from_exact("computational", space.factors, [(lab, {i: Surd(1)}) for i, lab in enumerate(labels)])


def _fmt_float(x: float) -> str:
    if abs(x) < 5e-17:
        x = 0.0
    return f"{x:+.15f}"


def dump_state(state: StateVector, tol: float = 1e-12) -> str:
    lines = []
    for idx in range(state.space.dimension):
        amp = state.amplitudes[idx]
        if abs(amp) ** 2 <= tol:
            continue
        line = f"{'⊗'.join(state.space.labels_of(idx))} {_fmt_float(amp.real)} {_fmt_float(amp.imag)}"
        if state.exact is not None:
            line += f" [{state.exact.get(idx, Surd(0))}]"
        lines.append(line)
    return "\n".join(lines)
