"""Collapse-everywhere policy and a pointer-configuration (beable) sampler.

The sampler keeps one definite computational-basis label per factor and
moves it from step to step with a Markov kernel whose output marginal is the
Born distribution of the next uncollapsed state.  A kernel only moves the
factors the step acts on, conditioned on the rest, so a measurement never
rewrites a lab it does not touch.  It can still rewrite the lab it does
touch: after Wbar's coherent measurement Fbar's record reads heads half the
time, even on runs where it read tails just before.
"""

from __future__ import annotations

import io
import json
import math
import os
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Any

import numpy as np

from .errors import ScenarioError
from .hilbert import NORM_TOL, StateVector
from .measurement import MeasurementStep, premeasure, project
from .scenarios import ControlledStep, Scenario, UnitaryStep, _step_factors

SEED_ENV = "WIGNER_LAB_SEED"
SUPPORT_TOL = 1e-12


class KernelKind(str, Enum):
    INDEPENDENT_RESAMPLE = "INDEPENDENT_RESAMPLE"
    MINIMAL_TRANSPORT = "MINIMAL_TRANSPORT"

    @classmethod
    def parse(cls, text: str | KernelKind) -> KernelKind:
        if isinstance(text, KernelKind):
            return text
        aliases = {"independent": cls.INDEPENDENT_RESAMPLE, "minimal": cls.MINIMAL_TRANSPORT}
        try:
            return aliases.get(text.lower()) or cls(text.upper())
        except ValueError:
            raise ScenarioError(f"unknown kernel {text!r} (use independent or minimal)") from None


# -- collapse everywhere -----------------------------------------------------


def grw_scenario(base: Scenario) -> Scenario:
    """Every agent measurement reduces the state at the moment it happens."""
    steps = tuple(
        s.replace(collapse=True) if isinstance(s, MeasurementStep) and s.recorder is not None and not s.collapse else s
        for s in base.steps
    )
    if all(a is b for a, b in zip(steps, base.steps)):
        return base
    name = base.name if base.name.endswith("[grw]") else f"{base.name} [grw]"
    return base.with_steps(steps, name)


# -- kernels -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransportKernel:
    """``table[i, j]`` = probability of moving from ``keys[i]`` to ``keys[j]``."""

    kind: KernelKind
    keys: tuple[Hashable, ...]
    pre: np.ndarray
    post: np.ndarray
    table: np.ndarray

    def row(self, key: Hashable) -> dict[Hashable, float]:
        i = self.keys.index(key)
        return {k: float(v) for k, v in zip(self.keys, self.table[i]) if v > 0}

    def pushforward(self) -> np.ndarray:
        return self.pre @ self.table

    def marginal_error(self) -> float:
        return float(np.max(np.abs(self.pushforward() - self.post), initial=0.0))

    def stay_probability(self) -> float:
        return float(self.pre @ np.diag(self.table))

    def change_probability(self, same) -> float:
        """Probability that a move lands on a key with ``same(old, new)`` false."""
        mask = np.array([[not same(a, b) for b in self.keys] for a in self.keys], dtype=float)
        return float(self.pre @ (self.table * mask).sum(axis=1))


def _normalized(dist: Mapping[Hashable, float], what: str) -> None:
    vals = np.fromiter(dist.values(), dtype=float, count=len(dist))
    if np.any(vals < -SUPPORT_TOL):
        raise ScenarioError(f"{what} distribution has a negative entry")
    if abs(vals.sum() - 1.0) > NORM_TOL:
        raise ScenarioError(f"{what} distribution sums to {vals.sum():.12g}, not 1")


def build_kernel(
    pre: Mapping[Hashable, float], post: Mapping[Hashable, float], kind: KernelKind | str
) -> TransportKernel:
    """Markov kernel carrying ``pre`` onto ``post``.

    MINIMAL_TRANSPORT keeps ``min(p_i, q_i)`` in place and spreads each
    row's excess over the deficits in proportion to their size, which
    maximizes the staying mass.  INDEPENDENT_RESAMPLE ignores the origin.
    Rows of zero-probability origins are set to ``post``.
    """
    kind = KernelKind.parse(kind)
    _normalized(pre, "pre")
    _normalized(post, "post")
    keys = tuple(dict.fromkeys([*pre, *post]))
    p = np.array([max(pre.get(k, 0.0), 0.0) for k in keys])
    q = np.array([max(post.get(k, 0.0), 0.0) for k in keys])
    table = np.tile(q, (len(keys), 1))
    if kind is KernelKind.MINIMAL_TRANSPORT:
        stay = np.minimum(p, q)
        deficit = q - stay
        total = deficit.sum()
        live = p > 0
        frac = np.divide(stay, p, out=np.zeros_like(p), where=live)
        spread = deficit / total if total > 0 else np.zeros_like(q)
        moving = np.outer(1.0 - frac, spread) + np.diag(frac)
        table[live] = moving[live]
    return TransportKernel(kind, keys, p, q, table)


# -- sampler -----------------------------------------------------------------


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ScenarioError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _advance(state: StateVector, step) -> StateVector:
    if not isinstance(step, MeasurementStep):
        return step(state)
    if step.recorder is not None:
        state = premeasure(state, step.basis, step.recorder)
    if step.collapse:
        if step.selected_outcome is None:
            raise ScenarioError(
                f"step {step.name!r} collapses without a selected outcome; the sampler rides on a "
                "single uncollapsed state (postselect the outcome or drop the collapse)"
            )
        state = project(state, step.basis, step.selected_outcome)
    return state


def _touched(step, space) -> tuple[int, ...]:
    if isinstance(step, (MeasurementStep, ControlledStep, UnitaryStep)):
        return tuple(sorted(space.position(f) for f in _step_factors(step)))
    return tuple(range(len(space.factors)))


def _support(probs: np.ndarray) -> dict[int, float]:
    idx = np.flatnonzero(probs > SUPPORT_TOL)
    w = probs[idx]
    w = w / w.sum()
    return {int(i): float(x) for i, x in zip(idx, w)}


def step_kernel(
    space, pre: Mapping[int, float], post: Mapping[int, float], touched: Sequence[int], kind: KernelKind
) -> TransportKernel:
    """Kernel over full configuration indices that moves only ``touched``
    factors, conditioned on the others.  Falls back to one global kernel when
    the step changes the statistics of the untouched factors (postselection
    can)."""
    rest = [k for k in range(len(space.factors)) if k not in touched]

    def outside(i: int) -> tuple[int, ...]:
        d = space.digits(i)
        return tuple(d[k] for k in rest)

    groups_pre: dict[tuple, dict[int, float]] = {}
    groups_post: dict[tuple, dict[int, float]] = {}
    for i, p in pre.items():
        groups_pre.setdefault(outside(i), {})[i] = p
    for j, q in post.items():
        groups_post.setdefault(outside(j), {})[j] = q
    mass_pre = {c: sum(g.values()) for c, g in groups_pre.items()}
    mass_post = {c: sum(g.values()) for c, g in groups_post.items()}
    local = set(mass_pre) == set(mass_post) and all(
        abs(mass_pre[c] - mass_post[c]) <= NORM_TOL for c in mass_pre
    )
    if not local:
        return build_kernel(pre, post, kind)
    keys = tuple(dict.fromkeys([*pre, *post]))
    pos = {k: n for n, k in enumerate(keys)}
    table = np.zeros((len(keys), len(keys)))
    for c, gp in groups_pre.items():
        m = mass_pre[c]
        sub = build_kernel(
            {i: v / m for i, v in gp.items()},
            {j: v / mass_post[c] for j, v in groups_post[c].items()},
            kind,
        )
        rows = [pos[k] for k in sub.keys]
        table[np.ix_(rows, rows)] = sub.table
    q = np.array([post.get(k, 0.0) for k in keys])
    for n, k in enumerate(keys):
        if k not in pre:
            table[n] = q
    p = np.array([pre.get(k, 0.0) for k in keys])
    return TransportKernel(kind, keys, p, q, table)


@dataclass
class SampleResult:
    scenario: Scenario
    kind: KernelKind
    seed: int
    step_names: tuple[str, ...]
    paths: np.ndarray  # (n, steps + 1) configuration indices; column 0 is the preparation
    born: list[dict[int, float]]
    kernels: list[TransportKernel]
    flip_statistics: dict[str, Any] = field(default_factory=dict)
    marginal_checks: list[dict[str, Any]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.paths.shape[0]

    def config(self, index: int) -> dict[str, str]:
        space = self.scenario.space
        return dict(zip(space.labels, space.labels_of(int(index))))

    def trajectory(self, t: int) -> list[tuple[int, dict[str, str]]]:
        return [(s, self.config(i)) for s, i in enumerate(self.paths[t])]

    def factor_labels(self, factor: str) -> np.ndarray:
        """Label index of ``factor`` for every trajectory and time, shape ``(n, steps + 1)``."""
        space = self.scenario.space
        return (self.paths // space.strides[space.position(factor)]) % space.factor(factor).dim

    def write_jsonl(self, out: IO[str]) -> None:
        cache: dict[int, str] = {}
        for t in range(self.n):
            parts = []
            for s, i in enumerate(self.paths[t]):
                i = int(i)
                if i not in cache:
                    cache[i] = json.dumps(self.config(i), ensure_ascii=False, separators=(",", ":"))
                parts.append(f"[{s},{cache[i]}]")
            out.write(f'{{"id":{t},"path":[{",".join(parts)}]}}\n')

    def jsonl(self) -> str:
        buf = io.StringIO()
        self.write_jsonl(buf)
        return buf.getvalue()

    def summary(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.name,
            "kernel": self.kind.value,
            "seed": self.seed,
            "n": self.n,
            "steps": list(self.step_names),
            "flip_statistics": self.flip_statistics,
            "marginal_checks": self.marginal_checks,
            "marginals_ok": all(c["ok"] for c in self.marginal_checks),
        }


def _uniforms(seed: int, start: int, count: int, per: int) -> np.ndarray:
    """Uniforms for trajectories ``start .. start+count-1``, ``per`` each.

    Trajectory ``t`` owns Philox counter block ``[t*stride, (t+1)*stride)``
    (four doubles per counter step), so any split of the trajectory range
    over workers reproduces the same numbers.
    """
    stride = -(-per // 4)
    bitgen = np.random.Philox(key=seed).advance(stride * start)
    u = np.random.Generator(bitgen).random(count * stride * 4)
    return u.reshape(count, stride * 4)[:, :per]


def _draw(cdf: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    c = cdf[rows]
    out = (c < u[:, None]).sum(axis=1)
    return np.minimum(out, cdf.shape[1] - 1)


def sample_trajectories(
    scenario: Scenario,
    kind: KernelKind | str = KernelKind.MINIMAL_TRANSPORT,
    n: int = 10_000,
    seed: int | None = None,
    start: int = 0,
) -> SampleResult:
    """Draw ``n`` pointer trajectories riding on the scenario's state.

    A flip is a change of a factor's label away from a non-blank value; an
    agent memory leaving its blank label is a record being written, not a
    flip.
    """
    kind = KernelKind.parse(kind)
    if n <= 0:
        raise ScenarioError("n must be positive")
    seed = default_seed() if seed is None else int(seed)
    space = scenario.space
    state = scenario.preparation.normalized()
    born = [_support(state.probabilities())]
    kernels = []
    names = []
    for i, step in enumerate(scenario.steps):
        state = _advance(state, step)
        born.append(_support(state.probabilities()))
        kernels.append(step_kernel(space, born[-2], born[-1], _touched(step, space), kind))
        names.append(getattr(step, "name", f"step{i}") or f"step{i}")

    u = _uniforms(seed, start, n, len(scenario.steps) + 1)
    paths = np.empty((n, len(scenario.steps) + 1), dtype=np.int64)
    init_keys = np.array(list(born[0]), dtype=np.int64)
    init_cdf = np.cumsum(np.array(list(born[0].values())))[None, :]
    paths[:, 0] = init_keys[_draw(init_cdf, np.zeros(n, dtype=np.int64), u[:, 0])]
    for s, ker in enumerate(kernels):
        keys = np.array(ker.keys, dtype=np.int64)
        where = {int(k): r for r, k in enumerate(keys)}
        rows = np.array([where[int(k)] for k in paths[:, s]], dtype=np.int64)
        paths[:, s + 1] = keys[_draw(np.cumsum(ker.table, axis=1), rows, u[:, s + 1])]

    result = SampleResult(scenario, kind, seed, tuple(names), paths, born, kernels)
    result.flip_statistics = _flip_statistics(result)
    result.marginal_checks = _marginal_checks(result)
    return result


def _flip_statistics(res: SampleResult) -> dict[str, Any]:
    space = res.scenario.space
    recorders = set(res.scenario.recorders)
    per_factor = {}
    for pos, fac in enumerate(space.factors):
        labs = res.factor_labels(fac.label)
        prev, nxt = labs[:, :-1], labs[:, 1:]
        moved = prev != nxt
        if fac.label in recorders:
            moved &= prev != 0
        by_step = moved.mean(axis=0)
        bound = {}
        for s in range(len(res.kernels)):
            before = _factor_marginal(space, res.born[s], pos)
            # writing a record is not a flip, so the bound only applies once it is written
            if fac.label in recorders and before[fac.blank] > SUPPORT_TOL:
                continue
            bound[res.step_names[s]] = _tv(before, _factor_marginal(space, res.born[s + 1], pos))
        exact = [
            res.kernels[s].change_probability(
                lambda a, b, pos=pos, rec=fac.label in recorders: _same_label(space, pos, a, b, rec)
            )
            for s in range(len(res.kernels))
        ]
        per_factor[fac.label] = {
            "by_step": {res.step_names[s]: float(by_step[s]) for s in range(len(by_step))},
            "kernel_by_step": {res.step_names[s]: exact[s] for s in range(len(exact))},
            "tv_lower_bound": bound,
            "ever": float(moved.any(axis=1).mean()),
        }
    return per_factor


def _same_label(space, pos: int, a: int, b: int, recorder: bool) -> bool:
    la, lb = space.digits(a)[pos], space.digits(b)[pos]
    return la == lb or (recorder and la == 0)


def _factor_marginal(space, dist: Mapping[int, float], pos: int) -> dict[str, float]:
    fac = space.factors[pos]
    out = dict.fromkeys(fac.basis_labels, 0.0)
    for i, p in dist.items():
        out[fac.basis_labels[space.digits(i)[pos]]] += p
    return out


def _tv(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def _marginal_checks(res: SampleResult) -> list[dict[str, Any]]:
    space = res.scenario.space
    tol = 4.0 / math.sqrt(res.n)
    out = []
    for pos, fac in enumerate(space.factors):
        labs = res.factor_labels(fac.label)
        for s in range(labs.shape[1]):
            born = _factor_marginal(space, res.born[s], pos)
            counts = np.bincount(labs[:, s], minlength=fac.dim) / res.n
            dev = max(abs(counts[k] - born[lab]) for k, lab in enumerate(fac.basis_labels))
            out.append(
                {
                    "factor": fac.label,
                    "step": s,
                    "max_deviation": float(dev),
                    "tolerance": tol,
                    "ok": bool(dev <= tol),
                }
            )
    return out


def flip_probability_bound(kernel: TransportKernel, same) -> tuple[float, float]:
    """``(flip probability, total-variation lower bound)`` for the partition
    of keys induced by ``same``."""
    flip = kernel.change_probability(same)
    classes: list[list[int]] = []
    for n, k in enumerate(kernel.keys):
        for c in classes:
            if same(kernel.keys[c[0]], k):
                c.append(n)
                break
        else:
            classes.append([n])
    tv = 0.5 * sum(abs(kernel.pre[c].sum() - kernel.post[c].sum()) for c in classes)
    return flip, float(tv)
