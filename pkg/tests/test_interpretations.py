import json
from fractions import Fraction

import numpy as np
import pytest

from wigner_lab.errors import ScenarioError
from wigner_lab.hilbert import basis_state
from wigner_lab.interpretations import (
    KernelKind,
    build_kernel,
    default_seed,
    flip_probability_bound,
    grw_scenario,
    sample_trajectories,
)
from wigner_lab.scenarios import FR_SUITE, build_fr_scenario, run


def test_kernel_kind_aliases():
    assert KernelKind.parse("minimal") is KernelKind.MINIMAL_TRANSPORT
    assert KernelKind.parse("INDEPENDENT_RESAMPLE") is KernelKind.INDEPENDENT_RESAMPLE
    with pytest.raises(ScenarioError, match="unknown kernel"):
        KernelKind.parse("teleport")


# -- collapse everywhere -------------------------------------------------------


def test_grw_collapses_every_recorder():
    sc = grw_scenario(build_fr_scenario())
    assert all(s.collapse for _, s in sc.measurements)
    assert sc.name.endswith("[grw]")


def test_grw_is_idempotent():
    once = grw_scenario(build_fr_scenario())
    assert grw_scenario(once) is once


def test_grw_matches_every_agent_collapses_row():
    a = run(grw_scenario(build_fr_scenario())).joint
    b = run(build_fr_scenario(FR_SUITE[3])).joint
    assert a.max_abs_diff(b) < 1e-12
    assert a.exact_value(("t", "up", "failbar", "fail")) is not None


# -- kernels -------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["minimal", "independent"])
def test_kernel_rows_are_distributions(kind):
    k = build_kernel({"a": 0.2, "b": 0.8}, {"a": 0.5, "c": 0.5}, kind)
    assert np.allclose(k.table.sum(axis=1), 1)
    assert k.marginal_error() < 1e-12


def test_minimal_kernel_is_identity_without_change():
    p = {"a": 0.3, "b": 0.7}
    k = build_kernel(p, p, "minimal")
    assert np.allclose(k.table, np.eye(2))
    assert k.stay_probability() == pytest.approx(1)


def test_minimal_kernel_maximizes_stay():
    p, q = {"a": 0.6, "b": 0.4}, {"a": 0.25, "b": 0.75}
    k = build_kernel(p, q, "minimal")
    assert k.stay_probability() == pytest.approx(0.25 + 0.4)
    assert k.row("b") == {"b": 1.0}
    assert k.row("a") == pytest.approx({"a": 0.25 / 0.6, "b": 0.35 / 0.6})


def test_independent_rows_equal_post():
    q = {"a": 0.25, "b": 0.75}
    k = build_kernel({"a": 0.6, "b": 0.4}, q, "independent")
    for key in ("a", "b"):
        assert k.row(key) == pytest.approx(q)


def test_kernel_rejects_unnormalized():
    with pytest.raises(ScenarioError, match="sums to"):
        build_kernel({"a": 0.5}, {"a": 1.0}, "minimal")


@pytest.mark.parametrize("kind", ["minimal", "independent"])
def test_disjoint_support_forces_half_flip(kind):
    # tails-recorded mass must move half onto heads: any kernel flips 1/2
    k = build_kernel({"t": 1.0}, {"h": 0.5, "t": 0.5}, kind)
    flip, tv = flip_probability_bound(k, lambda a, b: a == b)
    assert flip == pytest.approx(0.5) and tv == pytest.approx(0.5)


def test_flip_at_least_tv():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        for kind in ("minimal", "independent"):
            k = build_kernel(dict(enumerate(p)), dict(enumerate(q)), kind)
            flip, tv = flip_probability_bound(k, lambda a, b: a == b)
            assert flip >= tv - 1e-12
            if kind == "minimal":
                assert flip == pytest.approx(tv)


# -- sampler ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def tails_scenario():
    return build_fr_scenario(collapse_at={"Fbar"}, postselect={"r": "t"})


def test_fbar_flips_only_at_wbar(tails_scenario):
    res = sample_trajectories(tails_scenario, "minimal", 20_000, seed=5)
    stats = res.flip_statistics["Fbar"]
    assert stats["kernel_by_step"]["wbar"] == pytest.approx(0.5)
    assert abs(stats["by_step"]["wbar"] - 0.5) < 0.02
    others = {k: v for k, v in stats["by_step"].items() if k != "wbar"}
    assert all(v == 0 for v in others.values())
    assert stats["tv_lower_bound"]["wbar"] == pytest.approx(0.5)


def test_independent_kernel_also_flips_half(tails_scenario):
    res = sample_trajectories(tails_scenario, "independent", 20_000, seed=5)
    assert abs(res.flip_statistics["Fbar"]["ever"] - 0.5) < 0.02


def test_marginals_track_born(tails_scenario):
    res = sample_trajectories(tails_scenario, "minimal", 5_000, seed=9)
    assert all(c["ok"] for c in res.marginal_checks)
    assert max(k.marginal_error() for k in res.kernels) < 1e-10


def test_split_ranges_reproduce(tails_scenario):
    whole = sample_trajectories(tails_scenario, "minimal", 300, seed=42)
    head = sample_trajectories(tails_scenario, "minimal", 120, seed=42)
    tail = sample_trajectories(tails_scenario, "minimal", 180, seed=42, start=120)
    assert np.array_equal(whole.paths, np.vstack([head.paths, tail.paths]))


def test_different_seeds_differ(tails_scenario):
    a = sample_trajectories(tails_scenario, "minimal", 200, seed=1)
    b = sample_trajectories(tails_scenario, "minimal", 200, seed=2)
    assert not np.array_equal(a.paths, b.paths)


def test_seed_from_environment(monkeypatch, tails_scenario):
    monkeypatch.setenv("WIGNER_LAB_SEED", "77")
    assert default_seed() == 77
    res = sample_trajectories(tails_scenario, "minimal", 50)
    assert res.seed == 77
    assert np.array_equal(res.paths, sample_trajectories(tails_scenario, "minimal", 50, seed=77).paths)
    monkeypatch.delenv("WIGNER_LAB_SEED")
    assert default_seed() == 0


def test_jsonl_lines(tails_scenario):
    res = sample_trajectories(tails_scenario, "minimal", 3, seed=0)
    lines = res.jsonl().splitlines()
    assert len(lines) == 3
    first = json.loads(lines[0])
    assert first["id"] == 0
    assert len(first["path"]) == len(tails_scenario.steps) + 1
    step, config = first["path"][0]
    assert step == 0 and config["Fbar"] == "0" and config["W"] == "0"


def test_summary_is_json(tails_scenario):
    res = sample_trajectories(tails_scenario, "minimal", 100, seed=0)
    data = json.loads(json.dumps(res.summary()))
    assert data["kernel"] == "MINIMAL_TRANSPORT" and data["n"] == 100


def test_basis_state_scenario_never_flips():
    sc = build_fr_scenario(collapse_at={"Fbar"}, postselect={"r": "t"})
    steps = sc.steps[:1]
    plain = type(sc)("basis", sc.space, basis_state(sc.space, {"coin": "tails"}), steps)
    res = sample_trajectories(plain, "minimal", 100, seed=0)
    assert all(v["ever"] == 0 for v in res.flip_statistics.values())


def test_unselected_collapse_rejected():
    with pytest.raises(ScenarioError):
        sample_trajectories(build_fr_scenario(FR_SUITE[3]), "minimal", 10, seed=0)


def test_w_marginal_in_sampler_matches_born():
    sc = build_fr_scenario()
    res = sample_trajectories(sc, "minimal", 20_000, seed=3)
    ok_index = sc.space.factor("W").index("OK")
    frac = (res.factor_labels("W")[:, -1] == ok_index).mean()
    assert abs(frac - 1 / 6) < 4 / np.sqrt(20_000)
    assert Fraction(1, 6) == run(sc).joint.exact_probability({"w": "OK"})


def test_n_must_be_positive(tails_scenario):
    with pytest.raises(ScenarioError):
        sample_trajectories(tails_scenario, "minimal", 0)
