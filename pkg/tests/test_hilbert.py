import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from wigner_lab.errors import NonOrthonormalBasisError, NonUnitaryError, SpaceError, ZeroVectorError
from wigner_lab.exact import Surd
from wigner_lab.hilbert import (
    FactorSpace,
    ObservableBasis,
    StateVector,
    apply_local,
    apply_unitary,
    basis_state,
    computational_basis,
    dump_state,
    expand_in_basis,
    inner_product,
    make_product_space,
    superpose,
)
from wigner_lab.measurement import controlled_unitary, premeasure
from wigner_lab.scenarios import transverse_rotation

R2 = 1 / math.sqrt(2)


# -- spaces ------------------------------------------------------------------


def test_product_dimensions(coin_spin, space):
    assert coin_spin.dimension == 4
    assert space.dims == (2, 3, 2, 3, 3, 3)
    assert space.dimension == 324


def test_duplicate_factor_rejected():
    coin = FactorSpace("coin", ("heads", "tails"))
    with pytest.raises(SpaceError, match="duplicate factor label 'coin'"):
        make_product_space([coin, coin])


def test_factor_needs_two_labels():
    with pytest.raises(SpaceError):
        FactorSpace("x", ("only",))


def test_mixed_radix_round_trip(space):
    for i in range(space.dimension):
        assert space.index_of_digits(space.digits(i)) == i
        assert space.index(space.labels_of(i)) == i


def test_row_major_matches_numpy_reshape(space):
    flat = np.arange(space.dimension)
    assert flat.reshape(space.dims)[1, 2, 0, 1, 0, 2] == space.index_of_digits((1, 2, 0, 1, 0, 2))


# -- states ------------------------------------------------------------------


def test_basis_state(coin_spin):
    s = basis_state(coin_spin, ("heads", "down"))
    assert s.amplitudes.tolist() == [1, 0, 0, 0]
    assert s.is_normalized()


def test_basis_state_blank_defaults(space):
    s = basis_state(space, {"coin": "heads"})
    assert s.amplitude(("heads", "0", "down", "0", "0", "0")) == 1


def test_basis_state_unknown_label(coin_spin):
    with pytest.raises(SpaceError, match="'coin'.*'sideways'"):
        basis_state(coin_spin, ("sideways", "down"))


def test_superpose_coin(space, psi0):
    heads = psi0.amplitude({"coin": "heads"})
    tails = psi0.amplitude({"coin": "tails"})
    assert heads == pytest.approx(0.5773502691896258, abs=1e-15)
    assert tails == pytest.approx(0.816496580927726, abs=1e-15)
    assert psi0.exact_norm2() == 1


def test_superpose_single_term(coin_spin):
    assert np.allclose(superpose(coin_spin, [(1, ("heads", "down"))]).amplitudes, [1, 0, 0, 0])


def test_superpose_zero_vector(coin_spin):
    h = Surd.sqrt(Fraction(1, 2))
    with pytest.raises(ZeroVectorError):
        superpose(coin_spin, [(h, ("heads", "down")), (-h, ("heads", "down"))])


def test_state_vector_is_immutable(psi0):
    with pytest.raises(ValueError):
        psi0.amplitudes[0] = 3


# -- unitaries -----------------------------------------------------------------


def test_identity_leaves_state(psi0):
    out = apply_unitary(psi0, np.eye(2), ["spin"])
    assert np.allclose(out.amplitudes, psi0.amplitudes)


def test_transverse_rotation(space):
    mat, ex = transverse_rotation(space)
    out = apply_unitary(basis_state(space, {}), mat, ["spin"], ex)
    assert out.amplitude({"spin": "down"}) == pytest.approx(R2)
    assert out.amplitude({"spin": "up"}) == pytest.approx(R2)
    assert out.exact[space.index(("heads", "0", "up", "0", "0", "0"))] == Surd.sqrt(Fraction(1, 2))


def test_non_unitary_reports_deviation(coin_spin):
    with pytest.raises(NonUnitaryError) as info:
        apply_unitary(basis_state(coin_spin, ("heads", "down")), np.diag([0.5, 1.0]), ["spin"])
    assert info.value.deviation == pytest.approx(0.75)


def _dense_embed(space, matrix, targets):
    """Reference embedding by explicit kron with a permutation."""
    pos = [space.position(t) for t in targets]
    rest = [k for k in range(len(space.dims)) if k not in pos]
    order = pos + rest
    d_rest = int(np.prod([space.dims[k] for k in rest])) if rest else 1
    big = np.kron(matrix, np.eye(d_rest))
    perm_dims = [space.dims[k] for k in order]
    perm = np.arange(space.dimension).reshape(space.dims).transpose(order).reshape(-1)
    # row i of the permuted basis is original index perm[i]
    out = np.zeros_like(big)
    out[np.ix_(perm, perm)] = big
    assert int(np.prod(perm_dims)) == space.dimension
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([("spin",), ("F",), ("coin", "F"), ("W", "coin"), ("Fbar", "spin", "W")]))
def test_apply_local_matches_dense_kron(seed, targets):
    from wigner_lab.scenarios import fr_space

    space = fr_space()
    rng = np.random.default_rng(seed)
    d = int(np.prod([space.factor(t).dim for t in targets]))
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    u, _ = np.linalg.qr(a)
    psi = StateVector(space, random_state(rng, space.dimension))
    got = apply_unitary(psi, u, targets)
    want = _dense_embed(space, u, targets) @ psi.amplitudes
    assert np.allclose(got.amplitudes, want, atol=1e-12)
    assert abs(got.norm() - 1) < 1e-10


# -- bases and expansion --------------------------------------------------------


def test_basis_orthonormality_error_names_pair(coin_spin):
    coin = coin_spin.factor("coin")
    with pytest.raises(NonOrthonormalBasisError) as info:
        ObservableBasis("bad", (coin,), ("a", "b"), np.array([[1, 0], [R2, R2]]))
    assert info.value.pair == ("a", "b")
    assert "0.707107" in str(info.value)


def test_basis_zero_vector(coin_spin):
    coin = coin_spin.factor("coin")
    with pytest.raises(ZeroVectorError):
        ObservableBasis("z", (coin,), ("a",), np.array([[0, 0]]))


def test_wbar_vectors_orthogonal(space, bases):
    wb = bases["wbar"]
    assert abs(np.vdot(wb.vector("okbar"), wb.vector("failbar"))) < 1e-15


def test_inner_product_properties(space):
    rng = np.random.default_rng(3)
    a = StateVector(space, random_state(rng, space.dimension))
    b = StateVector(space, random_state(rng, space.dimension))
    assert inner_product(a, a) == pytest.approx(1)
    assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)))
    assert inner_product(basis_state(space, {"coin": "heads"}), basis_state(space, {"coin": "tails"})) == 0


def _psi3(psi0, bases, space):
    s = premeasure(psi0, bases["coin_z"], "Fbar")
    s = controlled_unitary(s, "Fbar", {"t": transverse_rotation(space)}, ["spin"])
    return premeasure(s, bases["spin_z"], "F")


def test_expand_psi3_coin_times_w(space, bases, psi0):
    psi3 = _psi3(psi0, bases, space)
    basis = bases["coin_z"].tensor(bases["w"])
    got = {c.outcome: c.exact_weight for c in expand_in_basis(psi3, basis)}
    assert got == {"h,OK": Fraction(1, 6), "h,fail": Fraction(1, 6), "t,OK": 0, "t,fail": Fraction(2, 3)}


def test_expand_psi4_record_times_w(space, bases, psi0):
    psi4 = premeasure(_psi3(psi0, bases, space), bases["wbar"], "Wbar")
    rec = ObservableBasis.computational(space.factor("Wbar"), "Wbar_rec").tensor(bases["w"])
    comps = expand_in_basis(psi4, rec)
    weights = {c.outcome: c.exact_weight for c in comps if c.exact_weight}
    assert weights == {
        "okbar,OK": Fraction(1, 12),
        "okbar,fail": Fraction(1, 12),
        "failbar,OK": Fraction(1, 12),
        "failbar,fail": Fraction(3, 4),
    }
    assert sum(c.weight for c in comps) == pytest.approx(1, abs=1e-10)


def test_expand_own_vector(space, bases):
    s = basis_state(space, {"spin": "up"})
    comps = [c for c in expand_in_basis(s, bases["spin_z"]) if c.weight > 0]
    assert [(c.outcome, c.weight) for c in comps] == [("up", 1.0)]


def test_computational_round_trip(coin_spin):
    rng = np.random.default_rng(5)
    amps = random_state(rng, 4)
    comps = expand_in_basis(StateVector(coin_spin, amps), computational_basis(coin_spin))
    got = np.array([c.component.amplitudes[k] for k, c in enumerate(comps)])
    assert np.allclose(got, amps, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_expansion_weights_sum_to_one(seed):
    from wigner_lab.scenarios import fr_bases, fr_space

    space = fr_space()
    rng = np.random.default_rng(seed)
    psi = StateVector(space, random_state(rng, space.dimension))
    basis = fr_bases(space)["wbar"]
    comps = expand_in_basis(psi, basis, tol=-1)
    assert sum(c.weight for c in comps) == pytest.approx(1, abs=1e-10)
    for i, a in enumerate(comps):
        for b in comps[i + 1:]:
            assert abs(inner_product(a.component, b.component)) < 1e-10


def test_dump_format(space, psi0):
    lines = dump_state(psi0).splitlines()
    assert lines == [
        "heads⊗0⊗down⊗0⊗0⊗0 +0.577350269189626 +0.000000000000000 [1/√3]",
        "tails⊗0⊗down⊗0⊗0⊗0 +0.816496580927726 +0.000000000000000 [√6/3]",
    ]


def test_exact_path_tracks_float_path(space, bases, psi0):
    psi3 = _psi3(psi0, bases, space)
    for idx, amp in psi3.exact.items():
        assert float(amp) == pytest.approx(psi3.amplitudes[idx].real, abs=1e-12)
    assert psi3.exact_norm2() == 1


def test_apply_local_shape_mismatch(space, psi0):
    with pytest.raises(SpaceError):
        apply_local(psi0, np.eye(3), ["spin"])
