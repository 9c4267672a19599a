from fractions import Fraction

import numpy as np
import pytest

from wigner_lab.exact import Surd
from wigner_lab.hilbert import FactorSpace, make_product_space, superpose
from wigner_lab.scenarios import fr_bases, fr_space


@pytest.fixture
def space():
    return fr_space()


@pytest.fixture
def bases(space):
    return fr_bases(space)


@pytest.fixture
def psi0(space):
    return superpose(space, [(Surd.sqrt(Fraction(1, 3)), {"coin": "heads"}), (Surd.sqrt(Fraction(2, 3)), {"coin": "tails"})])


@pytest.fixture
def coin_spin():
    return make_product_space([FactorSpace("coin", ("heads", "tails")), FactorSpace("spin", ("down", "up"))])


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)
