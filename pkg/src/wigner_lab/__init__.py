"""Simulation engine and scenario language for friend/super-observer protocols."""

from .errors import (
    BranchError,
    InvariantError,
    NonOrthonormalBasisError,
    NonUnitaryError,
    RecordError,
    ScenarioError,
    SpaceError,
    WignerLabError,
    ZeroVectorError,
)
from .exact import Surd
from .hilbert import (
    FactorSpace,
    ObservableBasis,
    ProductSpace,
    StateVector,
    apply_unitary,
    basis_state,
    make_product_space,
    superpose,
)
from .measurement import (
    JointDistribution,
    MeasurementStep,
    born_distribution,
    enumerate_branches,
    premeasure,
    project,
    run_protocol,
    sequential_joint_distribution,
)
from .scenarios import (
    FR_SUITE,
    FROptions,
    Ordering,
    Scenario,
    Statement,
    Verdict,
    build_fr_scenario,
    check_statement,
    evaluate_statement,
    run,
    statement_matrix,
)

__version__ = "0.1.0"
