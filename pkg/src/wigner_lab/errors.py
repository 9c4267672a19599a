from __future__ import annotations


class WignerLabError(Exception):
    """Base class for every error raised by the package."""


class SpaceError(WignerLabError, ValueError):
    """Bad factor, label or space construction."""


class ZeroVectorError(WignerLabError, ValueError):
    pass


class NonUnitaryError(WignerLabError, ValueError):
    def __init__(self, deviation: float, what: str = "matrix"):
        self.deviation = deviation
        super().__init__(f"{what} is not unitary: max |U^dag U - I| = {deviation:.3e}")


class NonOrthonormalBasisError(WignerLabError, ValueError):
    def __init__(self, basis: str, first: str, second: str, overlap: complex):
        self.basis = basis
        self.pair = (first, second)
        self.overlap = overlap
        if first == second:
            msg = f"basis {basis!r}: outcome {first!r} has squared norm {overlap.real:.6g}, expected 1"
        else:
            msg = f"basis {basis!r}: outcomes {first!r} and {second!r} have inner product {_fmt(overlap)}"
        super().__init__(msg)


class RecordError(WignerLabError, ValueError):
    """Recorder factor is not blank before a premeasurement."""


class BranchError(WignerLabError, ValueError):
    """Projection or postselection on an outcome of zero probability."""


class ScenarioError(WignerLabError, ValueError):
    pass


class InvariantError(WignerLabError, RuntimeError):
    """An internal consistency check failed; signals a bug, not bad input."""


def _fmt(z: complex) -> str:
    z = complex(z)
    if abs(z.imag) < 1e-15:
        return f"{z.real:.6g}"
    return f"{z.real:.6g}{z.imag:+.6g}j"
