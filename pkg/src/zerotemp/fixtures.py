"""Reference potentials shared by the tests, the validation suite and the CLI."""
from __future__ import annotations

from .potential import GeometricTailSequence, LocallyConstantPotential, WaltersPotential, zero_potential
from .shift_space import ShiftSpace

BINARY = ShiftSpace(2, 0.5)


def w1() -> WaltersPotential:
    """b = d = -0.1, a_n = -2 * 2^-n, c_n = -2^-n.  Sum a < b + d + Sum c."""
    return WaltersPotential(-0.1, -0.1,
                            GeometricTailSequence(-2.0, 0.5),
                            GeometricTailSequence(-1.0, 0.5), BINARY)


def w2() -> WaltersPotential:
    """b = d = -1, a_n = c_n = -2^-n.  Both non-strict inequalities hold."""
    return WaltersPotential(-1.0, -1.0,
                            GeometricTailSequence(-1.0, 0.5),
                            GeometricTailSequence(-1.0, 0.5), BINARY)


def w1_mirror() -> WaltersPotential:
    return w1().mirrored()


def zero_walters() -> WaltersPotential:
    return WaltersPotential(0.0, 0.0, GeometricTailSequence(0.0, 0.5),
                            GeometricTailSequence(0.0, 0.5), BINARY, strict=False)


def zero() -> LocallyConstantPotential:
    return zero_potential(BINARY, 1)


def toy_symmetric() -> LocallyConstantPotential:
    """Depth-2 table f(00) = f(11) = 0, f(01) = f(10) = -1."""
    return LocallyConstantPotential(BINARY, 2, (0.0, -1.0, -1.0, 0.0))


def toy_asymmetric() -> LocallyConstantPotential:
    """Depth-2 table f(00) = 0, f(01) = f(10) = -1, f(11) = -0.5 (one maximizing loop)."""
    return LocallyConstantPotential(BINARY, 2, (0.0, -1.0, -1.0, -0.5))


WALTERS_FIXTURES = {"W1": w1, "W2": w2, "W1_mirror": w1_mirror}
TABLE_FIXTURES = {"zero": zero, "toy_symmetric": toy_symmetric, "toy_asymmetric": toy_asymmetric}
