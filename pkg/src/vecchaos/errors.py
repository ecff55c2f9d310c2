"""Exception types raised across the package."""


class VecChaosError(ValueError):
    """Base class for invalid inputs."""

    code = "invalid-input"


class SymmetryViolation(VecChaosError):
    code = "symmetry-violation"


class NotPSD(VecChaosError):
    code = "not-psd"


class NonEvenMeasure(VecChaosError):
    code = "non-even-measure"


class NotRealKernel(VecChaosError):
    code = "not-real-kernel"


class GridMismatch(VecChaosError):
    code = "grid-mismatch"


class ConsistencyError(RuntimeError):
    """An internal numerical identity failed (imaginary residue too large, etc.)."""

    code = "internal-consistency"
