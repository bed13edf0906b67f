"""Exception hierarchy shared by all scriphg modules."""


class ScriphgError(Exception):
    """Base class for all library errors."""


class InputError(ScriphgError):
    """Bad user input (spec files, parameters). CLI exit code 2."""


class NumericalError(ScriphgError):
    """A run failed numerically (blowup, stalled iteration). CLI exit code 1."""


# --- series algebra ---------------------------------------------------------

class OffLattice(InputError):
    """Exponents violate the lattice / space-tag constraints."""


class LatticeMismatch(InputError):
    """Operands live on incompatible exponent lattices."""


class TruncationTooLow(InputError):
    """Requested order exceeds the available truncation order."""


class DivergentComposition(InputError):
    """Composition argument has negative minimal x-order."""


class DomainError(InputError):
    """Evaluation point outside the triangle 0 < x <= y <= y0 < 1."""


# --- asymptotic analysis ----------------------------------------------------

class InsufficientSamples(InputError):
    """Too few sample points for a reliable fit."""


class IllConditioned(NumericalError):
    """Least-squares basis too ill-conditioned; shrink the basis."""


class TraceMismatch(NumericalError):
    """Borel extension failed to reproduce the prescribed traces."""


# --- reduction --------------------------------------------------------------

class DegenerateMetric(InputError):
    """det(mu) vanishes on the sample set."""


class CurvatureViolation(InputError):
    """Curvature series violates the required x-weight."""


class AsymmetricChristoffel(InputError):
    """Christoffel data with Gamma^a_bc != Gamma^a_cb."""


# --- characteristic solver --------------------------------------------------

class NoConvergence(NumericalError):
    """Fixed-point iteration for the implicit step stalled."""


class Blowup(NumericalError):
    """Non-finite field values encountered during marching."""

    def __init__(self, message, level=None, y=None):
        super().__init__(message)
        self.level = level
        self.y = y


class StepUnderflow(NumericalError):
    """Step control in the resolvent ODE integrator underflowed."""


class NonMonotone(NumericalError):
    """Errors in a refinement study do not decrease."""


# --- formal solver ----------------------------------------------------------

class StalledGain(NumericalError):
    """An iteration step failed to gain the expected order delta."""


class OrderConditionViolated(InputError):
    """Nonlinearity order condition m > (p - 1/delta)/q fails."""
