"""scriphg: log-polyhomogeneous series calculus and double-null solvers.

Subpackages:

- series: exact algebra of log-polyhomogeneous series in (x, y)
- spaces: weighted function-space membership checks and expansion fitting
- metric / reduction: first-order hyperbolic reductions of wave equations
- grid / solver: double-null characteristic marching on the triangle
- formal: order-by-order formal expansion solver
- cli: batch front-end
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
from .series import (  # noqa: F401
    DEFAULT_TRUNC,
    ExponentLattice,
    PhgSeries,
    PhgTerm,
    add,
    as_function_of_y,
    compose_polynomial,
    differentiate,
    evaluate,
    integrate_I1,
    integrate_I2,
    make_monomial,
    mul,
    resolvent_series,
    series_from_json,
    series_to_json,
)
