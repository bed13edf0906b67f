"""Weighted function spaces: numerical membership checks, expansion fitting,
and the mollifier/Borel extension operators.

Membership in the weighted classes is tested empirically: derivatives of a
callable are sampled on a geometric grid in x (with y sweeping the triangle
down to y = x), divided by the space's envelope in y, and the decay rate in
x of the resulting sup is fitted by log-log regression.  A field belongs to
the space when every measured exponent is at least the required one minus a
small slope tolerance (log factors bias slopes slightly downward; the
tolerance absorbs them).

Supported families (alpha is the main weight, beta_or_sigma the second one
where present, k the derivative order):

  Cx   sup |x^{-alpha} dy^i (x dx)^j f| < inf
  Cy   sup |y^{-sigma} (y dy)^i dx^j f| < inf
  Cxy  sup |x^{-alpha} (y dy)^i (x dx)^j f| < inf
  F    |dx^i dy^j f| <= C y^mu * (y^{alpha-i-j} if alpha-i-j >= 0
                                  else x^{alpha-i-j}) * logs
  zF   like F but the pure y-derivative branch (i = 0, alpha - j >= 0)
       is y-bounded regardless
  T    |dx^i dy^j f| <= C (x^{alpha+beta-i-j} + x^{alpha-i} y^{beta-j}
                           + x^{alpha+beta-i-k} y^{k-j}) * logs
  Tb   chart (x, tau):  |dx^i dtau^j f| <= C ((x+2tau)^{alpha-i-j} if
       alpha-i-j >= 0 else x^{alpha-i-j})  (no log factor)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.integrate import quad

from .errors import (
    IllConditioned,
    InputError,
    InsufficientSamples,
    TraceMismatch,
)
from .series import ExponentLattice, _frac

SLOPE_TOL = 0.05

_FAMILIES = ("Cx", "Cy", "Cxy", "F", "zF", "T", "Tb")


@dataclass(frozen=True)
class WeightedSpaceSpec:
    family: str
    alpha: float
    beta_or_sigma: float = 0.0
    k: int = 1
    chart: str = "xy"

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError(f"unknown space family {self.family!r}")
        if self.family == "Tb" and self.chart != "xtau":
            raise InputError("Tb spaces live in the (x, tau) chart")
        if self.family != "Tb" and self.chart != "xy":
            raise InputError(f"{self.family} spaces live in the (x, y) chart")
        if self.k < 0:
            raise InputError("derivative order k must be >= 0")


def _required_exponent(spec: WeightedSpaceSpec, i: int, j: int) -> float:
    """Required x-decay exponent of sup_y |dx^j dy^i f| / (y-envelope).

    (i, j) = (y-derivative count, x-derivative count).  The second-coordinate
    envelope divides out the y (or tau) dependence; what remains must decay
    in x at least at this rate for membership.
    """
    a, b, k = spec.alpha, spec.beta_or_sigma, spec.k
    if spec.family == "Cx":
        return a - j
    if spec.family == "Cy":
        return -float(j)
    if spec.family == "Cxy":
        return a - j
    if spec.family == "F":
        return min(a - i - j, 0.0)
    if spec.family == "zF":
        if i == 0 and a - j >= 0:
            return 0.0
        return min(a - i - j, 0.0)
    if spec.family == "T":
        return min(a + b - i - j, a - j, a + b - i - k)
    if spec.family == "Tb":
        return min(a - i - j, 0.0)
    raise InputError(spec.family)


def _y_envelope(spec: WeightedSpaceSpec, i: int, j: int, x, y):
    """Divide |derivative| by this before fitting the x-decay.

    Chosen so that on the sharp examples of each family the quotient scales
    exactly like x^required near the corner y ~ x.
    """
    a, b = spec.alpha, spec.beta_or_sigma
    if spec.family in ("Cx", "Cxy"):
        return np.ones_like(y)
    if spec.family == "Cy":
        return y ** (a - i)
    if spec.family in ("F", "zF"):
        # second weight (if any) is a plain y^mu factor, as in y^mu * F^k
        env = y ** b if b else np.ones_like(y)
        if a - i - j >= 0:
            env = env * y ** (a - i - j)
        return env
    if spec.family == "T":
        return np.ones_like(y)
    if spec.family == "Tb":
        if a - i - j >= 0:
            return (x + 2.0 * y) ** (a - i - j)
        return np.ones_like(y)
    raise InputError(spec.family)


@dataclass
class MembershipReport:
    spec: WeightedSpaceSpec
    passed: bool
    measured_exponents: dict
    required_exponents: dict
    worst_constant: float

    def to_json(self):
        return {
            "family": self.spec.family,
            "alpha": self.spec.alpha,
            "beta_or_sigma": self.spec.beta_or_sigma,
            "k": self.spec.k,
            "chart": self.spec.chart,
            "passed": self.passed,
            "measured_exponents": {
                f"{i},{j}": v for (i, j), v in self.measured_exponents.items()},
            "required_exponents": {
                f"{i},{j}": v for (i, j), v in self.required_exponents.items()},
            "worst_constant": self.worst_constant,
        }


def _fd_derivative(f, i, j, x, y, rel_step=1e-3):
    """Central finite difference d^i/dy^i d^j/dx^j f at scalar (x, y).

    Steps are proportional to the local coordinate, so the relative
    truncation error is uniform across decades.
    """
    hx = rel_step * x
    hy = rel_step * max(y, x)

    def dx_only(xx, yy, order):
        if order == 0:
            return f(xx, yy)
        if order == 1:
            return (f(xx + hx, yy) - f(xx - hx, yy)) / (2 * hx)
        if order == 2:
            return (f(xx + hx, yy) - 2 * f(xx, yy) + f(xx - hx, yy)) / hx**2
        if order == 3:
            return (f(xx + 2 * hx, yy) - 2 * f(xx + hx, yy)
                    + 2 * f(xx - hx, yy) - f(xx - 2 * hx, yy)) / (2 * hx**3)
        raise InputError("finite differences support derivative order <= 3")

    if i == 0:
        return dx_only(x, y, j)
    if i == 1:
        return (dx_only(x, y + hy, j) - dx_only(x, y - hy, j)) / (2 * hy)
    if i == 2:
        return (dx_only(x, y + hy, j) - 2 * dx_only(x, y, j)
                + dx_only(x, y - hy, j)) / hy**2
    if i == 3:
        return (dx_only(x, y + 2 * hy, j) - 2 * dx_only(x, y + hy, j)
                + 2 * dx_only(x, y - hy, j) - dx_only(x, y - 2 * hy, j)) \
            / (2 * hy**3)
    raise InputError("finite differences support derivative order <= 3")


def _slope(logx, logv):
    A = np.vstack([logx, np.ones_like(logx)]).T
    coef, *_ = np.linalg.lstsq(A, logv, rcond=None)
    return float(coef[0])


def _slope_logaware(logx, logv):
    """Power-law slope with a log-log correction column.

    For v = x^a |ln x|^N the fit is exact and returns a, so allowed log
    factors do not bias the measured exponent downward.
    """
    ll = np.log(np.maximum(-logx, 0.5))
    A = np.vstack([logx, np.ones_like(logx), ll]).T
    coef, *_ = np.linalg.lstsq(A, logv, rcond=None)
    return float(coef[0])


def check_membership(f, spec: WeightedSpaceSpec, x_range=(1e-4, 0.25),
                     y0=0.8, points_per_decade=16, n_y=12, deriv=None,
                     tol=SLOPE_TOL, include_corner=True) -> MembershipReport:
    """Empirical membership test of a callable f(x, y) (or f(x, tau)).

    `deriv`, if given, is a callable (i, j, x, y) -> value returning the
    exact mixed derivative (y-order i, x-order j); otherwise derivatives
    come from central finite differences with coordinate-proportional steps.
    """
    if points_per_decade < 8:
        raise InsufficientSamples("need at least 8 points per decade")
    xlo, xhi = x_range
    n_dec = np.log10(xhi / xlo)
    if n_dec < 2 - 1e-9:
        raise InsufficientSamples("need at least 2 decades in x")
    nx = max(int(round(points_per_decade * n_dec)), 16)
    xs = np.geomspace(xlo, xhi, nx)

    measured, required = {}, {}
    worst = 0.0
    ok = True
    for i in range(spec.k + 1):
        for j in range(spec.k + 1 - i):
            req = _required_exponent(spec, i, j)
            sup = np.zeros(nx)
            for ix, x in enumerate(xs):
                if include_corner and spec.chart == "xy":
                    ys = np.geomspace(1.05 * x, y0, n_y)
                elif spec.chart == "xy":
                    ys = np.linspace(max(2 * x, 0.1 * y0), y0, n_y)
                else:
                    # tau sweeps from near the data surface up to the top
                    ys = np.geomspace(max(1e-3 * y0, 0.55 * x), y0, n_y)
                env = _y_envelope(spec, i, j, x, ys)
                vals = np.array([
                    abs(deriv(i, j, x, yy)) if deriv is not None
                    else abs(_fd_derivative(f, i, j, x, yy))
                    for yy in ys])
                sup[ix] = np.max(vals / env)
            nonzero = sup > 1e-290
            if nonzero.sum() < nx // 2:
                measured[(i, j)] = float("inf")
                required[(i, j)] = req
                continue
            m = _slope_logaware(np.log(xs[nonzero]), np.log(sup[nonzero]))
            measured[(i, j)] = m
            required[(i, j)] = req
            worst = max(worst, float(np.max(sup * xs ** (-req))))
            if m < req - tol:
                ok = False
    return MembershipReport(spec, ok, measured, required, worst)


# -- expansion fitting --------------------------------------------------------


@dataclass
class ExpansionFit:
    basis: list                      # [(Fraction xpow, int xlog), ...]
    coefficients: dict               # basis element -> complex
    residual_slope: float
    condition: float
    rms_residual: float = 0.0

    def coefficient(self, xpow, xlog=0) -> complex:
        return self.coefficients.get((_frac(xpow), xlog), 0j)

    def synthesize(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for (p, jl), c in self.coefficients.items():
            out = out + c * x ** float(p) * np.log(x) ** jl
        return out

    def to_json(self):
        return {
            "basis": [[f"{p.numerator}/{p.denominator}", jl]
                      for p, jl in self.basis],
            "coefficients": [
                {"xpow": f"{p.numerator}/{p.denominator}", "xlog": jl,
                 "re": c.real, "im": c.imag}
                for (p, jl), c in sorted(self.coefficients.items())],
            "residual_slope": self.residual_slope,
            "condition": self.condition,
            "rms_residual": self.rms_residual,
        }


def fit_expansion(samples, lattice: ExponentLattice, max_order,
                  max_log: int = 3, min_xpow=None) -> ExpansionFit:
    """Least-squares extraction of a polyhomogeneous expansion at fixed y.

    samples: sequence of (x, value) pairs on a geometric grid spanning at
    least two decades.  The basis is every lattice exponent from min_xpow
    (default: the lattice offset) up to max_order, with log powers up to
    max_log.  The residual decay exponent is fitted on the lowest decade of
    the remainder; a residual at rounding level reports slope = +inf.
    """
    xs = np.array([s[0] for s in samples], dtype=float)
    vals = np.array([complex(s[1]) for s in samples])
    order = np.argsort(xs)
    xs, vals = xs[order], vals[order]
    if len(xs) < 8:
        raise InsufficientSamples("need at least 8 samples")
    if xs[-1] / xs[0] < 99.0:
        raise InsufficientSamples("samples must span at least 2 decades")

    max_order = _frac(max_order)
    lo = lattice.offset if min_xpow is None else _frac(min_xpow)
    basis = []
    p = lo
    while p <= max_order:
        for jl in range(max_log + 1):
            basis.append((p, jl))
        p += lattice.delta
    if len(xs) < 3 * len(basis):
        raise InsufficientSamples(
            f"{len(xs)} samples for {len(basis)} basis functions; "
            "need 3 per basis function")

    # scale columns for conditioning; fit in scaled space, report raw cond
    cols = []
    for pth, jl in basis:
        col = xs ** float(pth) * np.log(xs) ** jl
        cols.append(col)
    A = np.array(cols).T
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    cond = float(np.linalg.cond(A / norms))
    if cond > 1e10:
        raise IllConditioned(
            f"design matrix condition {cond:.3g} > 1e10; shrink the basis")
    coef, *_ = np.linalg.lstsq(A / norms, vals, rcond=None)
    coef = coef / norms

    resid = vals - A @ coef
    scale = max(np.max(np.abs(vals)), 1e-300)
    coefficients = {b: c for b, c in zip(basis, coef)
                    if abs(c) > 1e-10 * scale}

    rms = float(np.sqrt(np.mean(np.abs(resid) ** 2)))
    if np.max(np.abs(resid)) < 1e-12 * scale:
        slope = float("inf")
    else:
        t = float(max_order + lattice.delta)
        slope = _remainder_exponent(xs, vals, A, basis, t)
        if slope is None:
            # narrow sample span: fall back to the decay of the plain
            # residual over the lowest decade
            mask = xs <= xs[0] * 10.0
            r = np.abs(resid[mask])
            good = r > 1e-300
            slope = _slope(np.log(xs[mask][good]), np.log(r[good])) \
                if good.sum() >= 4 else float("inf")
    return ExpansionFit(basis, coefficients, slope, cond, rms)


def _remainder_exponent(xs, vals, A, basis, t):
    """Decay exponent of the post-expansion remainder by window scaling.

    A single global least-squares fit smears the first omitted term
    across the basis, so its pointwise residual does not decay at the
    remainder's rate.  Instead the basis is refitted on sliding windows
    of fixed logarithmic width (two decades), weighted by x^{-t} so the
    small-x end controls the coefficients; the residual level of each
    window scales like (window start)^t when the remainder is O(x^t),
    and the exponent is read off by regression over the window starts.
    Returns None when the samples span fewer than ~2.7 decades.
    """
    span = xs[-1] / xs[0]
    if span < 10.0 ** 2.7:
        return None
    starts = np.geomspace(xs[0], xs[-1] / 100.0, 5)
    pts = []
    for x0 in starts:
        m = (xs >= 0.999 * x0) & (xs <= 100.1 * x0)
        if m.sum() < 2 * len(basis) + 2:
            continue
        w = xs[m] ** (-t)
        Aw = A[m] * w[:, None]
        norms = np.linalg.norm(Aw, axis=0)
        norms[norms == 0] = 1.0
        c, *_ = np.linalg.lstsq(Aw / norms, vals[m] * w, rcond=None)
        r = vals[m] - A[m] @ (c / norms)
        lev = float(np.sqrt(np.mean(np.abs(r) ** 2)))
        if lev > 1e-300:
            pts.append((x0, lev))
    if len(pts) < 3:
        return None
    lx = np.log([p[0] for p in pts])
    ll = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ll, 1)[0])


# -- mollifier extension ------------------------------------------------------

_BUMP_SUPPORT = 0.5


def _bump_unnormalized(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < _BUMP_SUPPORT
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (0.25 - zi * zi))
    return out


_BUMP_MASS = quad(lambda z: float(_bump_unnormalized(z)), -0.5, 0.5,
                  epsabs=1e-14, epsrel=1e-13, limit=400)[0]

# fixed Gauss-Legendre rule mapped to [-1/2, 1/2]; the bump is analytic
# inside and flat at the endpoints, so 96 nodes reach ~1e-12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)
_GL_NODES = _BUMP_SUPPORT * _GL_NODES
_GL_WEIGHTS = _BUMP_SUPPORT * _GL_WEIGHTS
_BUMP_VALUES = _bump_unnormalized(_GL_NODES) / _BUMP_MASS


def bump_moment(i: int) -> float:
    """i-th moment of the normalized bump, m_i = int z^i phi(z) dz."""
    return float(np.sum(_GL_WEIGHTS * _BUMP_VALUES * _GL_NODES ** i))


def mollifier_extend(f, x, y, v=None):
    """E[f](x, y, v) = int phi(z) f(y + x z, v) dz for the fixed unit bump."""
    w = y + x * _GL_NODES
    if v is None:
        vals = np.array([f(wi) for wi in w])
    else:
        vals = np.array([f(wi, v) for wi in w])
    return float(np.sum(_GL_WEIGHTS * _BUMP_VALUES * vals))


class MollifierExtension:
    """E[f] with exact derivatives when trace derivatives are supplied.

    d^i/dx^i d^j/dy^j E[f](x, y) = int phi(z) z^i f^(i+j)(y + xz) dz, so any
    mixed derivative only needs derivatives of the trace itself.  `derivs`
    maps order -> callable; missing orders fall back to finite differences
    of the highest one supplied.
    """

    def __init__(self, f, derivs=None):
        self.f = f
        self.derivs = {0: f}
        if derivs:
            self.derivs.update(derivs)

    def _trace_deriv(self, order):
        if order in self.derivs:
            return self.derivs[order]
        base_order = max(o for o in self.derivs if o < order)
        base = self.derivs[base_order]
        need = order - base_order

        def fd(w, _base=base, _need=need):
            h = 1e-3 * max(abs(w), 1e-2)
            if _need == 1:
                return (_base(w + h) - _base(w - h)) / (2 * h)
            if _need == 2:
                return (_base(w + h) - 2 * _base(w) + _base(w - h)) / h**2
            raise InputError("supply analytic trace derivatives beyond order 2")
        self.derivs[order] = fd
        return fd

    def __call__(self, x, y):
        return mollifier_extend(self.f, x, y)

    def deriv(self, i, j, x, y):
        """Mixed derivative with i = y-order, j = x-order."""
        g = self._trace_deriv(i + j)
        w = y + x * _GL_NODES
        vals = np.array([g(wi) for wi in w])
        return float(np.sum(_GL_WEIGHTS * _BUMP_VALUES
                            * _GL_NODES ** j * vals))

    def deriv_at_x0(self, order, y):
        """d^order/dx^order E[f](0, y) = m_order * f^(order)(y)."""
        return bump_moment(order) * self._trace_deriv(order)(y)


# -- Borel-style extension ----------------------------------------------------

class BorelExtension:
    """h(x, y) with d^i h/dx^i |_{x=0} = f_i for all supplied traces.

    Built inductively: h_0 = E[f_0] and
    h_{i+1} = h_i + (x^i / i!) E[f_i - d^i h_i/dx^i|_{x=0}],
    where the x-derivatives at x = 0 reduce to bump moments times trace
    derivatives, evaluated exactly.  The result is stored as a finite sum
    sum_j (x^j / j!) E[g_j].
    """

    def __init__(self, traces, trace_derivs=None):
        # components: list of (j, MollifierExtension)
        self.components = []
        for i, f_i in enumerate(traces):
            derivs = (trace_derivs[i] if trace_derivs else None)
            prior = tuple(self.components)

            def g(w, _f=f_i, _i=i, _prior=prior):
                return _f(w) - _partial_deriv_at_0(_prior, _i, w, 0)
            if derivs:
                gder = {}
                for order, d in derivs.items():
                    gder[order] = (
                        lambda w, _d=d, _i=i, _o=order, _prior=prior:
                        _d(w) - _partial_deriv_at_0(_prior, _i, w, _o))
                correction = MollifierExtension(g, gder)
            else:
                correction = MollifierExtension(g)
            self.components.append((i, correction))

    def __call__(self, x, y):
        total = 0.0
        for j, ext in self.components:
            total += x ** j / math.factorial(j) * ext(x, y)
        return total

    def deriv(self, i, j, x, y):
        """Mixed derivative (y-order i, x-order j) by the product rule."""
        total = 0.0
        for jj, ext in self.components:
            for r in range(min(j, jj) + 1):
                # d^r/dx^r of x^jj / jj!  times  d^{j-r}/dx^{j-r} of E
                c = (math.comb(j, r) * math.factorial(jj)
                     / math.factorial(jj - r) / math.factorial(jj))
                total += (c * x ** (jj - r) * ext.deriv(i, j - r, x, y))
        return total


def _partial_deriv_at_0(components, order, y, yorder):
    """d^yorder/dy^yorder of d^order/dx^order [sum x^j/j! E[g_j]] at x = 0.

    d^order/dx^order of x^j/j! E[g] at 0 equals
    C(order, j) * m_{order-j} * g^{(order-j)}(y), so only trace derivatives
    and bump moments enter; no finite differences in x.
    """
    total = 0.0
    for j, ext in components:
        if j > order:
            continue
        c = math.comb(order, j)
        m = bump_moment(order - j)
        total += c * m * ext._trace_deriv(order - j + yorder)(y)
    return total


def borel_extend(traces, mu=None, trace_derivs=None, verify_at=1e-3,
                 verify_tol=None):
    """Extension with prescribed x-derivatives at x = 0.

    traces: list of callables f_0 .. f_m of y.  Returns a BorelExtension h;
    the trace reproduction d^i h/dx^i|_{x=0} = f_i is verified by one-sided
    finite differences at x = verify_at and raises TraceMismatch beyond
    tolerance.
    """
    h = BorelExtension(traces, trace_derivs)
    if verify_tol is None:
        verify_tol = 1e-4 / verify_at
    ys = np.linspace(0.3, 0.7, 5)
    for i in range(len(traces)):
        for y in ys:
            approx = _one_sided_x_derivative(h, i, verify_at, y)
            target = traces[i](y)
            if abs(approx - target) > verify_tol * max(1.0, abs(target)):
                raise TraceMismatch(
                    f"trace {i} at y={y}: one-sided derivative {approx} vs "
                    f"prescribed {target}")
    return h


def _one_sided_x_derivative(h, order, x0, y):
    """Fourth-order one-sided estimate of d^order h/dx^order at x -> 0+.

    Uses values at x0, 2 x0, ..., and Richardson-style polynomial
    extrapolation to 0 through a small Vandermonde solve.
    """
    npts = order + 5
    xs = x0 * (1.0 + np.arange(npts))
    vals = np.array([h(x, y) for x in xs])
    # fit a polynomial of degree npts-1 through the points; derivative at 0
    V = np.vander(xs, npts, increasing=True)
    coeffs = np.linalg.solve(V, vals)
    return float(coeffs[order] * math.factorial(order))


def membership_report_json(report: MembershipReport) -> str:
    return json.dumps(report.to_json(), sort_keys=True)
