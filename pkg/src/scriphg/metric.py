"""Null-adapted metric specifications and frame construction.

A metric in null normal form on the triangle reads

    g = dx (x)_s dy + chi dy (x) dy + 2 gamma (x)_s dy + mu,

with chi and gamma vanishing at x = 0 and mu a nondegenerate angular
block.  In spherical symmetry (the numerical setting of this package)
chi, gamma and mu are scalar series; angular dependence enters only via
the single Fourier-mode slot of the series algebra.

The Bondi form carries an extra e^{2 beta} factor in front of dx (x)_s dy
and is brought to null normal form by redefining x.  The straightening
change of coordinates removes the x-linear part of the e_minus drift so
that e_minus = d/dy + higher order in the hatted chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateMetric, InputError, OffLattice
from . import series as srs
from .series import (
    PhgSeries,
    PhgTerm,
    TAG_XY,
    _antiderivative,
    _frac,
    add,
    differentiate,
    evaluate,
    make_monomial,
    mul,
    scale,
    zero,
)

FORM_NULL_NORMAL = "null_normal"
FORM_BONDI = "bondi"


# -- series helpers (reciprocal, exp, log, fractional powers, substitution) ---


def _split_constant(f: PhgSeries):
    """Return (c, rest) with f = c + rest; rest must vanish at the corner."""
    c = 0j
    rest = []
    for t in f.terms:
        if t.xpow == 0 and t.ypow == 0 and t.xlog == 0 and t.ylog == 0 \
                and t.mode == 0:
            c += t.coeff
        else:
            rest.append(t)
    return c, PhgSeries(f.lattice, rest, f.trunc_order, f.tag, validate=False)


def _corner_gain(f: PhgSeries) -> Fraction:
    """Smallest xpow + ypow over terms; the order gained per power of f."""
    gains = [t.xpow + t.ypow for t in f.terms]
    return min(gains) if gains else Fraction(10 ** 6)


def _geometric_sum(w: PhgSeries, coeffs) -> PhgSeries:
    """sum_k coeffs[k] * w^k for a series w vanishing at the corner."""
    gain = _corner_gain(w)
    if w.terms and gain <= 0:
        raise InputError(
            "series expansion requires the perturbation to vanish at the "
            f"corner; smallest corner order is {gain}")
    kmax = len(coeffs) - 1
    if w.terms:
        kmax = min(kmax, int(math.ceil(float(w.trunc_order / gain))) + 1)
    out = srs.constant(coeffs[0], w.lattice, w.trunc_order)
    wk = None
    for k in range(1, kmax + 1):
        wk = w if wk is None else mul(wk, w)
        if not wk.terms:
            break
        out = add(out, scale(wk, coeffs[k]))
    return out


def reciprocal(f: PhgSeries) -> PhgSeries:
    """1/f for a series with invertible constant part."""
    c, rest = _split_constant(f)
    if abs(c) < 1e-12:
        raise DegenerateMetric("cannot invert a series vanishing at the corner")
    w = scale(rest, 1.0 / c)
    n = 40
    return scale(_geometric_sum(w, [(-1.0) ** k for k in range(n)]), 1.0 / c)


def exp_series(f: PhgSeries) -> PhgSeries:
    """exp(f) = e^c * sum (f - c)^k / k! for f with constant part c."""
    c, rest = _split_constant(f)
    n = 40
    out = _geometric_sum(rest, [1.0 / math.factorial(k) for k in range(n)])
    return scale(out, complex(np.exp(c)))


def fractional_power(f: PhgSeries, r) -> PhgSeries:
    """f^r for real r, f = c(1 + w) with c > 0 and w corner-vanishing."""
    c, rest = _split_constant(f)
    if abs(c) < 1e-12 or (c.real <= 0 and abs(c.imag) < 1e-12):
        raise DegenerateMetric(
            "fractional power needs a positive constant part")
    w = scale(rest, 1.0 / c)
    r = float(r)
    n = 40
    coeffs = [1.0]
    for k in range(1, n):
        coeffs.append(coeffs[-1] * (r - k + 1) / k)
    return scale(_geometric_sum(w, coeffs), complex(c) ** r)


def _log1p_series(w: PhgSeries) -> PhgSeries:
    n = 40
    coeffs = [0.0] + [(-1.0) ** (k + 1) / k for k in range(1, n)]
    return _geometric_sum(w, coeffs)


def integrate_x_from_0(f: PhgSeries) -> PhgSeries:
    """int_0^x f(s, y) ds; every term needs xpow > -1."""
    terms = []
    for t in f.terms:
        if t.xpow <= -1:
            raise InputError(
                f"term x^{t.xpow} is not integrable from x = 0")
        for c, pw, lg in _antiderivative(t.xpow, t.xlog):
            terms.append(PhgTerm(t.coeff * c, pw, t.ypow, lg, t.ylog, t.mode))
    return PhgSeries(f.lattice, terms, f.trunc_order + 1, f.tag,
                     validate=False)


def integrate_y_from_0(f: PhgSeries) -> PhgSeries:
    """int_0^y f(x, s) ds; every term needs ypow > -1."""
    terms = []
    for t in f.terms:
        if t.ypow <= -1:
            raise InputError(
                f"term y^{t.ypow} is not integrable from y = 0")
        for c, pw, lg in _antiderivative(t.ypow, t.ylog):
            terms.append(PhgTerm(t.coeff * c, t.xpow, pw, t.xlog, lg, t.mode))
    return PhgSeries(f.lattice, terms, f.trunc_order, f.tag, validate=False)


def _prune_ypow(f: PhgSeries, ymax) -> PhgSeries:
    ymax = _frac(ymax)
    terms = [t for t in f.terms if t.ypow <= ymax]
    return PhgSeries(f.lattice, terms, f.trunc_order, f.tag, validate=False)


def _shift_xpow(f: PhgSeries, d) -> PhgSeries:
    d = _frac(d)
    terms = [PhgTerm(t.coeff, t.xpow + d, t.ypow, t.xlog, t.ylog, t.mode)
             for t in f.terms]
    return PhgSeries(f.lattice, terms, f.trunc_order + d, f.tag,
                     validate=False)


def substitute_x(f: PhgSeries, u: PhgSeries) -> PhgSeries:
    """f(x (1 + u(x, y)), y) as a series; u must vanish at the corner.

    Powers map through (1 + u)^p and ln x maps to ln x + log(1 + u), so
    log-polyhomogeneous structure is preserved exactly (up to truncation).
    """
    if not u.terms:
        return f
    lat = f.lattice.merged(u.lattice)
    one_plus_u = add(srs.constant(1.0, lat, f.trunc_order), u)
    logfac = _log1p_series(u)
    out = zero(lat, f.trunc_order, f.tag)
    for t in f.terms:
        base = make_monomial(t.coeff, t.xpow, t.ypow, 0, t.ylog, t.mode,
                             lattice=lat, trunc_order=f.trunc_order, tag=TAG_XY)
        piece = mul(base, fractional_power(one_plus_u, float(t.xpow)))
        # ln^j(x(1+u)) = sum_i C(j, i) ln^i x * log(1+u)^{j-i}
        if t.xlog:
            expanded = zero(lat, f.trunc_order, f.tag)
            lf = srs.constant(1.0, lat, f.trunc_order)
            for i in range(t.xlog, -1, -1):
                ln_i = make_monomial(math.comb(t.xlog, i), 0, 0, i, 0,
                                     lattice=lat, trunc_order=f.trunc_order)
                expanded = add(expanded, mul(ln_i, lf))
                lf = mul(lf, logfac)
            piece = mul(piece, expanded)
        out = add(out, piece)
    return out


# -- metric specification ------------------------------------------------------


@dataclass(frozen=True)
class MetricSpec:
    """Metric data on the triangle, spherically symmetric by default.

    chi, gamma, mu, beta are scalar PhgSeries (beta only for Bondi form).
    """

    n: int
    form: str
    chi: PhgSeries
    gamma: PhgSeries
    mu: PhgSeries
    beta: PhgSeries = None
    spherical: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise InputError("space dimension n must be >= 2")
        if self.form not in (FORM_NULL_NORMAL, FORM_BONDI):
            raise InputError(f"unknown metric form {self.form!r}")
        if self.form == FORM_BONDI and self.beta is None:
            raise InputError("Bondi form requires a beta series")
        for name, f in (("chi", self.chi), ("gamma", self.gamma)):
            if f.terms and f.min_xpow() <= 0:
                raise InputError(
                    f"{name} must vanish at x = 0 in null-adapted coordinates")

    @property
    def delta(self) -> Fraction:
        """Expansion step 1 for odd space dimension, 1/2 for even."""
        return Fraction(1) if self.n % 2 == 1 else Fraction(1, 2)


def minkowski_metric(n=3, lattice=None, trunc_order=None) -> MetricSpec:
    if lattice is None:
        lattice = srs.ExponentLattice(Fraction(1) if n % 2 == 1
                                      else Fraction(1, 2))
    one = srs.constant(1.0, lattice, trunc_order)
    z = zero(lattice, trunc_order)
    return MetricSpec(n, FORM_NULL_NORMAL, z, z, one)


# -- frame ---------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    """Null frame e_- = 2(d_y + w d_x - gamma#), e_+ = -2 d_x.

    w = -chi + |gamma|^2_mu.  inverse_blocks holds the components of the
    inverse metric: g^xx = 4w, g^xy = 2, g^xA = -2 gamma#, g^AA = 1/mu.
    """

    e_minus_dy: PhgSeries
    e_minus_dx: PhgSeries
    e_minus_dv: PhgSeries
    e_plus_dx: PhgSeries
    e_A_coeff: PhgSeries
    w: PhgSeries
    mu_inv: PhgSeries
    inverse_blocks: dict = field(repr=False, default=None)


_SAMPLE_POINTS = [(0.01 * k, 0.01 * k + 0.07 * j)
                  for k in range(1, 6) for j in range(1, 5)]


def build_frame(metric: MetricSpec) -> Frame:
    if metric.form != FORM_NULL_NORMAL:
        raise InputError("convert to null normal form first (convert_bondi)")
    for (x, y) in _SAMPLE_POINTS:
        if abs(evaluate(metric.mu, x, y, v=0.0)) < 1e-10:
            raise DegenerateMetric(f"det mu vanishes near (x, y) = ({x}, {y})")
    mu_inv = reciprocal(metric.mu)
    gamma_sharp = mul(metric.gamma, mu_inv)
    w = add(scale(metric.chi, -1.0), mul(metric.gamma, gamma_sharp))
    lat = w.lattice
    two = srs.constant(2.0, lat, w.trunc_order)
    blocks = {
        "xx": scale(w, 4.0),
        "xy": two,
        "xv": scale(gamma_sharp, -2.0),
        "vv": mu_inv,
    }
    return Frame(
        e_minus_dy=two,
        e_minus_dx=scale(w, 2.0),
        e_minus_dv=scale(gamma_sharp, -2.0),
        e_plus_dx=srs.constant(-2.0, lat, w.trunc_order),
        e_A_coeff=fractional_power(metric.mu, -0.5),
        w=w,
        mu_inv=mu_inv,
        inverse_blocks=blocks,
    )


# -- Bondi conversion ----------------------------------------------------------


def convert_bondi(metric: MetricSpec) -> MetricSpec:
    """Redefine x so the dx (x)_s dy coefficient becomes 1.

    The new coordinate is X(x, y) = int_0^x e^{2 beta(s, y)} ds; chi and
    gamma pick up -d_y X and -d_v X / 2, and everything is re-expressed as
    a series in the new x by inverting X order by order.
    """
    if metric.form != FORM_BONDI:
        return metric
    beta = metric.beta
    if beta.terms and beta.min_xpow() < 2:
        raise InputError("Bondi beta must be O(x^2 logs)")
    lat = beta.lattice
    trunc = beta.trunc_order
    # X = x + h with h = int_0^x (e^{2 beta} - 1)
    e2b = exp_series(scale(beta, 2.0))
    h = integrate_x_from_0(add(e2b, srs.constant(-1.0, lat, trunc)))
    chi_new = add(metric.chi, scale(differentiate(h, "dy"), -1.0))
    gamma_new = add(metric.gamma, scale(differentiate(h, "dv"), -0.5))

    # invert X: x = X_new (1 + u), fixed point u <- -(h o x) / X_new
    u = zero(lat, trunc)
    if h.terms:
        gain = _corner_gain(h) - 1
        n_iter = int(math.ceil(float(trunc / gain))) + 2 if gain > 0 else 2
        for _ in range(n_iter):
            u = scale(_shift_xpow(substitute_x(h, u), Fraction(-1)), -1.0)
    chi_new = substitute_x(chi_new, u)
    gamma_new = substitute_x(gamma_new, u)
    mu_new = substitute_x(metric.mu, u)
    return MetricSpec(metric.n, FORM_NULL_NORMAL, chi_new, gamma_new, mu_new,
                      spherical=metric.spherical)


# -- coordinate straightening ---------------------------------------------------


@dataclass(frozen=True)
class Straightening:
    """Hatted chart x_hat = x(1 + xi(y)), v_hat = v + x eta(y)."""

    xi: PhgSeries
    eta: PhgSeries
    upsilon: PhgSeries
    big_gamma: PhgSeries


def _x_linear_part(f: PhgSeries) -> PhgSeries:
    """Coefficient of x^1 (no x-logs) as a series in y."""
    terms = [PhgTerm(t.coeff, Fraction(0), t.ypow, 0, t.ylog, t.mode)
             for t in f.terms if t.xpow == 1 and t.xlog == 0]
    return PhgSeries(f.lattice, terms, f.trunc_order, f.tag, validate=False)


def straighten_coordinates(metric: MetricSpec) -> Straightening:
    """Solve Upsilon(1 + xi) + xi' = 0, Gamma + eta' + eta Upsilon = 0.

    Upsilon and Gamma are the x-linear coefficients of -chi + |gamma|^2 and
    of -gamma#; initial values xi(0) = eta(0) = 0.  Solutions are Picard
    iterates truncated at the series truncation order in y.
    """
    if metric.form != FORM_NULL_NORMAL:
        raise InputError("straighten after converting to null normal form")
    mu_inv = reciprocal(metric.mu)
    w = add(scale(metric.chi, -1.0),
            mul(metric.gamma, mul(metric.gamma, mu_inv)))
    ups = _x_linear_part(w)
    gam = _x_linear_part(scale(mul(metric.gamma, mu_inv), -1.0))
    trunc = w.trunc_order
    n_iter = max(int(math.ceil(float(trunc))) + 2, 4)
    xi = zero(w.lattice, trunc)
    one = srs.constant(1.0, w.lattice, trunc)
    for _ in range(n_iter):
        xi = scale(integrate_y_from_0(mul(ups, add(one, xi))), -1.0)
        xi = _prune_ypow(xi, trunc)
    eta = zero(w.lattice, trunc)
    for _ in range(n_iter):
        eta = scale(integrate_y_from_0(add(gam, mul(eta, ups))), -1.0)
        eta = _prune_ypow(eta, trunc)
    return Straightening(xi=xi, eta=eta, upsilon=ups, big_gamma=gam)


# -- conformal identity helpers (Minkowski, radial) -----------------------------


def radial_box(u, x, y, h):
    """Flat wave operator on a radial field in null coordinates.

    For radial f in 3 space dimensions, Box f = (1/r)(d_r^2 - d_t^2)(r f)
    = (4/r) d_x d_y (r f) with x = r - t, y = r + t; the mixed derivative
    is a centered 4-point cross of step h.
    """
    def rf(a, b):
        return 0.5 * (a + b) * u(a, b)
    mixed = (rf(x + h, y + h) - rf(x + h, y - h)
             - rf(x - h, y + h) + rf(x - h, y - h)) / (4.0 * h * h)
    return 4.0 * mixed / (0.5 * (x + y))


def conformal_inversion_residual(u, xp, yp, h):
    """Residual of Box(Omega^{-1} f) - Omega^{-3} Box f at one point.

    The conformal inversion of Minkowski space maps null coordinates
    (x', y') to (x, y) = (1/y', 1/x'); the pulled-back flat metric equals
    Omega^{-2} times the flat metric of the primed chart with
    Omega = x' y', so the rescaled field (n = 3) is
    f~(x', y') = Omega^{-1} f = f(1/y', 1/x') / (x' y').  Both wave
    operators are flat and evaluated by radial_box with step h (scaled to
    comparable resolution on the unprimed side).
    """
    def ut(a, b):
        return u(1.0 / b, 1.0 / a) / (a * b)
    lhs = radial_box(ut, xp, yp, h)
    x0, y0 = 1.0 / yp, 1.0 / xp
    omega = xp * yp
    h_unprimed = h * min(x0 / xp, y0 / yp)
    rhs = radial_box(u, x0, y0, h_unprimed) / omega ** 3
    return lhs - rhs
