"""First-order reductions of wave equations on the triangle.

The canonical shape of the systems handled by the formal and numerical
solvers is

    d_y phi + B_pp phi + B_ps psi = L_pp phi + L_ps psi + a + G_phi,
    d_x psi + B_sp phi + B_ss psi = L_sp phi + L_ss psi + b + G_psi,

with psi split as (psi1, psi2), B-blocks PhgSeries-valued matrices, and
each L a first-order operator of the structural form
L = x L^x d_x + x L^y d_y (angular terms are retained only through the
Fourier-mode slot of the series algebra; the numerics are spherically
symmetric).  The optional nonlinearity has the scaling-normal form

    G = x^{-p delta} H(x, x^{q delta} psi1, x^{q delta + 1} psi2,
                       x^{q delta + 1} phi),

where H has a uniform zero of order m in its field arguments with
m > (p - 1/delta) / q.

The reduction of a scalar wave equation uses the null frame variables
psi0 = u, psi_minus = e_-(u), phi_plus = e_+(u); the wave-map source
assembles the exact quadratic-in-fields right-hand side from polynomial
Christoffel data in normal coordinates around the target limit point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (
    AsymmetricChristoffel,
    CurvatureViolation,
    InputError,
    OrderConditionViolated,
)
from . import series as srs
from .metric import (
    MetricSpec,
    _shift_xpow,
    build_frame,
    fractional_power,
    reciprocal,
)
from .series import (
    PhgSeries,
    _frac,
    add,
    differentiate,
    make_monomial,
    mat_zero,
    mul,
    scale,
    zero,
)

PSI0 = "psi0"
PSI_MINUS = "psi_minus"
PHI_PLUS = "phi_plus"


# -- polynomials in the frame fields --------------------------------------------


class FieldPolynomial:
    """Polynomial in field components with PhgSeries coefficients.

    Monomial keys are sorted tuples of ((field_name, component), power).
    """

    def __init__(self, lattice, trunc_order=None):
        self.lattice = lattice
        self.trunc_order = trunc_order
        self.terms = {}

    @staticmethod
    def _key(monomial):
        merged = {}
        for slot, power in monomial:
            if power:
                merged[slot] = merged.get(slot, 0) + power
        return tuple(sorted(merged.items()))

    def add_term(self, monomial, coefficient: PhgSeries):
        key = self._key(monomial)
        if key in self.terms:
            self.terms[key] = add(self.terms[key], coefficient)
        else:
            self.terms[key] = coefficient
        if not self.terms[key].terms:
            del self.terms[key]

    def uniform_zero_order(self) -> int:
        """Lowest total degree in the fields over all monomials."""
        if not self.terms:
            return 10 ** 6
        return min(sum(p for _, p in key) for key in self.terms)

    def evaluate(self, fields, x, y, v=None):
        """fields: dict (name, comp) -> numeric value (scalar or array)."""
        total = 0.0
        for key, coeff in self.terms.items():
            val = srs.evaluate_grid(coeff, x, y, v)
            for slot, power in key:
                val = val * fields[slot] ** power
            total = total + val
        return total

    def map_coefficients(self, op) -> "FieldPolynomial":
        out = FieldPolynomial(self.lattice, self.trunc_order)
        for key, coeff in self.terms.items():
            out.terms[key] = op(coeff)
        return out


# -- nonlinearity in scaling-normal form ----------------------------------------


@dataclass(frozen=True)
class Nonlinearity:
    """G = x^{-p delta} H(x^{q delta} psi1, x^{q delta+1} psi2,
    x^{q delta+1} phi).

    H maps exponent tuples (over the concatenated rescaled arguments
    psi1 + psi2 + phi) to scalar or PhgSeries coefficients; `targets`
    lists, for each H output component, which equation row receives it
    ("phi", i) or ("psi", i) together with a scalar prefactor.
    """

    p: int
    q: int
    H: dict
    targets: tuple
    delta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "delta", _frac(self.delta))
        if self.q < 1:
            raise InputError("nonlinearity requires q >= 1")
        if not self.H:
            return
        m = self.uniform_zero_order()
        bound = (self.p - 1 / self.delta) / self.q
        if not m > bound:
            raise OrderConditionViolated(
                f"uniform zero order m = {m} fails m > (p - 1/delta)/q = "
                f"{float(bound):g} (p={self.p}, q={self.q}, "
                f"delta={self.delta})")

    def uniform_zero_order(self) -> int:
        return min(sum(exps) for exps in self.H) if self.H else 10 ** 6


# -- the assembled system --------------------------------------------------------


@dataclass
class FirstOrderSystem:
    """Canonical first-order system on the triangle.

    B maps block names ("phiphi", "phipsi", "psiphi", "psipsi") to
    matrices of PhgSeries.  L maps the same names to {"x": matrix,
    "y": matrix}; the operator acting on a field vector is
    x L^x d_x + x L^y d_y.  diagonal_data holds the values of (phi, psi)
    on the diagonal y = x, as PhgSeries in x (tag A_{x=0}) or callables.
    """

    n_phi: int
    n_psi1: int
    n_psi2: int
    lattice: srs.ExponentLattice
    delta: Fraction
    beta: Fraction
    B: dict
    L: dict
    a: list
    b: list
    diagonal_phi: list
    diagonal_psi: list
    nonlinearity: Nonlinearity = None
    G_phi: list = None         # FieldPolynomial per phi row (numeric form)
    G_psi: list = None
    chart: str = "xy"
    field_names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta = _frac(self.delta)
        self.beta = _frac(self.beta)
        if self.chart not in ("xy", "xtau"):
            raise InputError(f"unknown chart {self.chart!r}")

    @property
    def n_psi(self):
        return self.n_psi1 + self.n_psi2

    def check_structure(self):
        """Assert the structural hypotheses on the assembled series.

        L^mu_{phiphi} must carry an extra x^delta; B_{phiphi} must split
        into a part smooth at the corner plus an x^delta remainder.
        """
        for which in ("x", "y"):
            for row in self.L["phiphi"][which]:
                for entry in row:
                    if entry.terms and entry.min_xpow() < self.delta:
                        raise InputError(
                            "L_phiphi coefficients must lie in "
                            f"x^{self.delta} * lattice")
        for row in self.B["phiphi"]:
            for entry in row:
                for t in entry.terms:
                    smooth = (t.xpow == int(t.xpow) and t.xpow >= 0
                              and t.xlog == 0)
                    if not smooth and t.xpow < self.delta:
                        raise InputError(
                            "B_phiphi must be smooth + x^delta lattice")
        return True


def _zero_matrix(rows, cols, lattice, trunc):
    return [list(row) for row in mat_zero(rows, cols, lattice, trunc)]


def _empty_blocks(n_phi, n_psi, lattice, trunc):
    B = {
        "phiphi": _zero_matrix(n_phi, n_phi, lattice, trunc),
        "phipsi": _zero_matrix(n_phi, n_psi, lattice, trunc),
        "psiphi": _zero_matrix(n_psi, n_phi, lattice, trunc),
        "psipsi": _zero_matrix(n_psi, n_psi, lattice, trunc),
    }
    L = {name: {"x": _zero_matrix(*shape, lattice, trunc),
                "y": _zero_matrix(*shape, lattice, trunc)}
         for name, shape in (("phiphi", (n_phi, n_phi)),
                             ("phipsi", (n_phi, n_psi)),
                             ("psiphi", (n_psi, n_phi)),
                             ("psipsi", (n_psi, n_psi)))}
    return B, L


def _log_derivative(f: PhgSeries, which: str) -> PhgSeries:
    """(d f / f) for f with invertible constant part."""
    return mul(differentiate(f, which), reciprocal(f))


def reduce_wave(metric: MetricSpec, H=None, curvature=None, chart="xy",
                source=None, diagonal_phi=None, diagonal_psi=None,
                trunc_order=None) -> FirstOrderSystem:
    """Reduce Box_g u = F(u) (spherical, conformally rescaled) to first order.

    H, if given, is a dict {power: coefficient} for the polynomial
    nonlinearity of the physical equation; the conformal rescaling
    u~ = Omega^{-(n-1)/2} u with Omega = x converts the monomial u^l into
    x^{l(n-1)/2 - (n+3)/2} u~^l, which is stored in scaling-normal form
    with q = (n-1)/(2 delta) and p = (n+3)/(2 delta).

    curvature, if given, is the series for R~ Omega^2 - R; it must lie in
    x^{(n+3)/2} * lattice and contributes the zero-order term
    (n-1)/(4n) (R~ - R Omega^{-2}) psi0.
    """
    frame = build_frame(metric)
    n = metric.n
    delta = metric.delta
    lat = frame.w.lattice
    trunc = trunc_order if trunc_order is not None else frame.w.trunc_order
    n_phi, n_psi = 1, 2

    B, L = _empty_blocks(n_phi, n_psi, lat, trunc)
    half = srs.constant(0.5, lat, trunc)
    B["psiphi"][0][0] = half            # d_x psi0 + phi_plus / 2 = 0

    w = frame.w
    mu_is_trivial = (len(metric.mu.terms) == 1
                     and metric.mu.terms[0].key == (0, 0, 0, 0, 0))
    if w.terms or not mu_is_trivial:
        sqrt_mu = fractional_power(metric.mu, 0.5)
        mlogx = _log_derivative(sqrt_mu, "dx")   # m_x / m
        mlogy = _log_derivative(sqrt_mu, "dy")   # m_y / m
        w_x = differentiate(w, "dx")
        # (m w)_x / m = w_x + (m_x / m) w
        mw_x = add(w_x, mul(mlogx, w))

        # psi_minus row: d_x psi_- + B phi_+ + C psi_- = F/2 with
        # B = w_x - (m_y/m)/2 - (mw)_x/m + (m_x/m) w / 2
        bp = add(add(scale(w_x, 1.0), scale(mlogy, -0.5)),
                 add(scale(mw_x, -1.0), scale(mul(mlogx, w), 0.5)))
        B["psiphi"][1][0] = bp
        B["psipsi"][1][1] = scale(mlogx, 0.5)

        # phi_plus row: d_y phi_+ + w d_x phi_+ + ... = -F/2
        if w.terms:
            L["phiphi"]["x"][0][0] = scale(_shift_xpow(w, Fraction(-1)), -1.0)
        coef = add(add(scale(mlogy, 0.5), mw_x),
                   scale(mul(mlogx, w), -0.5))
        B["phiphi"][0][0] = coef
        B["phipsi"][0][1] = scale(mlogx, -0.5)

    a = [zero(lat, trunc)]
    b = [zero(lat, trunc), zero(lat, trunc)]
    if source is not None:
        # external F: a -> -F/2 on the phi row, b -> +F/2 on psi_minus
        a[0] = add(a[0], scale(source, -0.5))
        b[1] = add(b[1], scale(source, 0.5))

    if curvature is not None:
        need = Fraction(n + 3, 2)
        if curvature.terms and curvature.min_xpow() < need:
            raise CurvatureViolation(
                f"curvature series must lie in x^{need} * lattice; found "
                f"leading power {curvature.min_xpow()}")
        # F gains (n-1)/(4n) (R~ - R Omega^{-2}) psi0; with Omega = x the
        # coefficient is (n-1)/(4n) x^{(n-1)/2 - (n+3)/2 + ...} = series/x^2
        curv = scale(_shift_xpow(curvature, Fraction(-2)),
                     (n - 1) / (4.0 * n))
        B["phipsi"][0][0] = add(B["phipsi"][0][0], scale(curv, 0.5))
        B["psipsi"][1][0] = add(B["psipsi"][1][0], scale(curv, -0.5))

    nonlinearity = None
    G_phi = G_psi = None
    if H:
        q_frac = Fraction(n - 1, 2) / delta
        p_frac = Fraction(n + 3, 2) / delta
        if q_frac.denominator != 1 or p_frac.denominator != 1:
            raise InputError("rescaling powers are off-lattice for this n")
        q, p = int(q_frac), int(p_frac)
        Hmap = {}
        for ell, c in H.items():
            if ell < 1:
                raise InputError("nonlinearity must vanish at u = 0")
            Hmap[(ell, 0, 0)] = c
        nonlinearity = Nonlinearity(p=p, q=q, H=Hmap,
                                    targets=(("phi", 0, -0.5),
                                             ("psi", 1, 0.5)),
                                    delta=delta)
        # numeric form: F_nl = sum_l c_l x^{l(n-1)/2 - (n+3)/2} psi0^l
        G_phi = [FieldPolynomial(lat, trunc)]
        G_psi = [FieldPolynomial(lat, trunc), FieldPolynomial(lat, trunc)]
        for ell, c in H.items():
            xpow = Fraction(ell * (n - 1) - (n + 3), 2)
            lat_c = lat if xpow >= lat.offset else lat.with_offset(xpow)
            coeff = make_monomial(c, xpow, lattice=lat_c, trunc_order=trunc)
            mono = (((PSI0, 0), ell),)
            G_phi[0].add_term(mono, scale(coeff, -0.5))
            G_psi[1].add_term(mono, scale(coeff, 0.5))

    beta = Fraction(-1) + delta if (H or curvature is not None) else Fraction(0)
    system = FirstOrderSystem(
        n_phi=n_phi, n_psi1=1, n_psi2=1, lattice=lat, delta=delta, beta=beta,
        B=B, L=L, a=a, b=b,
        diagonal_phi=list(diagonal_phi) if diagonal_phi else [None],
        diagonal_psi=list(diagonal_psi) if diagonal_psi else [None, None],
        nonlinearity=nonlinearity, G_phi=G_phi, G_psi=G_psi, chart=chart,
        field_names={"phi_slots": [(PHI_PLUS, 0)],
                     "psi_slots": [(PSI0, 0), (PSI_MINUS, 0)]},
    )
    system.check_structure()
    return system


# -- wave-map source -------------------------------------------------------------


@dataclass(frozen=True)
class ConformalFactors:
    """Frame derivatives of the conformal factor entering the source.

    omega_pow is Omega^{(n-1)/2}; the ratios e_+(Omega)/Omega etc. are
    bounded series near the conformal boundary.
    """

    omega_pow: PhgSeries
    e_plus_ratio: PhgSeries
    e_minus_ratio: PhgSeries
    grad_sq_ratio: PhgSeries
    curvature: PhgSeries


def wavemap_source(christoffels, n: int, factors: ConformalFactors,
                   n_components: int):
    """Assemble the wave-map right-hand side F^a as field polynomials.

    christoffels maps (a, b, c) to a polynomial in the target fields,
    itself a dict {exponent tuple over components: coefficient}, in normal
    coordinates around the limit point (so Gamma(0) = 0).  Returns one
    FieldPolynomial per component a, in the spherically symmetric frame
    variables (psi0^b, psi_minus^b, phi_plus^b):

    F^a = -Gamma^a_bc(Omega^{(n-1)/2} psi0) Omega^{(n-1)/2} {
            -phi_+^b psi_-^c
            - (n-1)/2 [ (e_+(O)/O) psi0^b psi_-^c
                        + (e_-(O)/O) psi0^c phi_+^b ]
            + (n-1)^2/4 (|grad O|^2/O^2) psi0^b psi0^c }
          + curvature * psi0^a.
    """
    for (a, bb, c), poly in christoffels.items():
        other = christoffels.get((a, c, bb), {})
        if _poly_normalized(poly) != _poly_normalized(other):
            raise AsymmetricChristoffel(
                f"Gamma^{a}_{bb}{c} != Gamma^{a}_{c}{bb}")
        for exps, _ in poly.items():
            if sum(exps) < 1:
                raise InputError(
                    "Christoffel symbols must vanish at the limit point")

    lat = factors.omega_pow.lattice
    trunc = factors.omega_pow.trunc_order
    km = (n - 1) / 2.0
    out = [FieldPolynomial(lat, trunc) for _ in range(n_components)]

    for a in range(n_components):
        out[a].add_term((((PSI0, a), 1),), factors.curvature)

    for (a, bb, c), poly in christoffels.items():
        for exps, gcoeff in poly.items():
            deg = sum(exps)
            # Gamma evaluated at Omega^{(n-1)/2} psi0 picks up omega_pow^deg;
            # one more omega_pow multiplies the whole bracket
            coeff_base = scale(_series_power(factors.omega_pow, deg + 1),
                               -complex(gcoeff))
            psi0_mono = tuple(((PSI0, d), e) for d, e in enumerate(exps) if e)
            bracket = [
                ((((PHI_PLUS, bb), 1), ((PSI_MINUS, c), 1)),
                 srs.constant(-1.0, lat, trunc)),
                ((((PSI0, bb), 1), ((PSI_MINUS, c), 1)),
                 scale(factors.e_plus_ratio, -km)),
                ((((PSI0, c), 1), ((PHI_PLUS, bb), 1)),
                 scale(factors.e_minus_ratio, -km)),
                ((((PSI0, bb), 1), ((PSI0, c), 1)),
                 scale(factors.grad_sq_ratio, km * km)),
            ]
            for mono, fac in bracket:
                coeff = mul(coeff_base, fac)
                if coeff.terms:
                    out[a].add_term(psi0_mono + mono, coeff)
    return out


def _poly_normalized(poly):
    return {exps: complex(c) for exps, c in poly.items()
            if abs(complex(c)) > 0}


def _series_power(f: PhgSeries, k: int) -> PhgSeries:
    out = srs.constant(1.0, f.lattice, f.trunc_order)
    for _ in range(k):
        out = mul(out, f)
    return out
