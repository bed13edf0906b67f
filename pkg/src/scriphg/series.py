"""Exact algebra of log-polyhomogeneous series in two null coordinates (x, y).

A series is a finite sum of terms

    c * x^p * y^q * ln^j(x) * ln^l(y) * e^{i m v}

with rational exponents p, q on a lattice of spacing delta = 1/k, integer
log powers j, l and an integer angular Fourier index m (the derivative
along the angular coordinate v acts as multiplication by i*m).  Series
carry a truncation order: discarded terms are O(x^trunc * ln^N) for some
finite N.

Three space tags are tracked:

    "xy"  -- functions on the triangle 0 < x <= y (the generic class),
    "x=0" -- functions of x alone (ypow = ylog = 0 on every term),
    "y=0" -- functions of y alone (xpow = xlog = 0 on every term).

The two integral operators

    I1(f)(x, y) = integral_x^y f(s, y) ds     (x-slot),
    I2(f)(x, y) = integral_x^y f(x, s) ds     (y-slot),

are exact on this class: the antiderivative of s^p ln^j s is itself a
finite combination of such terms (with a log branch at p = -1), and both
endpoint substitutions stay on the lattice.  I1 maps x^b y^g * (xy-class)
into y^{b+g+1} * (y=0 class) plus x^{b+1} y^g * (xy class); I2 maps it
into x^{b+g+1} * (x=0 class) plus x^b y^{g+1} * (xy class).  These
structural splittings are what the asymptotic arguments run on, so they
are exposed via `calka_split`.

All values are immutable; every operation returns a new series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DivergentComposition,
    DomainError,
    LatticeMismatch,
    OffLattice,
    TruncationTooLow,
)

#: default global truncation order (in x-order units)
DEFAULT_TRUNC = Fraction(4)

#: coefficients below this magnitude are pruned during canonicalization
PRUNE_TOL = 1e-14

TAG_XY = "xy"
TAG_X0 = "x=0"
TAG_Y0 = "y=0"
_TAGS = (TAG_XY, TAG_X0, TAG_Y0)


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**12)
    return Fraction(value)


@dataclass(frozen=True)
class ExponentLattice:
    """Admissible exponent set: x-powers in offset + delta*N, y-powers in delta*Z.

    `offset` is the global weight shift (the beta of weighted data); it must
    itself be a multiple of delta so that products and sums of weighted
    series stay representable.
    """

    delta: Fraction
    offset: Fraction = Fraction(0)

    def __post_init__(self):
        delta = _frac(self.delta)
        offset = _frac(self.offset)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "offset", offset)
        if delta <= 0 or delta.numerator != 1:
            raise OffLattice(f"delta must be 1/k for integer k >= 1, got {delta}")
        if offset % delta != 0:
            raise OffLattice(f"offset {offset} is not a multiple of delta {delta}")

    def on_grid(self, p: Fraction) -> bool:
        return p % self.delta == 0

    def with_offset(self, offset) -> "ExponentLattice":
        return ExponentLattice(self.delta, _frac(offset))

    def merged(self, other: "ExponentLattice") -> "ExponentLattice":
        if self.delta != other.delta:
            raise LatticeMismatch(
                f"delta mismatch: {self.delta} vs {other.delta}")
        return ExponentLattice(self.delta, min(self.offset, other.offset))


@dataclass(frozen=True)
class PhgTerm:
    """One monomial c * x^p y^q ln^j x ln^l y * e^{imv}."""

    coeff: complex
    xpow: Fraction
    ypow: Fraction
    xlog: int
    ylog: int
    mode: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeff", complex(self.coeff))
        object.__setattr__(self, "xpow", _frac(self.xpow))
        object.__setattr__(self, "ypow", _frac(self.ypow))
        if self.xlog < 0 or self.ylog < 0:
            raise OffLattice("log powers must be nonnegative")

    @property
    def key(self):
        return (self.xpow, self.ypow, self.xlog, self.ylog, self.mode)


def _check_term(term: PhgTerm, lattice: ExponentLattice, tag: str) -> None:
    p, q = term.xpow, term.ypow
    if not lattice.on_grid(p) or not lattice.on_grid(q):
        raise OffLattice(f"exponents ({p}, {q}) not on delta={lattice.delta} grid")
    if tag == TAG_X0:
        if q != 0 or term.ylog != 0:
            raise OffLattice("A_{x=0} terms must have ypow = ylog = 0")
        if p < lattice.offset:
            raise OffLattice(f"xpow {p} below lattice offset {lattice.offset}")
    elif tag == TAG_Y0:
        if p != 0 or term.xlog != 0:
            raise OffLattice("A_{y=0} terms must have xpow = xlog = 0")
        if q < lattice.offset:
            raise OffLattice(f"ypow {q} below lattice offset {lattice.offset}")
    else:
        if p < lattice.offset:
            raise OffLattice(f"xpow {p} below lattice offset {lattice.offset}")
        if p + q < lattice.offset:
            raise OffLattice(
                f"term x^{p} y^{q} violates ypow >= -(xpow - offset) "
                f"(offset {lattice.offset})")


class PhgSeries:
    """Canonical, immutable finite log-polyhomogeneous series."""

    __slots__ = ("lattice", "terms", "trunc_order", "tag", "_hash")

    def __init__(self, lattice, terms, trunc_order=None, tag=TAG_XY,
                 validate=True):
        if tag not in _TAGS:
            raise OffLattice(f"unknown space tag {tag!r}")
        trunc = DEFAULT_TRUNC if trunc_order is None else _frac(trunc_order)
        merged = {}
        for t in terms:
            if not isinstance(t, PhgTerm):
                t = PhgTerm(*t)
            if t.key in merged:
                merged[t.key] = PhgTerm(merged[t.key].coeff + t.coeff, *t.key)
            else:
                merged[t.key] = t
        kept = tuple(
            merged[k] for k in sorted(merged)
            if abs(merged[k].coeff) >= PRUNE_TOL and k[0] < trunc)
        if validate:
            for t in kept:
                _check_term(t, lattice, tag)
        object.__setattr__(self, "lattice", lattice)
        object.__setattr__(self, "terms", kept)
        object.__setattr__(self, "trunc_order", trunc)
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("PhgSeries is immutable")

    # -- basic queries -------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def min_xpow(self) -> Fraction:
        """Minimal x-exponent; for an empty series, the truncation order."""
        if not self.terms:
            return self.trunc_order
        return min(t.xpow for t in self.terms)

    def min_corner_order(self) -> Fraction:
        """min over terms of xpow + min(ypow, 0): decay order at the corner."""
        if not self.terms:
            return self.trunc_order
        return min(t.xpow + min(t.ypow, Fraction(0)) for t in self.terms)

    def coefficient(self, xpow, ypow=0, xlog=0, ylog=0, mode=0) -> complex:
        key = (_frac(xpow), _frac(ypow), xlog, ylog, mode)
        for t in self.terms:
            if t.key == key:
                return t.coeff
        return 0j

    def __eq__(self, other):
        if not isinstance(other, PhgSeries):
            return NotImplemented
        return (self.lattice == other.lattice and self.terms == other.terms
                and self.trunc_order == other.trunc_order
                and self.tag == other.tag)

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(
                self, "_hash",
                hash((self.lattice, self.terms, self.trunc_order, self.tag)))
        return self._hash

    def __repr__(self):
        if not self.terms:
            body = "0"
        else:
            parts = []
            for t in self.terms:
                s = f"{t.coeff:g}" if t.coeff.imag == 0 else f"({t.coeff})"
                if t.xpow:
                    s += f"*x^{t.xpow}"
                if t.xlog:
                    s += f"*lnx^{t.xlog}"
                if t.ypow:
                    s += f"*y^{t.ypow}"
                if t.ylog:
                    s += f"*lny^{t.ylog}"
                if t.mode:
                    s += f"*e({t.mode}v)"
                parts.append(s)
            body = " + ".join(parts)
        return f"<{body} | O(x^{self.trunc_order}), {self.tag}>"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1))

    def __neg__(self):
        return scale(self, -1)

    def __mul__(self, other):
        if isinstance(other, PhgSeries):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)


# -- constructors ------------------------------------------------------------

def zero(lattice, trunc_order=None, tag=TAG_XY) -> PhgSeries:
    return PhgSeries(lattice, (), trunc_order, tag)


def make_monomial(coeff, xpow, ypow=0, xlog=0, ylog=0, mode=0, lattice=None,
                  trunc_order=None, tag=TAG_XY) -> PhgSeries:
    if lattice is None:
        raise OffLattice("make_monomial requires a lattice")
    term = PhgTerm(coeff, _frac(xpow), _frac(ypow), xlog, ylog, mode)
    if abs(term.coeff) >= PRUNE_TOL:
        _check_term(term, lattice, tag)
    return PhgSeries(lattice, (term,), trunc_order, tag)


def constant(value, lattice, trunc_order=None, tag=TAG_XY) -> PhgSeries:
    return make_monomial(value, 0, 0, lattice=lattice, trunc_order=trunc_order,
                         tag=tag)


def from_term_list(entries, lattice, trunc_order=None, tag=TAG_XY) -> PhgSeries:
    """Build from [(coeff, xpow, ypow, xlog, ylog, mode), ...] tuples.

    Shorter tuples are padded with zeros; exponents may be strings like
    "-1/2".
    """
    terms = []
    for e in entries:
        e = tuple(e) + (0,) * (6 - len(e))
        terms.append(PhgTerm(e[0], _frac(e[1]), _frac(e[2]),
                             int(e[3]), int(e[4]), int(e[5])))
    for t in terms:
        _check_term(t, lattice, tag)
    return PhgSeries(lattice, terms, trunc_order, tag)


# -- arithmetic ---------------------------------------------------------------

def _merge_tags(a: str, b: str) -> str:
    return a if a == b else TAG_XY


def add(f: PhgSeries, g: PhgSeries) -> PhgSeries:
    lattice = f.lattice.merged(g.lattice)
    return PhgSeries(lattice, f.terms + g.terms,
                     min(f.trunc_order, g.trunc_order),
                     _merge_tags(f.tag, g.tag), validate=False)


def scale(f: PhgSeries, c) -> PhgSeries:
    c = complex(c)
    terms = tuple(PhgTerm(c * t.coeff, *t.key) for t in f.terms)
    return PhgSeries(f.lattice, terms, f.trunc_order, f.tag, validate=False)


def mul(f: PhgSeries, g: PhgSeries) -> PhgSeries:
    lattice = ExponentLattice(f.lattice.merged(g.lattice).delta,
                              f.lattice.offset + g.lattice.offset)
    trunc = min(f.trunc_order + g.min_xpow(), g.trunc_order + f.min_xpow())
    acc = {}
    for a in f.terms:
        for b in g.terms:
            key = (a.xpow + b.xpow, a.ypow + b.ypow, a.xlog + b.xlog,
                   a.ylog + b.ylog, a.mode + b.mode)
            acc[key] = acc.get(key, 0j) + a.coeff * b.coeff
    terms = tuple(PhgTerm(c, *k) for k, c in acc.items())
    return PhgSeries(lattice, terms, trunc,
                     _merge_tags(f.tag, g.tag), validate=False)


def power(f: PhgSeries, n: int) -> PhgSeries:
    if n < 0:
        raise OffLattice("negative powers are not series operations")
    out = constant(1.0, f.lattice, f.trunc_order if n == 0 else None, f.tag)
    if n == 0:
        return out
    out = f
    for _ in range(n - 1):
        out = mul(out, f)
    return out


def differentiate(f: PhgSeries, which: str) -> PhgSeries:
    """Apply one of x*d/dx ("xdx"), y*d/dy ("ydy"), d/dx ("dx"), d/dy ("dy"),
    d/dv ("dv")."""
    terms = []
    if which == "dv":
        for t in f.terms:
            terms.append(PhgTerm(1j * t.mode * t.coeff, *t.key))
        return PhgSeries(f.lattice, terms, f.trunc_order, f.tag, validate=False)
    if which in ("xdx", "dx"):
        shift = Fraction(0) if which == "xdx" else Fraction(-1)
        for t in f.terms:
            terms.append(PhgTerm(t.coeff * t.xpow, t.xpow + shift, t.ypow,
                                 t.xlog, t.ylog, t.mode))
            if t.xlog:
                terms.append(PhgTerm(t.coeff * t.xlog, t.xpow + shift, t.ypow,
                                     t.xlog - 1, t.ylog, t.mode))
        lattice = f.lattice if which == "xdx" else \
            f.lattice.with_offset(f.lattice.offset - 1)
        trunc = f.trunc_order + shift
        tag = f.tag if f.tag != TAG_Y0 else TAG_Y0
        return PhgSeries(lattice, terms, trunc, tag, validate=False)
    if which in ("ydy", "dy"):
        shift = Fraction(0) if which == "ydy" else Fraction(-1)
        for t in f.terms:
            terms.append(PhgTerm(t.coeff * t.ypow, t.xpow, t.ypow + shift,
                                 t.xlog, t.ylog, t.mode))
            if t.ylog:
                terms.append(PhgTerm(t.coeff * t.ylog, t.xpow, t.ypow + shift,
                                     t.xlog, t.ylog - 1, t.mode))
        lattice = f.lattice if which == "ydy" else \
            f.lattice.with_offset(f.lattice.offset - 1)
        return PhgSeries(lattice, terms, f.trunc_order, f.tag, validate=False)
    raise OffLattice(f"unknown derivative {which!r}")


# -- integral operators -------------------------------------------------------

def _antiderivative(p: Fraction, j: int):
    """Exact antiderivative of s^p ln^j s as [(coeff, pow, logpow), ...].

    For p != -1 the usual integration-by-parts recursion; for p = -1 the
    log branch ln^{j+1}(s)/(j+1).
    """
    if p == -1:
        return [(1.0 / (j + 1), Fraction(0), j + 1)]
    out = []
    c = 1.0
    for i in range(j, -1, -1):
        c_i = c / float(p + 1)
        out.append((c_i, p + 1, i))
        c = -c_i * i
    return out


def integrate_I1(f: PhgSeries) -> PhgSeries:
    """I1(f)(x, y) = integral_x^y f(s, y) ds, integrating the x-slot."""
    lattice = f.lattice.with_offset(min(f.lattice.offset, Fraction(0)))
    terms = []
    qmin = Fraction(0)
    for t in f.terms:
        qmin = min(qmin, t.ypow)
        for c, pw, lg in _antiderivative(t.xpow, t.xlog):
            coeff = t.coeff * c
            # upper endpoint s = y: pure-y factor merges into (ypow, ylog)
            terms.append(PhgTerm(coeff, Fraction(0), t.ypow + pw,
                                 0, t.ylog + lg, t.mode))
            # lower endpoint s = x (subtracted)
            terms.append(PhgTerm(-coeff, pw, t.ypow, lg, t.ylog, t.mode))
    tag = TAG_Y0 if f.tag == TAG_Y0 else TAG_XY
    return PhgSeries(lattice, terms, f.trunc_order + 1, tag, validate=False)


def integrate_I2(f: PhgSeries) -> PhgSeries:
    """I2(f)(x, y) = integral_x^y f(x, s) ds, integrating the y-slot."""
    lattice = f.lattice.with_offset(min(f.lattice.offset, Fraction(0)))
    terms = []
    qmin = Fraction(0)
    for t in f.terms:
        qmin = min(qmin, t.ypow)
        for c, pw, lg in _antiderivative(t.ypow, t.ylog):
            coeff = t.coeff * c
            # upper endpoint s = y
            terms.append(PhgTerm(coeff, t.xpow, pw, t.xlog, lg, t.mode))
            # lower endpoint s = x: pure-x factor merges into (xpow, xlog)
            terms.append(PhgTerm(-coeff, t.xpow + pw, Fraction(0),
                                 t.xlog + lg, 0, t.mode))
    tag = TAG_X0 if f.tag == TAG_X0 else TAG_XY
    trunc = f.trunc_order + 1 + min(Fraction(0), qmin)
    return PhgSeries(lattice, terms, trunc, tag, validate=False)


def calka_split(g: PhgSeries, which: str, beta, gamma):
    """Split I1(g) or I2(g) into the two structural summands.

    For g in x^beta y^gamma * (xy class):

        I1(g) = y^{beta+gamma+1} * (y=0 part)  +  x^{beta+1} y^gamma * (xy part)
        I2(g) = x^{beta+gamma+1} * (x=0 part)  +  x^beta y^{gamma+1} * (xy part)

    Returns (boundary_part, bulk_part, leftovers); leftovers is nonempty only
    if a term fails both patterns (which the structural tests assert against).
    """
    beta, gamma = _frac(beta), _frac(gamma)
    out = integrate_I1(g) if which == "I1" else integrate_I2(g)
    boundary, bulk, leftovers = [], [], []
    for t in out.terms:
        if which == "I1":
            if t.xpow == 0 and t.xlog == 0 and t.ypow >= beta + gamma + 1:
                boundary.append(t)
            elif t.xpow >= beta + 1 and t.ypow >= gamma:
                bulk.append(t)
            else:
                leftovers.append(t)
        else:
            if t.ypow == 0 and t.ylog == 0 and t.xpow >= beta + gamma + 1:
                boundary.append(t)
            elif t.xpow >= beta and t.ypow >= gamma + 1:
                bulk.append(t)
            else:
                leftovers.append(t)
    mk = lambda ts, tag: PhgSeries(out.lattice, ts, out.trunc_order, tag,
                                   validate=False)
    btag = TAG_Y0 if which == "I1" else TAG_X0
    return mk(boundary, btag), mk(bulk, TAG_XY), mk(leftovers, TAG_XY)


# -- diagonal restriction -----------------------------------------------------

def as_function_of_y(data: PhgSeries) -> PhgSeries:
    """Map a series of x alone (tag x=0) to the same function of y (tag y=0).

    Used to read diagonal data psi(x, x) = psi0(x) as the boundary value
    psi0(y) entering the x-slot integration formula.
    """
    terms = []
    for t in data.terms:
        if t.ypow != 0 or t.ylog != 0:
            raise OffLattice("diagonal data must be a function of x alone")
        terms.append(PhgTerm(t.coeff, Fraction(0), t.xpow, 0, t.xlog, t.mode))
    return PhgSeries(data.lattice, terms, Fraction(10**6), TAG_Y0,
                     validate=False)


# -- matrices of series -------------------------------------------------------

def mat_identity(n, lattice, trunc_order=None):
    return tuple(
        tuple(constant(1.0 if i == j else 0.0, lattice, trunc_order)
              for j in range(n)) for i in range(n))


def mat_zero(rows, cols, lattice, trunc_order=None):
    return tuple(tuple(zero(lattice, trunc_order) for _ in range(cols))
                 for _ in range(rows))


def mat_add(A, B):
    return tuple(tuple(add(a, b) for a, b in zip(ra, rb))
                 for ra, rb in zip(A, B))


def mat_scale(A, c):
    return tuple(tuple(scale(a, c) for a in row) for row in A)


def mat_mul(A, B):
    rows, inner, cols = len(A), len(B), len(B[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            s = mul(A[i][0], B[0][j])
            for k in range(1, inner):
                s = add(s, mul(A[i][k], B[k][j]))
            row.append(s)
        out.append(tuple(row))
    return tuple(out)


def mat_apply(A, v):
    """Matrix of series times vector of series."""
    out = []
    for row in A:
        s = mul(row[0], v[0])
        for a, b in zip(row[1:], v[1:]):
            s = add(s, mul(a, b))
        out.append(s)
    return tuple(out)


def mat_map(A, op):
    return tuple(tuple(op(a) for a in row) for row in A)


def resolvent_series(B0, trunc_order=None, inverse=False):
    """Truncated series for the resolvent R of  dR/dy = -B0 R,  R|_{y=x} = Id.

    B0 is a square matrix of series constant in x (the smooth part of the
    phi-phi coefficient, Taylor-expanded in y).  Computed by Picard
    iteration:  R <- Id - I2(B0 R), which converges order by order since
    each pass raises the total order by one.  With inverse=True, solves
    dV/dy = +V B0, V|_{y=x} = Id instead (so V(y) = R(y)^(-1)).
    """
    n = len(B0)
    lattice = B0[0][0].lattice
    trunc = DEFAULT_TRUNC if trunc_order is None else _frac(trunc_order)
    for row in B0:
        for entry in row:
            if trunc > entry.trunc_order:
                raise TruncationTooLow(
                    f"resolvent order {trunc} exceeds coefficient truncation "
                    f"{entry.trunc_order}")
            for t in entry.terms:
                if t.xpow != 0 or t.xlog != 0:
                    raise OffLattice(
                        "resolvent_series requires coefficients constant in x")
    ident = mat_identity(n, lattice, trunc)
    R = ident
    # each Picard pass gains one order in (y - x); 2*trunc+6 passes saturate
    # every truncated order even for negative-offset lattices
    for _ in range(2 * max(1, int(trunc)) + 6):
        if inverse:
            update = mat_map(mat_mul(R, B0), integrate_I2)
        else:
            update = mat_scale(mat_map(mat_mul(B0, R), integrate_I2), -1)
        R_new = mat_add(ident, update)
        if R_new == R:
            break
        R = R_new
    return R


# -- composition ---------------------------------------------------------------

def compose_polynomial(H, args, lattice=None, trunc_order=None) -> PhgSeries:
    """Evaluate a polynomial H at series arguments.

    H maps exponent tuples (one entry per argument) to coefficients, which
    may be complex scalars or PhgSeries.  Every argument must have
    nonnegative minimal x-order, otherwise the expansion would not truncate
    (DivergentComposition).
    """
    for i, a in enumerate(args):
        if not a.is_zero() and a.min_xpow() < 0:
            raise DivergentComposition(
                f"argument {i} has minimal x-order {a.min_xpow()} < 0")
    if lattice is None:
        lattice = args[0].lattice if args else ExponentLattice(Fraction(1))
    result = zero(lattice, trunc_order)
    for exps, coeff in H.items():
        if all(e == 0 for e in exps) :
            term = constant(1.0, lattice, trunc_order)
        else:
            term = None
        for a, e in zip(args, exps):
            if e == 0:
                continue
            pw = power(a, e)
            term = pw if term is None else mul(term, pw)
        if term is None:
            term = constant(1.0, lattice, trunc_order)
        if isinstance(coeff, PhgSeries):
            term = mul(coeff, term)
        else:
            term = scale(term, coeff)
        result = add(result, term)
    return result


# -- evaluation ----------------------------------------------------------------

def evaluate(f: PhgSeries, x, y, v=None):
    """Numeric value at a point of the triangle 0 < x <= y <= y0 < 1."""
    if not (0 < x <= y < 1):
        raise DomainError(f"point ({x}, {y}) outside 0 < x <= y < 1")
    if v is None:
        for t in f.terms:
            if t.mode != 0:
                raise DomainError("series has angular modes; supply v")
    return _eval_raw(f, x, y, v)


def _eval_raw(f: PhgSeries, x, y, v=None):
    lx, ly = np.log(x), np.log(y)
    total = 0j
    for t in f.terms:
        val = t.coeff * x ** float(t.xpow) * y ** float(t.ypow)
        if t.xlog:
            val *= lx ** t.xlog
        if t.ylog:
            val *= ly ** t.ylog
        if t.mode and v is not None:
            val *= np.exp(1j * t.mode * v)
        total += val
    return total


def evaluate_grid(f: PhgSeries, x, y, v=None):
    """Vectorized evaluation on numpy arrays (no domain checks)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    total = np.zeros(np.broadcast(x, y).shape, dtype=complex)
    if not f.terms:
        return total
    lx = np.log(x)
    ly = np.log(y)
    for t in f.terms:
        val = t.coeff * x ** float(t.xpow) * y ** float(t.ypow)
        if t.xlog:
            val = val * lx ** t.xlog
        if t.ylog:
            val = val * ly ** t.ylog
        if t.mode:
            val = val * (np.exp(1j * t.mode * v) if v is not None else 1.0)
        total = total + val
    return total


# -- serialization --------------------------------------------------------------

def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def series_to_json(f: PhgSeries) -> dict:
    return {
        "delta": _frac_str(f.lattice.delta),
        "offset": _frac_str(f.lattice.offset),
        "trunc_order": _frac_str(f.trunc_order),
        "tag": f.tag,
        "terms": [
            {
                "coeff_re": t.coeff.real,
                "coeff_im": t.coeff.imag,
                "xpow": _frac_str(t.xpow),
                "ypow": _frac_str(t.ypow),
                "xlog": t.xlog,
                "ylog": t.ylog,
                "mode": t.mode,
            }
            for t in f.terms
        ],
    }


def series_from_json(data: dict) -> PhgSeries:
    lattice = ExponentLattice(Fraction(data["delta"]), Fraction(data["offset"]))
    terms = [
        PhgTerm(complex(t["coeff_re"], t["coeff_im"]), Fraction(t["xpow"]),
                Fraction(t["ypow"]), int(t["xlog"]), int(t["ylog"]),
                int(t["mode"]))
        for t in data["terms"]
    ]
    return PhgSeries(lattice, terms, Fraction(data["trunc_order"]),
                     data["tag"], validate=False)


def dumps(f: PhgSeries) -> str:
    return json.dumps(series_to_json(f), sort_keys=True)


def loads(s: str) -> PhgSeries:
    return series_from_json(json.loads(s))
