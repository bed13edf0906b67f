"""Bundled example systems.

Each constructor returns ready-to-solve objects: a first-order system plus,
where meaningful, diagonal data callables and exact reference solutions.
These are the systems exercised by the test suite and shipped as TOML specs
for the command line.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import series as srs
from .metric import minkowski_metric
from .reduction import FirstOrderSystem, _empty_blocks, reduce_wave
from .series import ExponentLattice, constant, make_monomial


def smooth_bump(width: float = 0.6, amplitude: float = 1.0):
    """Compactly supported bump and its derivative, support |s| < width."""

    def g(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = np.abs(s) < width
        z = np.clip(s / width, -0.999999999, 0.999999999)
        out[inside] = amplitude * np.exp(1 - 1 / (1 - z[inside] ** 2))
        return out

    def gp(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = np.abs(s) < width
        z = np.clip(s / width, -0.999999999, 0.999999999)[inside]
        out[inside] = amplitude * np.exp(1 - 1 / (1 - z ** 2)) \
            * (-2 * z / (1 - z ** 2) ** 2) / width
        return out

    return g, gp


def _monomial_sum(pairs, lattice, trunc):
    acc = srs.zero(lattice, trunc)
    for coeff, xpow in pairs:
        acc = srs.add(acc, make_monomial(coeff, Fraction(xpow),
                                         lattice=lattice, trunc_order=trunc))
    return acc


def linear_half(trunc: int = 8, eps: float = 1e-3) -> FirstOrderSystem:
    """Linear model system on the half-integer lattice, beta = -1/2.

    Singular explicit sources spread over the exponents -1/2 + k/2 drive a
    solution with the full half-integer ladder; a constant B entry exercises
    the resolvent; weak x^3 cross-couplings keep the system genuinely
    coupled without polluting the low-order expansion.
    """
    lat = ExponentLattice(Fraction(1, 2), Fraction(-3, 2))
    B, L = _empty_blocks(1, 1, lat, trunc)
    B["phiphi"][0][0] = constant(0.25, lat, trunc)
    B["phipsi"][0][0] = make_monomial(eps, 3, lattice=lat, trunc_order=trunc)
    B["psiphi"][0][0] = make_monomial(eps, 3, lattice=lat, trunc_order=trunc)
    coeffs = [1.0, 0.5, 0.25, 0.125, 0.1, 0.5]
    a = _monomial_sum(
        [(c, Fraction(-1, 2) + Fraction(k, 2)) for k, c in enumerate(coeffs)],
        lat, trunc)
    b = _monomial_sum(
        [(c, Fraction(-3, 2) + Fraction(k, 2)) for k, c in enumerate(coeffs)],
        lat, trunc)
    diag_phi = _monomial_sum(
        [(1.0, Fraction(-1, 2)), (0.3, Fraction(1, 2)), (0.5, 2)],
        lat, trunc)
    diag_psi = _monomial_sum(
        [(1.0, Fraction(-1, 2)), (-0.2, 0), (0.5, 2)], lat, trunc)
    return FirstOrderSystem(
        n_phi=1, n_psi1=1, n_psi2=0, lattice=lat,
        delta=Fraction(1, 2), beta=Fraction(-1, 2),
        B=B, L=L, a=[a], b=[b],
        diagonal_phi=[diag_phi], diagonal_psi=[diag_psi])


def incompatible_corner(trunc: int = 8) -> FirstOrderSystem:
    """Coupled pair d_x psi = phi, d_y phi = psi with diagonal data
    psi(x, x) = x^{1/2}: no corner compatibility, half-integer lattice."""
    lat = ExponentLattice(Fraction(1, 2))
    B, L = _empty_blocks(1, 1, lat, trunc)
    B["psiphi"][0][0] = constant(-1.0, lat, trunc)
    B["phipsi"][0][0] = constant(-1.0, lat, trunc)
    return FirstOrderSystem(
        n_phi=1, n_psi1=1, n_psi2=0, lattice=lat,
        delta=Fraction(1, 2), beta=Fraction(0),
        B=B, L=L,
        a=[srs.zero(lat, trunc)],
        b=[make_monomial(1.0, 1, lattice=lat, trunc_order=trunc)],
        diagonal_phi=[None],
        diagonal_psi=[make_monomial(1.0, Fraction(1, 2), lattice=lat,
                                    trunc_order=trunc)])


def minkowski_wave(width: float = 0.6, amplitude: float = 1.0):
    """Spherical linear wave on Minkowski, n = 3.

    The rescaled field r u = g(-x) - g(y) solves the reduced system
    exactly; u itself is (g(-x) - g(y)) * 2 / (x + y).  Returns the
    system, diagonal data, and the exact reduced fields.
    """
    g, gp = smooth_bump(width, amplitude)
    system = reduce_wave(minkowski_metric(3))
    phi_data = [lambda x: 2 * gp(-x)]
    psi_data = [lambda x: g(-x) - g(x), lambda x: -2 * gp(x)]
    exact_phi = [lambda x, y: 2 * gp(-x) + 0 * x]
    exact_psi = [lambda x, y: g(-x) - g(y) + 0 * x,
                 lambda x, y: -2 * gp(y) + 0 * x]
    return {
        "system": system,
        "phi_data": phi_data,
        "psi_data": psi_data,
        "exact_phi": exact_phi,
        "exact_psi": exact_psi,
        "g": g,
        "g_prime": gp,
    }


def cubic_wave(amplitude: float = 0.1, trunc: int = 8):
    """Semilinear wave with cubic source, n = 3, small polynomial data.

    The nonlinearity meets the order condition for delta = 1: a uniform
    zero of order 3.  Data are small so the iteration contracts.
    """
    system = reduce_wave(minkowski_metric(3), H={3: 1.0},
                         trunc_order=trunc)
    lat = system.lattice
    one = constant(amplitude, lat, trunc)
    slope = make_monomial(-amplitude, 1, lattice=lat, trunc_order=trunc)
    system.diagonal_psi = [srs.add(one, slope), srs.scale(one, -1.0)]
    system.diagonal_phi = [srs.add(one, srs.scale(slope, -1.0))]
    a = float(amplitude)
    phi_data = [lambda x: a * (1 + x)]
    psi_data = [lambda x: a * (1 - x), lambda x: -a + 0 * x]
    return {
        "system": system,
        "phi_data": phi_data,
        "psi_data": psi_data,
    }
