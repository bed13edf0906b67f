"""Frames, Bondi conversion, straightening and the conformal identity."""

import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from scriphg import errors
from scriphg import series as srs
from scriphg.metric import (
    MetricSpec,
    build_frame,
    conformal_inversion_residual,
    convert_bondi,
    exp_series,
    fractional_power,
    integrate_y_from_0,
    minkowski_metric,
    radial_box,
    reciprocal,
    straighten_coordinates,
    substitute_x,
)
from scriphg.series import ExponentLattice, evaluate, from_term_list

L1 = ExponentLattice(Fraction(1))


def _mk(entries, trunc=12, lattice=L1):
    return from_term_list(entries, lattice, trunc_order=trunc)


class TestSeriesHelpers:
    def test_reciprocal(self):
        f = _mk([(1.0, 0, 0), (0.5, 1, 0), (-0.2, 0, 1)])
        g = reciprocal(f)
        for x, y in [(0.03, 0.2), (0.08, 0.5)]:
            assert abs(evaluate(g, x, y) * evaluate(f, x, y) - 1) < 1e-12

    def test_reciprocal_degenerate(self):
        f = _mk([(1.0, 1, 0)])
        with pytest.raises(errors.DegenerateMetric):
            reciprocal(f)

    def test_exp(self):
        f = _mk([(0.3, 0, 0), (0.4, 1, 0), (0.1, 1, 1)])
        g = exp_series(f)
        for x, y in [(0.05, 0.3), (0.1, 0.6)]:
            expected = np.exp(evaluate(f, x, y))
            assert abs(evaluate(g, x, y) - expected) < 1e-10

    def test_fractional_power(self):
        f = _mk([(1.0, 0, 0), (0.3, 1, 0)])
        g = fractional_power(f, -0.5)
        for x, y in [(0.05, 0.3), (0.1, 0.6)]:
            expected = evaluate(f, x, y) ** -0.5
            assert abs(evaluate(g, x, y) - expected) < 1e-12

    def test_substitute_plain_powers(self):
        f = _mk([(2.0, 2, 0), (1.0, 3, 1)])
        u = _mk([(0.1, 1, 0)])
        g = substitute_x(f, u)
        for x, y in [(0.02, 0.3), (0.05, 0.5)]:
            xs = x * (1 + 0.1 * x)
            expected = 2 * xs ** 2 + xs ** 3 * y
            assert abs(evaluate(g, x, y) - expected) < 1e-12

    def test_substitute_with_logs(self):
        LH = ExponentLattice(Fraction(1, 2))
        f = from_term_list([(1.0, "1/2", 0, 1)], LH, trunc_order=12)
        u = from_term_list([(0.2, 1, 0)], LH, trunc_order=12)
        g = substitute_x(f, u)
        for x in (0.01, 0.04):
            xs = x * (1 + 0.2 * x)
            expected = math.sqrt(xs) * math.log(xs)
            assert abs(evaluate(g, x, 0.5) - expected) < 1e-10


class TestFrame:
    def test_minkowski(self):
        frame = build_frame(minkowski_metric(3))
        assert not frame.e_minus_dx.terms
        assert evaluate(frame.e_minus_dy, 0.1, 0.5) == 2.0
        assert evaluate(frame.e_plus_dx, 0.1, 0.5) == -2.0

    def test_toy_chi(self):
        chi = _mk([(1.0, 2, 0)])
        m = MetricSpec(3, "null_normal", chi, _mk([]), _mk([(1.0, 0, 0)]))
        frame = build_frame(m)
        # e_- = 2(d_y - x^2 d_x)
        assert abs(evaluate(frame.e_minus_dx, 0.1, 0.5) + 2 * 0.01) < 1e-14

    def test_duality_against_matrix_inverse(self):
        chi = _mk([(0.3, 2, 0), (0.1, 3, 1)])
        gamma = _mk([(0.2, 2, 0)])
        mu = _mk([(1.0, 0, 0), (0.5, 1, 0), (0.1, 1, 1)])
        metric = MetricSpec(3, "null_normal", chi, gamma, mu)
        frame = build_frame(metric)
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.uniform(0.005, 0.08)
            y = rng.uniform(x * 1.2, 0.7)
            gmat = np.array([
                [0.0, 0.5, 0.0],
                [0.5, evaluate(chi, x, y), evaluate(gamma, x, y)],
                [0.0, evaluate(gamma, x, y), evaluate(mu, x, y)],
            ])
            ginv = np.linalg.inv(gmat)
            blocks = frame.inverse_blocks
            assert abs(ginv[0, 0] - evaluate(blocks["xx"], x, y)) < 1e-10
            assert abs(ginv[0, 1] - evaluate(blocks["xy"], x, y)) < 1e-10
            assert abs(ginv[0, 2] - evaluate(blocks["xv"], x, y)) < 1e-10
            assert abs(ginv[2, 2] - evaluate(blocks["vv"], x, y)) < 1e-10
            # null character of the y level sets: g^yy = 0
            assert abs(ginv[1, 1]) < 1e-10
            assert abs(ginv[1, 2]) < 1e-10

    def test_degenerate(self):
        m = MetricSpec(3, "null_normal", _mk([]), _mk([]), _mk([]))
        with pytest.raises(errors.DegenerateMetric):
            build_frame(m)

    def test_validation(self):
        with pytest.raises(errors.InputError):
            MetricSpec(1, "null_normal", _mk([]), _mk([]), _mk([(1.0, 0, 0)]))
        with pytest.raises(errors.InputError):
            # chi must vanish at x = 0
            MetricSpec(3, "null_normal", _mk([(1.0, 0, 0)]), _mk([]),
                       _mk([(1.0, 0, 0)]))
        with pytest.raises(errors.InputError):
            MetricSpec(3, "bondi", _mk([]), _mk([]), _mk([(1.0, 0, 0)]))


class TestBondi:
    def test_identity(self):
        m = MetricSpec(3, "bondi", _mk([(1.0, 2, 0)]), _mk([]),
                       _mk([(1.0, 0, 0)]), beta=_mk([]))
        out = convert_bondi(m)
        assert out.form == "null_normal"
        assert out.chi.terms == m.chi.terms

    def test_inversion_coefficient(self):
        # beta = c x^2: X = x + (2c/3) x^3 + O(x^5), so the marker mu = 1 + x
        # becomes 1 + X^{-1}(xt) = 1 + xt - (2c/3) xt^3 + ...
        c = 0.3
        m = MetricSpec(3, "bondi", _mk([]), _mk([]),
                       _mk([(1.0, 0, 0), (1.0, 1, 0)]),
                       beta=_mk([(c, 2, 0)]))
        out = convert_bondi(m)
        assert abs(out.mu.coefficient(1, 0) - 1.0) < 1e-12
        assert abs(out.mu.coefficient(3, 0) + 2 * c / 3) < 1e-12

    def test_numeric_pipeline(self):
        # y-dependent beta: chi_new at X(x, y) must match chi - d_y X, with
        # X(x, y) = int_0^x e^{2 beta} computed by quadrature (this encodes
        # the g_{x y} = 1/2 normalization of the new chart)
        c = 0.2
        beta = _mk([(c, 2, 0), (c / 2, 2, 1)])
        chi = _mk([(1.0, 2, 0)])
        m = MetricSpec(3, "bondi", chi, _mk([]), _mk([(1.0, 0, 0)]),
                       beta=beta)
        out = convert_bondi(m)

        def bigx(x, y):
            return quad(lambda s: np.exp(2 * (c * s ** 2
                                              + c / 2 * s ** 2 * y)),
                        0, x, epsabs=1e-14)[0]

        for x, y in [(0.02, 0.3), (0.05, 0.5)]:
            hy = 1e-5
            dyx = (bigx(x, y + hy) - bigx(x, y - hy)) / (2 * hy)
            target = x ** 2 - dyx
            got = evaluate(out.chi, bigx(x, y), y)
            assert abs(got - target) < 1e-9


class TestStraighten:
    def test_trivial(self):
        s = straighten_coordinates(minkowski_metric(3))
        assert not s.xi.terms and not s.eta.terms

    def test_exponential(self):
        # w = -chi = c x so Upsilon = c and xi = e^{-c y} - 1
        c = 0.7
        m = MetricSpec(3, "null_normal", _mk([(-c, 1, 0)]), _mk([]),
                       _mk([(1.0, 0, 0)]))
        s = straighten_coordinates(m)
        for k in range(1, 8):
            expected = (-c) ** k / math.factorial(k)
            assert abs(s.xi.coefficient(0, k) - expected) < 1e-12, k

    def test_linear_eta(self):
        # gamma = -c x, mu = 1, chi = c^2 x^2 so that w has no x-linear part
        c = 0.4
        m = MetricSpec(3, "null_normal", _mk([(c * c, 2, 0)]),
                       _mk([(-c, 1, 0)]), _mk([(1.0, 0, 0)]))
        s = straighten_coordinates(m)
        assert not s.upsilon.terms
        assert abs(s.eta.coefficient(0, 1) + c) < 1e-12
        assert len(s.eta.terms) == 1


class TestConformalIdentity:
    def test_exact_solution(self):
        def g(s):
            return np.exp(-((s - 1.2) ** 2))

        def u(x, y):
            return (g(x) - g(y)) / (0.5 * (x + y))

        for h in (2e-2, 1e-2):
            assert abs(radial_box(u, 0.8, 1.5, h)) < 1e-10

    def test_second_order_residual(self):
        def f(x, y):
            return np.sin(1.3 * x) * np.cos(0.7 * y) \
                + 0.3 * (x * y) ** 2 / (1 + x + y)

        res = [abs(conformal_inversion_residual(f, 0.9, 1.4, h))
               for h in (4e-2, 2e-2, 1e-2)]
        assert res[0] > res[1] > res[2]
        order1 = np.log2(res[0] / res[1])
        order2 = np.log2(res[1] / res[2])
        assert 1.8 < order1 < 2.2
        assert 1.8 < order2 < 2.2
