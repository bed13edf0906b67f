"""Order-by-order formal expansion solver."""

import json
from fractions import Fraction

import numpy as np
import pytest

from scriphg import errors
from scriphg import series as srs
from scriphg.formal import (
    initial_state,
    iterate_linear,
    iterate_nonlinear,
    linfty_check,
    residual,
    solve_to_order,
    structure_report,
)
from scriphg.grid import make_grid
from scriphg.metric import minkowski_metric
from scriphg.reduction import FirstOrderSystem, _empty_blocks, reduce_wave
from scriphg.series import ExponentLattice, constant, evaluate, \
    make_monomial
from scriphg.solver import solve

L1 = ExponentLattice(Fraction(1))
LH = ExponentLattice(Fraction(1, 2))
LHm = ExponentLattice(Fraction(1, 2), Fraction(-1, 2))


def mk_sys(lattice, trunc=6, n_phi=1, n_psi=1, **ov):
    B, L = _empty_blocks(n_phi, n_psi, lattice, trunc)
    kw = dict(n_phi=n_phi, n_psi1=n_psi, n_psi2=0, lattice=lattice,
              delta=lattice.delta, beta=Fraction(0), B=B, L=L,
              a=[srs.zero(lattice, trunc) for _ in range(n_phi)],
              b=[srs.zero(lattice, trunc) for _ in range(n_psi)],
              diagonal_phi=[None] * n_phi, diagonal_psi=[None] * n_psi)
    kw.update(ov)
    return FirstOrderSystem(**kw)


def _coupled_toy(trunc=6):
    # d_x psi = phi, d_y phi = psi, psi(x,x) = x^{1/2}
    s = mk_sys(LH, trunc=trunc)
    s.B["psiphi"][0][0] = constant(-1.0, LH, trunc)
    s.B["phipsi"][0][0] = constant(-1.0, LH, trunc)
    s.diagonal_psi = [make_monomial(1.0, Fraction(1, 2), lattice=LH,
                                    trunc_order=trunc)]
    return s


class TestSingleSteps:
    def test_constant_source_phi(self):
        s = mk_sys(L1, a=[constant(1.0, L1, 6)])
        st = iterate_linear(s, initial_state(s))
        assert st.phi[0].coefficient(0, 1) == 1.0
        assert st.phi[0].coefficient(1, 0) == -1.0
        assert len(st.phi[0].terms) == 2

    def test_singular_source_psi(self):
        s = mk_sys(LHm, beta=Fraction(-1, 2),
                   b=[make_monomial(1.0, Fraction(-1, 2), lattice=LHm,
                                    trunc_order=6)])
        st = iterate_linear(s, initial_state(s))
        assert abs(st.psi[0].coefficient("1/2", 0) - 2.0) < 1e-14
        assert abs(st.psi[0].coefficient(0, "1/2") + 2.0) < 1e-14
        assert len(st.psi[0].terms) == 2

    def test_resolvent_factor(self):
        # d_y phi + c phi = 0, phi(x, x) = 1: phi = e^{-c (y - x)}
        c = 0.5
        s = mk_sys(L1, trunc=8, B=None)
        B, L = _empty_blocks(1, 1, L1, 8)
        B["phiphi"][0][0] = constant(c, L1, 8)
        s.B = B
        s.diagonal_phi = [constant(1.0, L1, 8)]
        st = iterate_linear(s, initial_state(s))
        for x, y in [(0.05, 0.3), (0.1, 0.6)]:
            exact = np.exp(-c * (y - x))
            assert abs(evaluate(st.phi[0], x, y) - exact) < 1e-6

    def test_nonlinear_flag(self):
        s = reduce_wave(minkowski_metric(3), H={3: 1.0})
        with pytest.raises(errors.InputError):
            iterate_linear(s, initial_state(s))


class TestIteration:
    def test_gain_history(self):
        s = _coupled_toy()
        sol = solve_to_order(s, 3)
        orders = [Fraction(h["update_order"]) for h in sol.state.history
                  if h["update_order"] is not None]
        for o0, o1 in zip(orders, orders[1:]):
            assert o1 >= o0 + Fraction(1, 2)

    def test_fixed_point_below_guaranteed_order(self):
        s = _coupled_toy()
        sol = solve_to_order(s, 2)
        state2 = iterate_linear(s, sol.state)
        guaranteed = sol.state.guaranteed_order
        for new, old in zip(state2.phi + state2.psi,
                            sol.phi + sol.psi):
            low_old = {t.key: t.coeff for t in old.terms
                       if t.xpow + t.ypow < guaranteed}
            low_new = {t.key: t.coeff for t in new.terms
                       if t.xpow + t.ypow < guaranteed}
            assert low_old == low_new

    def test_residual_order(self):
        s = _coupled_toy(trunc=5)
        sol = solve_to_order(s, 4)
        res_phi, res_psi = residual(s, sol.phi, sol.psi)
        for r in res_phi + res_psi:
            if r.terms:
                assert min(t.xpow + t.ypow for t in r.terms) >= 4

    def test_stalled_gain(self):
        # B_psipsi ~ x^{-1}: integration in x gains nothing
        lat = ExponentLattice(Fraction(1, 2), Fraction(-1))
        s = mk_sys(lat, trunc=4, delta=Fraction(1, 2))
        s.B["psipsi"][0][0] = make_monomial(1.0, -1, lattice=lat,
                                            trunc_order=4)
        s.diagonal_psi = [make_monomial(1.0, Fraction(1, 2), lattice=lat,
                                        trunc_order=4)]
        state = initial_state(s)
        with pytest.raises(errors.StalledGain):
            for _ in range(4):
                state = iterate_linear(s, state)

    def test_zero_everything(self):
        s = mk_sys(L1)
        sol = solve_to_order(s, 3)
        assert all(not f.terms for f in sol.phi + sol.psi)
        assert sol.report["terms"] == []
        assert sol.report["flagged"] == 0

    def test_truncation_too_low(self):
        s = _coupled_toy(trunc=3)
        with pytest.raises(errors.TruncationTooLow):
            solve_to_order(s, 5)


class TestCrossValidation:
    def test_toy_matches_char_solver(self):
        s = _coupled_toy(trunc=8)
        sol = solve_to_order(s, 6)
        g = make_grid(0.35, n_uniform=96, ratio=2 ** 0.125, x_min=1e-3)
        num = solve(s, g, phi_data=[None],
                    psi_data=[lambda x: np.sqrt(x)])
        lv = g.levels
        j0 = int(np.argmin(np.abs(lv - 0.3)))
        y = lv[j0]
        for i in range(0, 12, 3):
            x = lv[i]
            assert abs(num.psi[0, j0, i]
                       - evaluate(sol.psi[0], x, y)) < 1e-4
            assert abs(num.phi[0, j0, i]
                       - evaluate(sol.phi[0], x, y)) < 1e-4


class TestStructureReport:
    def test_boundary_summand_without_corner_conditions(self):
        # incompatible diagonal data x^{1/2} produces a pure y-boundary
        # summand; nothing is flagged
        s = _coupled_toy()
        sol = solve_to_order(s, 3)
        assert sol.report["flagged"] == 0
        assert sol.report["summands"].get("y^beta*A_y0", 0) > 0

    def test_json_serializable(self):
        s = _coupled_toy()
        sol = solve_to_order(s, 2)
        text = json.dumps(sol.report, sort_keys=True)
        assert "y^beta*A_y0" in text

    def test_flagged_term(self):
        # beta = 0 system handed a fake negative-power output term
        s = mk_sys(L1)
        bad = [make_monomial(1.0, -1, lattice=ExponentLattice(
            Fraction(1), Fraction(-1)), trunc_order=4)]
        rep = structure_report(s, bad, [srs.zero(L1, 4)])
        assert rep["flagged"] == 1


class TestNonlinear:
    def test_empty_h_matches_linear(self):
        s = reduce_wave(minkowski_metric(3))
        s.diagonal_psi = [constant(0.1, L1, 6), None]
        lin = iterate_linear(s, initial_state(s))
        nl = iterate_nonlinear(s, initial_state(s))
        assert lin.phi == nl.phi and lin.psi == nl.psi

    def test_cubic_wave_runs_clean(self):
        s = reduce_wave(minkowski_metric(3), H={3: 1.0}, trunc_order=6)
        one = constant(0.1, L1, 6)
        minus_x = make_monomial(-0.1, 1, lattice=L1, trunc_order=6)
        s.diagonal_psi = [srs.add(one, minus_x), srs.scale(one, -1.0)]
        s.diagonal_phi = [one]
        sol = solve_to_order(s, 4)
        assert sol.report["nonlinear"]
        assert sol.report["flagged"] == 0
        # cubic term enters at x^{3 q delta - p delta} = x^0 relative to
        # the fields; check it influenced the expansion
        res_phi, res_psi = residual(s, sol.phi, sol.psi)
        for r in res_phi + res_psi:
            if r.terms:
                assert min(t.xpow + t.ypow for t in r.terms) >= 4

    def test_composed_order_gain(self):
        # H = w^3 on a x^{delta}-leading psi gives G order >= (3q-p) delta
        s = reduce_wave(minkowski_metric(3), H={3: 1.0}, trunc_order=8)
        from scriphg.formal import _nonlinear_terms
        psi = [make_monomial(1.0, 1, lattice=L1, trunc_order=8),
               srs.zero(L1, 8)]
        phi = [srs.zero(L1, 8)]
        terms = _nonlinear_terms(s, phi, psi)
        g = terms[("psi", 1)][0]
        # psi0 ~ x: G ~ x^{3 + 3 q delta - p delta} = x^{3+3-3} = x^3
        assert g.min_xpow() == 3


class TestLinfty:
    def test_cases(self):
        good = [make_monomial(1.0, Fraction(1, 2), lattice=LH,
                              trunc_order=4)]
        bad = [make_monomial(1.0, Fraction(-1, 2), lattice=LHm,
                             trunc_order=4)]
        assert linfty_check(good)
        assert not linfty_check(bad)
        assert linfty_check([srs.zero(L1, 4)])
        logt = [srs.from_term_list([(1.0, 0, 0, 1, 0)], L1, trunc_order=4)]
        assert linfty_check(logt, allow_corner_logs=True)
        assert not linfty_check(logt, allow_corner_logs=False)
