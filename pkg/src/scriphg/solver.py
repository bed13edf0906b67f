"""Double-null characteristic evolution on the triangle 0 < x <= y <= 2T.

The marcher integrates the canonical first-order system

    d_y phi = -B_pp phi - B_ps psi + x L phi + a + G_phi,
    d_x psi = -B_sp phi - B_ss psi + x L psi + b + G_psi,

level by level in y from diagonal data at x = y.  Per level the two
half-steps are coupled through a fixed-point iteration:

  (i)  psi is integrated inward in x from the diagonal; the explicit
       source b (which may be singular like x^{beta} ln^N x) is
       integrated exactly term by term, while the field couplings use
       the trapezoid rule with the implicit endpoint resolved by the
       fixed point;
  (ii) phi advances in y along each x-line by classical 4-stage
       one-step integration with substeps, with psi and the lagged
       derivative terms interpolated linearly between the two levels.

The scheme is globally second order (the linear interpolation of the
couplings caps the order), reproduces affine solutions to rounding, and
keeps the diagonal data bit-for-bit.  The same algebra can be marched
in the (x, tau) chart (y = x + 2 tau) on a uniform grid; matching nodes
then agree with the (x, y) run up to the fixed-point tolerance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import series as srs
from .errors import (
    Blowup,
    DomainError,
    InputError,
    NoConvergence,
    NonMonotone,
    StepUnderflow,
)
from .grid import TriangularGrid
from .series import PhgSeries

BLOWUP_LIMIT = 1e12


# -- data plumbing ---------------------------------------------------------------


def _as_diag_callable(d):
    """Normalize diagonal data to a vectorized callable of x."""
    if d is None:
        return lambda xs: np.zeros(np.shape(xs), dtype=complex)
    if isinstance(d, PhgSeries):
        return lambda xs: np.asarray(srs.evaluate_grid(d, xs, xs),
                                     dtype=complex)

    def wrapped(xs):
        out = d(np.asarray(xs, dtype=float))
        out = np.asarray(out, dtype=complex)
        if out.ndim == 0:
            out = np.full(np.shape(xs), complex(out))
        return out

    return wrapped


def _nonzero_entries(matrix):
    out = []
    for r, row in enumerate(matrix):
        for c, entry in enumerate(row):
            if entry.terms:
                out.append((r, c, entry))
    return out


def _antideriv_values(f: PhgSeries, x, y):
    """Values of an x-antiderivative of f at fixed y, exact per term."""
    x = np.asarray(x, dtype=float)
    lx = np.log(x)
    total = np.zeros(np.broadcast(x, np.asarray(y, dtype=float)).shape,
                     dtype=complex)
    for t in f.terms:
        if t.mode:
            raise DomainError(
                "angular modes are not supported by the numerical solver")
        yfac = t.coeff * np.asarray(y, dtype=float) ** float(t.ypow)
        if t.ylog:
            yfac = yfac * np.log(y) ** t.ylog
        for c, pw, lg in srs._antiderivative(t.xpow, t.xlog):
            v = c * x ** float(pw)
            if lg:
                v = v * lx ** lg
            total = total + yfac * v
    return total


class _SystemEval:
    """Numeric right-hand-side evaluation for a FirstOrderSystem."""

    def __init__(self, system):
        self.system = system
        self.n_phi = system.n_phi
        self.n_psi = system.n_psi
        self.B = {k: _nonzero_entries(system.B[k]) for k in system.B}
        self.Lx = {k: _nonzero_entries(system.L[k]["x"]) for k in system.L}
        self.Ly = {k: _nonzero_entries(system.L[k]["y"]) for k in system.L}
        self.has_L = any(self.Lx[k] or self.Ly[k] for k in self.Lx)
        self.a = system.a
        self.b = system.b
        self.G_phi = system.G_phi
        self.G_psi = system.G_psi
        names = system.field_names or {}
        self.phi_slots = names.get(
            "phi_slots", [("phi", c) for c in range(self.n_phi)])
        self.psi_slots = names.get(
            "psi_slots", [("psi", c) for c in range(self.n_psi)])

    def fields_dict(self, phi, psi):
        d = {}
        for c, slot in enumerate(self.phi_slots):
            d[slot] = phi[c]
        for c, slot in enumerate(self.psi_slots):
            d[slot] = psi[c]
        return d

    @staticmethod
    def _apply(entries, rows, x, y, vec, out=None):
        if out is None:
            out = np.zeros((rows,) + np.broadcast(
                np.asarray(x, float), np.asarray(y, float)).shape,
                dtype=complex)
        for r, c, s in entries:
            out[r] = out[r] + srs.evaluate_grid(s, x, y) * vec[c]
        return out

    def c_phi(self, x, y, phi, psi, derivs=None, include_source=True):
        """Right-hand side of d_y phi (everything on the RHS)."""
        shape = (self.n_phi,) + np.broadcast(
            np.asarray(x, float), np.asarray(y, float)).shape
        out = np.zeros(shape, dtype=complex)
        self._apply(self.B["phiphi"], self.n_phi, x, y, -phi, out)
        self._apply(self.B["phipsi"], self.n_phi, x, y, -psi, out)
        if include_source:
            for r in range(self.n_phi):
                if self.a[r].terms:
                    out[r] = out[r] + srs.evaluate_grid(self.a[r], x, y)
        if self.has_L and derivs is not None:
            lterm = np.zeros(shape, dtype=complex)
            self._apply(self.Lx["phiphi"], self.n_phi, x, y,
                        derivs["dx_phi"], lterm)
            self._apply(self.Lx["phipsi"], self.n_phi, x, y,
                        derivs["dx_psi"], lterm)
            self._apply(self.Ly["phiphi"], self.n_phi, x, y,
                        derivs["dy_phi"], lterm)
            self._apply(self.Ly["phipsi"], self.n_phi, x, y,
                        derivs["dy_psi"], lterm)
            out = out + np.asarray(x, float) * lterm
        if self.G_phi is not None:
            fields = self.fields_dict(phi, psi)
            for r in range(self.n_phi):
                out[r] = out[r] + self.G_phi[r].evaluate(fields, x, y)
        return out

    def c_psi_coupling(self, x, y, phi, psi, derivs=None):
        """d_x psi right-hand side without the explicit source b."""
        shape = (self.n_psi,) + np.broadcast(
            np.asarray(x, float), np.asarray(y, float)).shape
        out = np.zeros(shape, dtype=complex)
        self._apply(self.B["psiphi"], self.n_psi, x, y, -phi, out)
        self._apply(self.B["psipsi"], self.n_psi, x, y, -psi, out)
        if self.has_L and derivs is not None:
            lterm = np.zeros(shape, dtype=complex)
            self._apply(self.Lx["psiphi"], self.n_psi, x, y,
                        derivs["dx_phi"], lterm)
            self._apply(self.Lx["psipsi"], self.n_psi, x, y,
                        derivs["dx_psi"], lterm)
            self._apply(self.Ly["psiphi"], self.n_psi, x, y,
                        derivs["dy_phi"], lterm)
            self._apply(self.Ly["psipsi"], self.n_psi, x, y,
                        derivs["dy_psi"], lterm)
            out = out + np.asarray(x, float) * lterm
        if self.G_psi is not None:
            fields = self.fields_dict(phi, psi)
            for r in range(self.n_psi):
                out[r] = out[r] + self.G_psi[r].evaluate(fields, x, y)
        return out

    def psi_source_antiderivative(self, x, y):
        """Stack of exact x-antiderivative values of the b sources."""
        x = np.asarray(x, dtype=float)
        shape = (self.n_psi,) + np.broadcast(x, np.asarray(y, float)).shape
        out = np.zeros(shape, dtype=complex)
        for r in range(self.n_psi):
            if self.b[r].terms:
                out[r] = _antideriv_values(self.b[r], x, y)
        return out


# -- solution container ----------------------------------------------------------


@dataclass
class GridSolution:
    """Node-indexed solution values.

    For chart "xy": phi[c, j, i] is the value at (x, y) =
    (levels[i], levels[j]), valid for i <= j.  For chart "xtau":
    phi[c, k, i] is the value at x = levels[i], tau = k h / 2
    (equivalently y = levels[i + k]), valid for i + k < n_levels.
    """

    grid: TriangularGrid
    chart: str
    phi: np.ndarray
    psi: np.ndarray
    scheme: dict
    diagnostics: dict
    field_names: dict = field(default_factory=dict)

    def y_of(self, k: int, i: int) -> float:
        if self.chart != "xtau":
            raise InputError("y_of(k, i) applies to the xtau chart")
        return float(self.grid.levels[i + k])

    def _iter_nodes(self):
        lv = self.grid.levels
        M = lv.size
        if self.chart == "xy":
            for j in range(M):
                for i in range(j + 1):
                    yield (j, i), lv[i], lv[j]
        else:
            for k in range(M):
                for i in range(M - k):
                    yield (k, i), lv[i], lv[i + k]

    def _slot_names(self):
        names = self.field_names or {}
        phi_slots = names.get("phi_slots",
                              [("phi", c) for c in range(self.phi.shape[0])])
        psi_slots = names.get("psi_slots",
                              [("psi", c) for c in range(self.psi.shape[0])])
        return ([f"{n}[{c}]" for n, c in phi_slots],
                [f"{n}[{c}]" for n, c in psi_slots])

    def export_csv(self, path):
        phi_names, psi_names = self._slot_names()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "field", "re", "im"])
            for idx, x, y in self._iter_nodes():
                for c, name in enumerate(phi_names):
                    v = self.phi[(c,) + idx]
                    writer.writerow([repr(x), repr(y), name,
                                     repr(v.real), repr(v.imag)])
                for c, name in enumerate(psi_names):
                    v = self.psi[(c,) + idx]
                    writer.writerow([repr(x), repr(y), name,
                                     repr(v.real), repr(v.imag)])

    def manifest(self) -> dict:
        phi_names, psi_names = self._slot_names()
        return {
            "chart": self.chart,
            "grid": self.grid.describe(),
            "scheme": self.scheme,
            "diagnostics": self.diagnostics,
            "fields": {"phi": phi_names, "psi": psi_names},
        }

    def export_manifest(self, path):
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, sort_keys=True, indent=2)
            fh.write("\n")


# -- the phi advance -------------------------------------------------------------


def _lerp(a, b, lam):
    return a + lam * (b - a)


def _advance_phi(ev, x, y0, y1, phi0, psi0, psi1, n_sub, derivs01=None):
    """RK4 advance of phi from y0 to y1 along fixed x-lines.

    psi (and the lagged derivative arrays, when L terms are present) are
    interpolated linearly in y between the two levels.
    """
    h_tot = y1 - y0
    phi = np.array(phi0, dtype=complex)

    def rhs(frac, p, base_frac, sub_frac):
        lam = base_frac + sub_frac * frac
        yy = y0 + h_tot * lam
        psi_l = _lerp(psi0, psi1, lam)
        derivs = None
        if derivs01 is not None:
            derivs = {key: _lerp(d0, d1, lam)
                      for key, (d0, d1) in derivs01.items()}
        return ev.c_phi(x, yy, p, psi_l, derivs=derivs)

    for s in range(n_sub):
        base = s / n_sub
        sub = 1.0 / n_sub
        hb = h_tot * sub
        k1 = rhs(0.0, phi, base, sub)
        k2 = rhs(0.5, phi + 0.5 * hb * k1, base, sub)
        k3 = rhs(0.5, phi + 0.5 * hb * k2, base, sub)
        k4 = rhs(1.0, phi + hb * k3, base, sub)
        phi = phi + (hb / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


def _check_finite(phi, psi, where):
    for name, arr in (("phi", phi), ("psi", psi)):
        if not np.all(np.isfinite(arr.view(float))):
            raise Blowup(f"non-finite {name} values at {where}")
        if arr.size and np.max(np.abs(arr)) > BLOWUP_LIMIT:
            raise Blowup(f"|{name}| exceeded {BLOWUP_LIMIT:g} at {where}")


def _gradient_x(arr, xs):
    if arr.shape[-1] < 2:
        return np.zeros_like(arr)
    return np.gradient(arr, xs, axis=-1)


# -- the (x, y) marcher ----------------------------------------------------------


def _solve_xy(ev, grid, phi_diag, psi_diag, n_sub, max_iter, tol):
    t = grid.levels
    M = t.size
    n_phi, n_psi = ev.n_phi, ev.n_psi
    phi = np.full((n_phi, M, M), np.nan, dtype=complex)
    psi = np.full((n_psi, M, M), np.nan, dtype=complex)
    diag_phi = np.stack([fn(t) for fn in phi_diag]) if n_phi else \
        np.zeros((0, M), complex)
    diag_psi = np.stack([fn(t) for fn in psi_diag]) if n_psi else \
        np.zeros((0, M), complex)
    phi[:, 0, 0] = diag_phi[:, 0]
    psi[:, 0, 0] = diag_psi[:, 0]
    max_outer = 0

    for j in range(1, M):
        xs = t[: j + 1]
        y0, y1 = t[j - 1], t[j]
        k = y1 - y0
        phi_old = phi[:, j - 1, :j]
        psi_old = psi[:, j - 1, :j]
        phi_new = np.concatenate([phi_old, diag_phi[:, j:j + 1]], axis=1)
        psi_new = np.concatenate([psi_old, diag_psi[:, j:j + 1]], axis=1)

        Fb = ev.psi_source_antiderivative(xs, y1)
        seg_exact = Fb[:, :-1] - Fb[:, 1:]
        dx = np.diff(xs)

        converged = False
        for it in range(max_iter):
            derivs01 = None
            derivs_level = None
            if ev.has_L:
                dxp0 = _gradient_x(phi_old, xs[:j])
                dxs0 = _gradient_x(psi_old, xs[:j])
                dxp1 = _gradient_x(phi_new, xs)[:, :j]
                dxs1 = _gradient_x(psi_new, xs)[:, :j]
                dyp = (phi_new[:, :j] - phi_old) / k
                dys = (psi_new[:, :j] - psi_old) / k
                derivs01 = {
                    "dx_phi": (dxp0, dxp1), "dx_psi": (dxs0, dxs1),
                    "dy_phi": (dyp, dyp), "dy_psi": (dys, dys),
                }
                dyp_full = np.concatenate([dyp, dyp[:, -1:]], axis=1)
                dys_full = np.concatenate([dys, dys[:, -1:]], axis=1)
                derivs_level = {
                    "dx_phi": _gradient_x(phi_new, xs),
                    "dx_psi": _gradient_x(psi_new, xs),
                    "dy_phi": dyp_full, "dy_psi": dys_full,
                }
            phi_adv = _advance_phi(ev, xs[:j], y0, y1, phi_old,
                                   psi_old, psi_new[:, :j], n_sub,
                                   derivs01)
            phi_cand = np.concatenate(
                [phi_adv, diag_phi[:, j:j + 1]], axis=1)

            C = ev.c_psi_coupling(xs, y1, phi_cand, psi_new,
                                  derivs=derivs_level)
            seg = seg_exact - 0.5 * dx * (C[:, :-1] + C[:, 1:])
            psi_cand = np.empty_like(psi_new)
            psi_cand[:, j] = diag_psi[:, j]
            cum = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
            psi_cand[:, :j] = diag_psi[:, j:j + 1] + cum

            scale = 1.0 + max(
                np.max(np.abs(phi_cand)) if phi_cand.size else 0.0,
                np.max(np.abs(psi_cand)) if psi_cand.size else 0.0)
            change = max(
                np.max(np.abs(phi_cand - phi_new)) if phi_new.size else 0.0,
                np.max(np.abs(psi_cand - psi_new)) if psi_new.size else 0.0)
            phi_new, psi_new = phi_cand, psi_cand
            if not (np.all(np.isfinite(phi_new.view(float)))
                    and np.all(np.isfinite(psi_new.view(float)))):
                _check_finite(phi_new, psi_new, "fixed-point iteration")
            if change < tol * scale:
                converged = True
                max_outer = max(max_outer, it + 1)
                break
        if not converged:
            raise NoConvergence(
                f"level y = {y1:g}: fixed point did not reach {tol:g} "
                f"in {max_iter} iterations")
        _check_finite(phi_new, psi_new, f"level y = {y1:g}")
        phi[:, j, : j + 1] = phi_new
        psi[:, j, : j + 1] = psi_new

    return phi, psi, max_outer


# -- the (x, tau) marcher --------------------------------------------------------


def _solve_xtau(ev, grid, phi_diag, psi_diag, n_sub, max_iter, tol):
    if not grid.is_uniform():
        raise InputError("the xtau chart requires a uniform grid")
    if ev.has_L:
        raise InputError(
            "the xtau marcher does not support first-order L couplings")
    t = grid.levels
    M = t.size
    h = float(t[1] - t[0]) if M > 1 else float(t[0])
    n_phi, n_psi = ev.n_phi, ev.n_psi
    phi = np.full((n_phi, M, M), np.nan, dtype=complex)
    psi = np.full((n_psi, M, M), np.nan, dtype=complex)
    phi[:, 0, :] = np.stack([fn(t) for fn in phi_diag]) if n_phi else 0.0
    psi[:, 0, :] = np.stack([fn(t) for fn in psi_diag]) if n_psi else 0.0
    max_outer = 0

    for knew in range(1, M):
        ncols = M - knew             # columns i = 0 .. ncols-1
        xs = t[:ncols]
        iy = np.arange(ncols)
        y0 = t[iy + knew - 1]
        y1 = t[iy + knew]
        phi_old = phi[:, knew - 1, :ncols]
        psi_old = psi[:, knew - 1, :ncols]
        # previous-level neighbors along the psi characteristics (same y1)
        phi_up = phi[:, knew - 1, 1: ncols + 1]
        psi_up = psi[:, knew - 1, 1: ncols + 1]
        x_up = t[1: ncols + 1]

        # exact source increment along each characteristic segment
        Fb_lo = ev.psi_source_antiderivative(xs, y1)
        Fb_hi = ev.psi_source_antiderivative(x_up, y1)
        seg_exact = Fb_lo - Fb_hi
        C_up = ev.c_psi_coupling(x_up, y1, phi_up, psi_up)

        phi_new = phi_old.copy()
        psi_new = psi_old.copy()
        converged = False
        for it in range(max_iter):
            phi_cand = _advance_phi(ev, xs, y0, y1, phi_old,
                                    psi_old, psi_new, n_sub)
            C_lo = ev.c_psi_coupling(xs, y1, phi_cand, psi_new)
            psi_cand = psi_up + seg_exact + 0.5 * (xs - x_up) * (C_lo + C_up)

            scale = 1.0 + max(
                np.max(np.abs(phi_cand)) if phi_cand.size else 0.0,
                np.max(np.abs(psi_cand)) if psi_cand.size else 0.0)
            change = max(
                np.max(np.abs(phi_cand - phi_new)) if phi_new.size else 0.0,
                np.max(np.abs(psi_cand - psi_new)) if psi_new.size else 0.0)
            phi_new, psi_new = phi_cand, psi_cand
            if not (np.all(np.isfinite(phi_new.view(float)))
                    and np.all(np.isfinite(psi_new.view(float)))):
                _check_finite(phi_new, psi_new, "fixed-point iteration")
            if change < tol * scale:
                converged = True
                max_outer = max(max_outer, it + 1)
                break
        if not converged:
            raise NoConvergence(
                f"tau step {knew}: fixed point did not reach {tol:g} "
                f"in {max_iter} iterations")
        _check_finite(phi_new, psi_new, f"tau step {knew}")
        phi[:, knew, :ncols] = phi_new
        psi[:, knew, :ncols] = psi_new

    return phi, psi, max_outer


# -- entry points ----------------------------------------------------------------


def solve(system, grid: TriangularGrid, phi_data=None, psi_data=None,
          chart=None, n_sub=2, max_iter=20, tol=1e-12) -> GridSolution:
    """March the system over the grid from diagonal data.

    phi_data / psi_data are per-component callables of x (or PhgSeries
    in x); when omitted, the system's stored diagonal data is used.
    """
    chart = chart or system.chart
    if chart not in ("xy", "xtau"):
        raise InputError(f"unknown chart {chart!r}")
    phi_data = phi_data if phi_data is not None else system.diagonal_phi
    psi_data = psi_data if psi_data is not None else system.diagonal_psi
    if len(phi_data) != system.n_phi or len(psi_data) != system.n_psi:
        raise InputError("diagonal data length does not match field counts")
    phi_diag = [_as_diag_callable(d) for d in phi_data]
    psi_diag = [_as_diag_callable(d) for d in psi_data]

    ev = _SystemEval(system)
    # overflow feeds the Blowup check; do not warn on the way there
    with np.errstate(over="ignore", invalid="ignore"):
        if chart == "xy":
            phi, psi, outer = _solve_xy(ev, grid, phi_diag, psi_diag,
                                        n_sub, max_iter, tol)
        else:
            phi, psi, outer = _solve_xtau(ev, grid, phi_diag, psi_diag,
                                          n_sub, max_iter, tol)
    diagnostics = {
        "max_phi": float(np.nanmax(np.abs(phi))) if phi.size else 0.0,
        "max_psi": float(np.nanmax(np.abs(psi))) if psi.size else 0.0,
        "outer_iterations_max": outer,
        "n_levels": grid.n_levels,
    }
    scheme = {"order": 2, "quadrature": "trapezoid",
              "ode_step": f"rk4x{n_sub}", "source_integration": "exact"}
    return GridSolution(grid=grid, chart=chart, phi=phi, psi=psi,
                        scheme=scheme, diagnostics=diagnostics,
                        field_names=system.field_names or {})


def resolvent_ode(B0, y_from, y_to, tol=1e-10):
    """Solve dR/dy = -B0(y) R, R(y_from) = Id, by adaptive classical RK4.

    B0 is a callable returning a square matrix; step control halves the
    step until the step-doubling error estimate meets tol.
    """
    B = np.asarray(B0(y_from), dtype=complex)
    n = B.shape[0]
    R = np.eye(n, dtype=complex)
    span = y_to - y_from
    if span == 0:
        return R
    y = y_from
    h = span

    def rk4(Rc, yc, hc):
        k1 = -np.asarray(B0(yc), complex) @ Rc
        k2 = -np.asarray(B0(yc + hc / 2), complex) @ (Rc + hc / 2 * k1)
        k3 = -np.asarray(B0(yc + hc / 2), complex) @ (Rc + hc / 2 * k2)
        k4 = -np.asarray(B0(yc + hc), complex) @ (Rc + hc * k3)
        return Rc + hc / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    remaining = span
    budget = 100000
    while abs(remaining) > 1e-15 * abs(span):
        budget -= 1
        if budget < 0:
            raise StepUnderflow(
                f"resolvent step budget exhausted at y = {y:g}")
        if abs(h) > abs(remaining):
            h = remaining
        full = rk4(R, y, h)
        half = rk4(rk4(R, y, h / 2), y + h / 2, h / 2)
        err = float(np.max(np.abs(half - full)))
        nrm = float(np.max(np.abs(half)))
        if np.isfinite(err) and np.isfinite(nrm) \
                and err <= tol * max(1.0, nrm):
            R = half
            y += h
            remaining = y_to - y
            if err < tol / 64:
                h *= 2
        else:
            h /= 2
            if abs(h) < 1e-12 * max(abs(span), 1.0):
                raise StepUnderflow(
                    f"resolvent step fell below {h:g} at y = {y:g}")
    return R


# -- convergence measurement -----------------------------------------------------


@dataclass
class ConvergenceReport:
    errors: dict
    orders: dict
    order: dict


def _matched_levels(coarse, fine):
    idx = np.searchsorted(fine, coarse)
    idx = np.clip(idx, 0, fine.size - 1)
    left = np.clip(idx - 1, 0, fine.size - 1)
    use_left = np.abs(fine[left] - coarse) < np.abs(fine[idx] - coarse)
    idx = np.where(use_left, left, idx)
    ok = np.abs(fine[idx] - coarse) < 1e-9 * np.maximum(coarse, 1e-30)
    return np.nonzero(ok)[0], idx[ok]


def _node_errors(sol, ref_sol=None, exact_phi=None, exact_psi=None):
    """Max-norm errors per field family for one solution."""
    lv = sol.grid.levels
    if ref_sol is not None:
        ci, fi = _matched_levels(lv, ref_sol.grid.levels)
        e_phi = e_psi = 0.0
        for a, ja in zip(ci, fi):
            for b, jb in zip(ci, fi):
                if b > a:
                    continue
                d = np.abs(sol.phi[:, a, b] - ref_sol.phi[:, ja, jb])
                e_phi = max(e_phi, float(np.max(d)) if d.size else 0.0)
                d = np.abs(sol.psi[:, a, b] - ref_sol.psi[:, ja, jb])
                e_psi = max(e_psi, float(np.max(d)) if d.size else 0.0)
        return e_phi, e_psi
    e_phi = e_psi = 0.0
    for j in range(lv.size):
        xs = lv[: j + 1]
        y = lv[j]
        if exact_phi is not None:
            for c, fn in enumerate(exact_phi):
                d = np.abs(sol.phi[c, j, : j + 1] - fn(xs, y))
                e_phi = max(e_phi, float(np.max(d)))
        if exact_psi is not None:
            for c, fn in enumerate(exact_psi):
                d = np.abs(sol.psi[c, j, : j + 1] - fn(xs, y))
                e_psi = max(e_psi, float(np.max(d)))
    return e_phi, e_psi


def measure_convergence(system, grids, phi_data=None, psi_data=None,
                        exact_phi=None, exact_psi=None, chart="xy",
                        n_sub=2) -> ConvergenceReport:
    """Refinement study: fitted order per field family.

    With exact solutions supplied, errors are measured against them on
    every grid; otherwise the finest grid is the reference and errors
    are measured at shared nodes (self-convergence).
    """
    if len(grids) < 3:
        raise InputError("need at least 3 grids for an order estimate")
    sols = [solve(system, g, phi_data, psi_data, chart=chart, n_sub=n_sub)
            for g in grids]
    use_exact = exact_phi is not None or exact_psi is not None
    errors = {"phi": [], "psi": []}
    if use_exact:
        pairs = [(sol, None) for sol in sols]
    else:
        # consecutive-pair differences keep the fitted order unbiased
        pairs = list(zip(sols, sols[1:]))
    for sol, ref in pairs:
        e_phi, e_psi = _node_errors(sol, ref_sol=ref,
                                    exact_phi=exact_phi,
                                    exact_psi=exact_psi)
        errors["phi"].append(e_phi)
        errors["psi"].append(e_psi)

    scale = 1.0 + max(s.diagnostics["max_phi"] + s.diagnostics["max_psi"]
                      for s in sols)
    orders, final = {}, {}
    for name, errs in errors.items():
        if max(errs) < 1e-12 * scale:
            orders[name] = []
            final[name] = "exact"
            continue
        for e0, e1 in zip(errs, errs[1:]):
            if e1 >= e0:
                raise NonMonotone(
                    f"{name} errors do not decrease under refinement: "
                    f"{errs}")
        seq = [float(np.log2(e0 / e1)) for e0, e1 in zip(errs, errs[1:])]
        orders[name] = seq
        final[name] = seq[-1]
    return ConvergenceReport(errors=errors, orders=orders, order=final)
