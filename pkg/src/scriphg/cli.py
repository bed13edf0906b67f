"""Batch front-end: load a system spec, run solvers and checkers, write
deterministic JSON/CSV artifacts.

    scriphg <command> --spec FILE [--out DIR] [options]

Commands: reduce, solve-char, solve-formal, fit, verify, xval.
Exit codes: 0 success, 1 numerical failure (blowup, no convergence),
2 input error (bad spec, bad flags).  Errors are reported as a JSON
object on stdout.  Set SCRIPHG_LOG=DEBUG (or INFO, ...) for logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import InputError, NumericalError, ScriphgError
from .formal import linfty_check, residual, solve_to_order
from .series import PhgSeries, evaluate
from .solver import solve
from .spaces import fit_expansion
from .specfile import GridParams, SystemSpec, load_spec

log = logging.getLogger("scriphg")


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _series_json(f: PhgSeries):
    return [
        {"re": t.coeff.real, "im": t.coeff.imag,
         "x": _frac_str(t.xpow), "y": _frac_str(t.ypow),
         "xlog": t.xlog, "ylog": t.ylog}
        for t in sorted(f.terms,
                        key=lambda t: (t.xpow, t.ypow, t.xlog, t.ylog))]


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    log.info("wrote %s", path)


def _parse_grid_flag(text, base: GridParams) -> GridParams:
    out = GridParams(T=base.T, levels=base.levels, ratio=base.ratio,
                     xmin=base.xmin, uniform=base.uniform)
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise InputError(
                f"--grid: expected key=value pairs, got {part!r}")
        key, _, val = part.partition("=")
        key = key.strip()
        try:
            if key == "T":
                out.T = float(val)
            elif key == "xmin":
                out.xmin = float(val)
            elif key == "ratio":
                out.ratio = float(val)
            elif key == "levels":
                out.levels = int(val)
            elif key == "uniform":
                out.uniform = val.strip().lower() in ("1", "true", "yes")
            else:
                raise InputError(
                    f"--grid: unknown key {key!r} (use T, xmin, ratio, "
                    "levels, uniform)")
        except ValueError:
            raise InputError(f"--grid: bad value for {key}: {val!r}")
    return out


def _manifest(args, spec: SystemSpec, grid_params: GridParams, extra=None):
    man = {
        "version": __version__,
        "command": args.command,
        "spec": {"name": spec.name, "kind": spec.kind},
        "chart": args.chart or spec.chart,
        "seed": args.seed,
        "grid": {
            "T": grid_params.T, "levels": grid_params.levels,
            "ratio": grid_params.ratio, "xmin": grid_params.xmin,
            "uniform": grid_params.uniform,
        },
    }
    if extra:
        man.update(extra)
    return man


def _series_data(spec: SystemSpec):
    """True when the diagonal data are series (formal solver usable)."""
    sysm = spec.system
    data = list(sysm.diagonal_phi) + list(sysm.diagonal_psi)
    if spec.phi_data is not None or spec.psi_data is not None:
        return False
    return all(d is None or isinstance(d, PhgSeries) for d in data)


def _target_order(args, spec: SystemSpec, default=4):
    if args.target_order is not None:
        try:
            return Fraction(args.target_order)
        except (ValueError, ZeroDivisionError):
            raise InputError(
                f"--target-order: not a rational number: "
                f"{args.target_order!r}")
    return spec.formal.get("target_order", Fraction(default))


def _run_solve(spec: SystemSpec, grid_params: GridParams, chart):
    grid = grid_params.build()
    return solve(spec.system, grid, phi_data=spec.phi_data,
                 psi_data=spec.psi_data, chart=chart), grid


# -- commands ---------------------------------------------------------------------


def cmd_reduce(args, spec, grid_params, out):
    sysm = spec.system
    sysm.check_structure()
    blocks = {}
    for name, mat in sysm.B.items():
        entries = []
        for r, row in enumerate(mat):
            for c, e in enumerate(row):
                if e.terms:
                    entries.append({"row": r, "col": c,
                                    "terms": _series_json(e)})
        blocks[name] = entries
    payload = {
        "name": spec.name,
        "beta": _frac_str(Fraction(sysm.beta)),
        "delta": _frac_str(Fraction(sysm.delta)),
        "lattice_offset": _frac_str(sysm.lattice.offset),
        "n_phi": sysm.n_phi,
        "n_psi": sysm.n_psi,
        "nonlinear": bool(sysm.nonlinearity is not None
                          and sysm.nonlinearity.H),
        "B": blocks,
        "sources": {
            "a": [_series_json(e) for e in sysm.a],
            "b": [_series_json(e) for e in sysm.b],
        },
        "structure_ok": True,
    }
    _write_json(os.path.join(out, "reduce.json"), payload)
    return 0


def cmd_solve_char(args, spec, grid_params, out):
    chart = args.chart or spec.chart
    sol, grid = _run_solve(spec, grid_params, chart)
    sol.export_csv(os.path.join(out, "solution.csv"))
    man = _manifest(args, spec, grid_params,
                    {"solution": sol.manifest()})
    _write_json(os.path.join(out, "manifest.json"), man)
    return 0


def cmd_solve_formal(args, spec, grid_params, out):
    if not _series_data(spec):
        raise InputError(
            "solve-formal needs series diagonal data; this spec carries "
            "numeric data callables")
    target = _target_order(args, spec)
    trunc = spec.formal.get("trunc")
    sol = solve_to_order(spec.system, target, trunc=trunc)
    res_phi, res_psi = residual(spec.system, sol.phi, sol.psi)

    def min_order(fs):
        orders = [min(t.xpow + t.ypow for t in f.terms)
                  for f in fs if f.terms]
        return _frac_str(min(orders)) if orders else None

    payload = {
        "name": spec.name,
        "target_order": _frac_str(Fraction(target)),
        "report": sol.report,
        "history": sol.state.history,
        "phi": [_series_json(f) for f in sol.phi],
        "psi": [_series_json(f) for f in sol.psi],
        "residual_min_order": {"phi": min_order(res_phi),
                               "psi": min_order(res_psi)},
        "bounded": linfty_check(sol.phi + sol.psi),
    }
    _write_json(os.path.join(out, "formal.json"), payload)
    return 0


def _fit_samples(spec, sol, grid):
    fit = spec.fit
    y_target = fit.get("y", 0.3)
    window = fit.get("window", [1e-4, 0.1])
    field = fit.get("field", "psi")
    index = fit.get("index", 0)
    lv = grid.levels
    j = int(np.argmin(np.abs(lv - y_target)))
    xs = lv[: j + 1]
    mask = (xs >= window[0]) & (xs <= window[1])
    arr = (sol.psi if field == "psi" else sol.phi)[index, j, : j + 1]
    return list(zip(xs[mask], arr[mask])), float(lv[j]), field, index


def cmd_fit(args, spec, grid_params, out):
    chart = args.chart or spec.chart
    if chart != "xy":
        raise InputError("fit operates in the (x, y) chart")
    sol, grid = _run_solve(spec, grid_params, chart)
    samples, y_used, field, index = _fit_samples(spec, sol, grid)
    max_order = spec.fit.get("max_order", Fraction(2))
    max_log = spec.fit.get("max_log", 0)
    fit = fit_expansion(samples, spec.system.lattice, max_order,
                        max_log=max_log, min_xpow=spec.system.beta)
    payload = {
        "name": spec.name,
        "field": field,
        "index": index,
        "y": y_used,
        "n_samples": len(samples),
        "fit": fit.to_json(),
    }
    _write_json(os.path.join(out, "fit.json"), payload)
    return 0


def cmd_verify(args, spec, grid_params, out):
    chart = args.chart or spec.chart
    checks = []

    spec.system.check_structure()
    checks.append({"check": "structure", "passed": True})

    sol, grid = _run_solve(spec, grid_params, chart)
    vals = np.concatenate([sol.phi.ravel(), sol.psi.ravel()])
    vals = vals[~np.isnan(vals)]  # nodes outside the triangle are nan
    finite = bool(np.all(np.isfinite(vals)))
    checks.append({"check": "numeric solve finite", "passed": finite})

    formal_ok = True
    if _series_data(spec):
        target = _target_order(args, spec)
        fsol = solve_to_order(spec.system, target,
                              trunc=spec.formal.get("trunc"))
        flagged = fsol.report["flagged"]
        checks.append({"check": "formal expansion in predicted summands",
                       "passed": flagged == 0, "flagged": flagged})
        formal_ok = flagged == 0

        # seeded spot check: formal expansion against the numeric solution
        rng = np.random.default_rng(args.seed)
        lv = grid.levels
        j = int(np.argmin(np.abs(lv - 0.6 * lv[-1])))
        idx = rng.integers(0, max(j // 2, 1), size=5)
        worst = 0.0
        for i in sorted(int(v) for v in idx):
            x, y = lv[i], lv[j]
            for c in range(spec.system.n_psi):
                num = sol.psi[c, j, i]
                ref = evaluate(fsol.psi[c], x, y)
                worst = max(worst, float(abs(num - ref) / (1.0 + abs(ref))))
        agree = worst < 1e-2
        checks.append({"check": "formal/numeric cross agreement",
                       "passed": agree, "worst_rel": worst})
        formal_ok = formal_ok and agree
    else:
        checks.append({"check": "formal expansion",
                       "passed": True, "skipped": "numeric-only data"})

    passed = finite and formal_ok
    payload = {
        "name": spec.name,
        "passed": passed,
        "message": "all invariants passed" if passed
        else "invariant violations found",
        "checks": checks,
    }
    _write_json(os.path.join(out, "verify.json"), payload)
    man = _manifest(args, spec, grid_params)
    _write_json(os.path.join(out, "manifest.json"), man)
    if not passed:
        raise NumericalError("verification failed; see verify.json")
    return 0


def cmd_xval(args, spec, grid_params, out):
    if not _series_data(spec):
        raise InputError(
            "xval needs series diagonal data for the formal side")
    chart = args.chart or spec.chart
    if chart != "xy":
        raise InputError("xval operates in the (x, y) chart")
    target = _target_order(args, spec)
    fsol = solve_to_order(spec.system, target,
                          trunc=spec.formal.get("trunc"))
    sol, grid = _run_solve(spec, grid_params, chart)
    samples, y_used, field, index = _fit_samples(spec, sol, grid)
    max_order = spec.fit.get("max_order", Fraction(2))

    series = (fsol.psi if field == "psi" else fsol.phi)[index]
    xs = np.array([s[0] for s in samples])
    num = np.array([complex(s[1]) for s in samples])
    # for each order q, the remainder numeric - (formal partial sum
    # through x^q) should decay at least like the next lattice exponent
    rows = []
    p = Fraction(spec.system.beta)
    while p <= Fraction(max_order):
        partial = np.zeros_like(num)
        for t in series.terms:
            if t.xpow <= p:
                partial += (t.coeff * xs ** float(t.xpow)
                            * np.log(xs) ** t.xlog
                            * y_used ** float(t.ypow)
                            * np.log(y_used) ** t.ylog)
        rem = np.abs(num - partial)
        # fit the decay on the top two decades, where the formal
        # remainder dominates the scheme's discretization error
        good = (rem > 1e-14) & (xs >= xs.max() / 100.0)
        if good.sum() >= 4:
            slope = float(np.polyfit(np.log(xs[good]),
                                     np.log(rem[good]), 1)[0])
        else:
            slope = float("inf")  # remainder at rounding level
        rows.append({
            "through_order": _frac_str(p),
            "max_remainder": float(rem.max()),
            "remainder_decay": slope,
        })
        p += spec.system.lattice.delta
    payload = {
        "name": spec.name,
        "field": field,
        "index": index,
        "y": y_used,
        "orders": rows,
    }
    _write_json(os.path.join(out, "xval.json"), payload)
    return 0


_COMMANDS = {
    "reduce": cmd_reduce,
    "solve-char": cmd_solve_char,
    "solve-formal": cmd_solve_formal,
    "fit": cmd_fit,
    "verify": cmd_verify,
    "xval": cmd_xval,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scriphg",
        description="Polyhomogeneous expansion and characteristic solver "
                    "toolkit")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--spec", required=True,
                        help="path to a TOML system spec")
    parser.add_argument("--out", default=".",
                        help="output directory (default: current)")
    parser.add_argument("--target-order", default=None,
                        help="formal expansion target order (rational)")
    parser.add_argument("--grid", default=None,
                        help='grid overrides: "T=0.4,xmin=1e-4,'
                             'ratio=1.09,levels=128"')
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized sample points")
    parser.add_argument("--chart", choices=("xy", "xtau"), default=None)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("SCRIPHG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        grid_params = spec.grid
        if args.grid:
            grid_params = _parse_grid_flag(args.grid, grid_params)
        out = args.out
        os.makedirs(out, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise InputError(f"output directory not writable: {out}")
        return _COMMANDS[args.command](args, spec, grid_params, out)
    except InputError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
        return 2
    except NumericalError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
