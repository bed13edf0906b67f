"""TOML system-specification files for the command line front-end.

Three kinds of spec are supported:

  kind = "raw"     an explicit first-order system: lattice, beta, B blocks,
                   sources, and diagonal data, all as lists of monomial
                   terms {c, x, y, xlog, ylog} with fractional exponents
                   written as strings ("-1/2").
  kind = "wave"    a wave equation on a metric (currently the spherically
                   symmetric Minkowski reduction), with an optional
                   power-law nonlinearity table H, reduced on load.
  kind = "preset"  one of the bundled example builders, for data that is
                   not expressible as a finite series (bump profiles).

Unknown keys anywhere in the document are rejected with the full key path,
so typos fail loudly instead of being ignored.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from fractions import Fraction

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import presets
from . import series as srs
from .errors import InputError
from .metric import minkowski_metric
from .reduction import FirstOrderSystem, _empty_blocks, reduce_wave
from .series import ExponentLattice, from_term_list


class SpecError(InputError):
    """Malformed spec document; the message carries the offending key path."""


def _require(cond, path, msg):
    if not cond:
        raise SpecError(f"{path}: {msg}")


def _check_keys(table, allowed, path):
    for k in table:
        if k not in allowed:
            raise SpecError(f"{path}.{k}: unknown key (allowed: "
                            f"{', '.join(sorted(allowed))})")


def _frac_of(v, path):
    try:
        if isinstance(v, str):
            return Fraction(v)
        if isinstance(v, int):
            return Fraction(v)
        if isinstance(v, float) and float(v).is_integer():
            return Fraction(int(v))
    except (ValueError, ZeroDivisionError):
        pass
    raise SpecError(f"{path}: expected an exponent (integer or fraction "
                    f"string like '-1/2'), got {v!r}")


def _series_of(terms, lattice, trunc, path):
    _require(isinstance(terms, list), path, "expected a list of terms")
    entries = []
    for i, t in enumerate(terms):
        p = f"{path}[{i}]"
        _require(isinstance(t, dict), p, "expected a term table")
        _check_keys(t, {"c", "x", "y", "xlog", "ylog"}, p)
        _require("c" in t, p, "term needs a coefficient c")
        c = t["c"]
        _require(isinstance(c, (int, float)), f"{p}.c", "must be a number")
        xp = _frac_of(t.get("x", 0), f"{p}.x")
        yp = _frac_of(t.get("y", 0), f"{p}.y")
        xl, yl = t.get("xlog", 0), t.get("ylog", 0)
        _require(isinstance(xl, int) and xl >= 0, f"{p}.xlog",
                 "must be a nonnegative integer")
        _require(isinstance(yl, int) and yl >= 0, f"{p}.ylog",
                 "must be a nonnegative integer")
        entries.append((float(c), xp, yp, xl, yl))
    return from_term_list(entries, lattice, trunc_order=trunc)


@dataclass
class GridParams:
    T: float = 0.4
    levels: int = 64
    ratio: float = 2.0 ** 0.25
    xmin: float = None
    uniform: bool = False

    def build(self):
        from .grid import make_grid, uniform_grid
        if self.uniform:
            return uniform_grid(self.T, self.levels)
        return make_grid(self.T, n_uniform=self.levels, ratio=self.ratio,
                         x_min=self.xmin)


@dataclass
class SystemSpec:
    """A parsed spec document, ready to build its objects."""

    kind: str
    name: str
    system: FirstOrderSystem
    phi_data: list = None            # callables; None -> system diagonal
    psi_data: list = None
    grid: GridParams = field(default_factory=GridParams)
    chart: str = "xy"
    fit: dict = field(default_factory=dict)
    formal: dict = field(default_factory=dict)
    exact_phi: list = None           # reference solutions, when bundled
    exact_psi: list = None


_TOP_KEYS = {"kind", "name", "lattice", "system", "data", "wave",
             "preset", "grid", "chart", "fit", "formal"}
_BLOCKS = ("phiphi", "phipsi", "psiphi", "psipsi")


def _parse_raw(doc, path="spec"):
    lat_tab = doc.get("lattice", {})
    _check_keys(lat_tab, {"delta", "offset", "trunc"}, f"{path}.lattice")
    delta = _frac_of(lat_tab.get("delta", 1), f"{path}.lattice.delta")
    offset = _frac_of(lat_tab.get("offset", 0), f"{path}.lattice.offset")
    trunc = lat_tab.get("trunc", 8)
    _require(isinstance(trunc, int) and trunc > 0, f"{path}.lattice.trunc",
             "must be a positive integer")
    lattice = ExponentLattice(delta, offset)

    sys_tab = doc.get("system", {})
    _check_keys(sys_tab, {"beta", "n_phi", "n_psi1", "n_psi2", "B",
                          "a", "b"}, f"{path}.system")
    n_phi = sys_tab.get("n_phi", 1)
    n_psi1 = sys_tab.get("n_psi1", 1)
    n_psi2 = sys_tab.get("n_psi2", 0)
    for nm, v in (("n_phi", n_phi), ("n_psi1", n_psi1), ("n_psi2", n_psi2)):
        _require(isinstance(v, int) and v >= 0, f"{path}.system.{nm}",
                 "must be a nonnegative integer")
    beta = _frac_of(sys_tab.get("beta", 0), f"{path}.system.beta")
    n_psi = n_psi1 + n_psi2

    B, L = _empty_blocks(n_phi, n_psi, lattice, trunc)
    b_tab = sys_tab.get("B", {})
    _check_keys(b_tab, set(_BLOCKS), f"{path}.system.B")
    shapes = {"phiphi": (n_phi, n_phi), "phipsi": (n_phi, n_psi),
              "psiphi": (n_psi, n_phi), "psipsi": (n_psi, n_psi)}
    for block, entries in b_tab.items():
        p = f"{path}.system.B.{block}"
        _require(isinstance(entries, list), p, "expected an array of tables")
        rows, cols = shapes[block]
        for i, e in enumerate(entries):
            pe = f"{p}[{i}]"
            _check_keys(e, {"row", "col", "terms"}, pe)
            r, cidx = e.get("row", 0), e.get("col", 0)
            _require(isinstance(r, int) and 0 <= r < rows, f"{pe}.row",
                     f"must be in [0, {rows})")
            _require(isinstance(cidx, int) and 0 <= cidx < cols, f"{pe}.col",
                     f"must be in [0, {cols})")
            B[block][r][cidx] = _series_of(e.get("terms", []), lattice,
                                           trunc, f"{pe}.terms")

    def source_list(key, count):
        out = [srs.zero(lattice, trunc) for _ in range(count)]
        for i, e in enumerate(sys_tab.get(key, [])):
            pe = f"{path}.system.{key}[{i}]"
            _check_keys(e, {"index", "terms"}, pe)
            idx = e.get("index", 0)
            _require(isinstance(idx, int) and 0 <= idx < count,
                     f"{pe}.index", f"must be in [0, {count})")
            out[idx] = _series_of(e.get("terms", []), lattice, trunc,
                                  f"{pe}.terms")
        return out

    a = source_list("a", n_phi)
    b = source_list("b", n_psi)

    data_tab = doc.get("data", {})
    _check_keys(data_tab, {"phi", "psi"}, f"{path}.data")

    def data_list(key, count):
        out = [None] * count
        for i, e in enumerate(data_tab.get(key, [])):
            pe = f"{path}.data.{key}[{i}]"
            _check_keys(e, {"index", "terms"}, pe)
            idx = e.get("index", 0)
            _require(isinstance(idx, int) and 0 <= idx < count,
                     f"{pe}.index", f"must be in [0, {count})")
            out[idx] = _series_of(e.get("terms", []), lattice, trunc,
                                  f"{pe}.terms")
        return out

    system = FirstOrderSystem(
        n_phi=n_phi, n_psi1=n_psi1, n_psi2=n_psi2, lattice=lattice,
        delta=delta, beta=beta, B=B, L=L, a=a, b=b,
        diagonal_phi=data_list("phi", n_phi),
        diagonal_psi=data_list("psi", n_psi))
    return system


def _parse_wave(doc, path="spec"):
    wave = doc.get("wave", {})
    _check_keys(wave, {"dimension", "trunc", "H"}, f"{path}.wave")
    n = wave.get("dimension", 3)
    _require(n == 3, f"{path}.wave.dimension",
             "only the n = 3 spherically symmetric reduction is bundled")
    trunc = wave.get("trunc", 8)
    _require(isinstance(trunc, int) and trunc > 0, f"{path}.wave.trunc",
             "must be a positive integer")
    H = None
    if "H" in wave:
        H = {}
        for k, v in wave["H"].items():
            p = f"{path}.wave.H.{k}"
            try:
                m = int(k)
            except ValueError:
                raise SpecError(f"{p}: power must be an integer key")
            _require(isinstance(v, (int, float)), p, "must be a number")
            H[m] = float(v)
    system = reduce_wave(minkowski_metric(n), H=H, trunc_order=trunc)

    data_tab = doc.get("data", {})
    _check_keys(data_tab, {"phi", "psi"}, f"{path}.data")
    lat = system.lattice
    for key, count, target in (("phi", system.n_phi, system.diagonal_phi),
                               ("psi", system.n_psi, system.diagonal_psi)):
        for i, e in enumerate(data_tab.get(key, [])):
            pe = f"{path}.data.{key}[{i}]"
            _check_keys(e, {"index", "terms"}, pe)
            idx = e.get("index", 0)
            _require(isinstance(idx, int) and 0 <= idx < count,
                     f"{pe}.index", f"must be in [0, {count})")
            target[idx] = _series_of(e.get("terms", []), lat, trunc,
                                     f"{pe}.terms")
    return system


_PRESET_BUILDERS = {"linear-half", "incompatible-corner", "minkowski-wave",
                    "cubic-wave"}


def _parse_preset(doc, path="spec"):
    tab = doc.get("preset", {})
    _check_keys(tab, {"builder", "width", "amplitude", "trunc", "eps"},
                f"{path}.preset")
    builder = tab.get("builder")
    _require(builder in _PRESET_BUILDERS, f"{path}.preset.builder",
             f"must be one of {sorted(_PRESET_BUILDERS)}")
    phi_data = psi_data = exact_phi = exact_psi = None
    if builder == "linear-half":
        system = presets.linear_half(trunc=tab.get("trunc", 8),
                                     eps=tab.get("eps", 1e-3))
    elif builder == "incompatible-corner":
        system = presets.incompatible_corner(trunc=tab.get("trunc", 8))
    elif builder == "cubic-wave":
        bundle = presets.cubic_wave(amplitude=tab.get("amplitude", 0.1),
                                    trunc=tab.get("trunc", 8))
        system = bundle["system"]
        phi_data, psi_data = bundle["phi_data"], bundle["psi_data"]
    else:
        bundle = presets.minkowski_wave(width=tab.get("width", 0.6),
                                        amplitude=tab.get("amplitude", 1.0))
        system = bundle["system"]
        phi_data, psi_data = bundle["phi_data"], bundle["psi_data"]
        exact_phi, exact_psi = bundle["exact_phi"], bundle["exact_psi"]
    return system, phi_data, psi_data, exact_phi, exact_psi


def _parse_grid(doc, path="spec"):
    tab = doc.get("grid", {})
    _check_keys(tab, {"T", "levels", "ratio", "xmin", "uniform"},
                f"{path}.grid")
    gp = GridParams()
    if "T" in tab:
        _require(isinstance(tab["T"], (int, float)) and 0 < 2 * tab["T"] < 1,
                 f"{path}.grid.T", "need 0 < 2T < 1")
        gp.T = float(tab["T"])
    if "levels" in tab:
        _require(isinstance(tab["levels"], int) and tab["levels"] >= 2,
                 f"{path}.grid.levels", "must be an integer >= 2")
        gp.levels = tab["levels"]
    if "ratio" in tab:
        _require(isinstance(tab["ratio"], (int, float)) and tab["ratio"] > 1,
                 f"{path}.grid.ratio", "must exceed 1")
        gp.ratio = float(tab["ratio"])
    if "xmin" in tab:
        _require(isinstance(tab["xmin"], (int, float)) and tab["xmin"] > 0,
                 f"{path}.grid.xmin", "must be positive")
        gp.xmin = float(tab["xmin"])
    if "uniform" in tab:
        _require(isinstance(tab["uniform"], bool), f"{path}.grid.uniform",
                 "must be a boolean")
        gp.uniform = tab["uniform"]
    return gp


def _parse_fit(doc, path="spec"):
    tab = doc.get("fit", {})
    _check_keys(tab, {"y", "max_order", "max_log", "window", "field",
                      "index"}, f"{path}.fit")
    out = dict(tab)
    if "max_order" in out:
        out["max_order"] = _frac_of(out["max_order"], f"{path}.fit.max_order")
    if "field" in out:
        _require(out["field"] in ("phi", "psi"), f"{path}.fit.field",
                 "must be 'phi' or 'psi'")
    return out


def _parse_formal(doc, path="spec"):
    tab = doc.get("formal", {})
    _check_keys(tab, {"target_order", "trunc"}, f"{path}.formal")
    out = dict(tab)
    if "target_order" in out:
        out["target_order"] = _frac_of(out["target_order"],
                                       f"{path}.formal.target_order")
    return out


def load_spec(path) -> SystemSpec:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"spec: file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"spec: TOML parse error: {exc}")
    return parse_spec(doc)


def parse_spec(doc: dict) -> SystemSpec:
    _check_keys(doc, _TOP_KEYS, "spec")
    kind = doc.get("kind")
    _require(kind in ("raw", "wave", "preset"), "spec.kind",
             "must be 'raw', 'wave' or 'preset'")
    name = doc.get("name", "unnamed")
    _require(isinstance(name, str), "spec.name", "must be a string")
    chart = doc.get("chart", "xy")
    _require(chart in ("xy", "xtau"), "spec.chart",
             "must be 'xy' or 'xtau'")

    phi_data = psi_data = exact_phi = exact_psi = None
    if kind == "raw":
        _require("wave" not in doc and "preset" not in doc, "spec",
                 "raw specs must not carry wave/preset tables")
        system = _parse_raw(doc)
    elif kind == "wave":
        _require("system" not in doc and "preset" not in doc, "spec",
                 "wave specs must not carry system/preset tables")
        system = _parse_wave(doc)
    else:
        _require(all(k not in doc for k in ("system", "wave", "data",
                                            "lattice")), "spec",
                 "preset specs carry only preset/grid/fit/formal tables")
        system, phi_data, psi_data, exact_phi, exact_psi = _parse_preset(doc)

    return SystemSpec(
        kind=kind, name=name, system=system,
        phi_data=phi_data, psi_data=psi_data,
        grid=_parse_grid(doc), chart=chart,
        fit=_parse_fit(doc), formal=_parse_formal(doc),
        exact_phi=exact_phi, exact_psi=exact_psi)
