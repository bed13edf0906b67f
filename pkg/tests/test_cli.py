"""End-to-end tests of the batch command line interface.

Each bundled spec must round-trip reduce -> solve-char -> fit -> verify
with exit code 0, malformed input must exit 2 with a machine-readable
error naming the offending key, and outputs must be deterministic.
"""

import importlib.resources as ir
import json
import os

import pytest

from scriphg.cli import main

SPECS = ["incompatible_corner", "linear_half", "minkowski_linear",
         "cubic_wave"]


def spec_path(name):
    return str(ir.files("scriphg") / "specs" / f"{name}.toml")


def run(tmp_path, command, spec, *extra):
    out = tmp_path / command
    code = main([command, "--spec", spec, "--out", str(out)] + list(extra))
    return code, out


# small grids keep the suite fast; correctness at scale is covered by the
# solver and acceptance tests
FAST = ["--grid", "levels=48"]


class TestRoundTrip:

    @pytest.mark.parametrize("name", SPECS)
    def test_reduce(self, tmp_path, name):
        code, out = run(tmp_path, "reduce", spec_path(name))
        assert code == 0
        payload = json.loads((out / "reduce.json").read_text())
        assert payload["structure_ok"] is True
        assert payload["n_phi"] >= 1 and payload["n_psi"] >= 1

    @pytest.mark.parametrize("name", SPECS)
    def test_solve_char(self, tmp_path, name):
        code, out = run(tmp_path, "solve-char", spec_path(name), *FAST)
        assert code == 0
        csv = (out / "solution.csv").read_text().splitlines()
        assert csv[0] == "x,y,field,re,im"
        assert len(csv) > 100
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "solve-char"
        assert man["grid"]["levels"] == 48

    @pytest.mark.parametrize("name", SPECS)
    def test_fit(self, tmp_path, name):
        code, out = run(tmp_path, "fit", spec_path(name), *FAST)
        assert code == 0
        payload = json.loads((out / "fit.json").read_text())
        assert payload["n_samples"] >= 8
        assert len(payload["fit"]["coefficients"]) >= 1

    @pytest.mark.parametrize("name", SPECS)
    def test_verify(self, tmp_path, name):
        code, out = run(tmp_path, "verify", spec_path(name), *FAST)
        assert code == 0
        payload = json.loads((out / "verify.json").read_text())
        assert payload["passed"] is True
        assert payload["message"] == "all invariants passed"


class TestFormalCommands:

    def test_solve_formal(self, tmp_path):
        code, out = run(tmp_path, "solve-formal",
                        spec_path("incompatible_corner"))
        assert code == 0
        payload = json.loads((out / "formal.json").read_text())
        assert payload["report"]["flagged"] == 0
        assert payload["bounded"] is True
        assert len(payload["psi"][0]) > 0

    def test_solve_formal_rejects_numeric_data(self, tmp_path):
        code, _ = run(tmp_path, "solve-formal",
                      spec_path("minkowski_linear"))
        assert code == 2

    def test_target_order_flag(self, tmp_path):
        code, out = run(tmp_path, "solve-formal",
                        spec_path("incompatible_corner"),
                        "--target-order", "2")
        assert code == 0
        payload = json.loads((out / "formal.json").read_text())
        assert payload["target_order"] == "2/1"

    def test_xval_orders_improve(self, tmp_path):
        code, out = run(tmp_path, "xval", spec_path("linear_half"),
                        "--grid", "levels=96")
        assert code == 0
        payload = json.loads((out / "xval.json").read_text())
        rows = payload["orders"]
        rems = [r["max_remainder"] for r in rows]
        assert rems == sorted(rems, reverse=True)
        assert rems[-1] < 1e-2
        # final remainder decays at roughly the next lattice exponent
        assert rows[-1]["remainder_decay"] > 1.8


class TestErrorHandling:

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code = main(["reduce", "--spec", "/does/not/exist.toml",
                     "--out", str(tmp_path)])
        assert code == 2
        err = json.loads(capsys.readouterr().out)
        assert err["error"] == "SpecError"

    def test_unknown_key_names_path(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('kind = "raw"\nname = "bad"\n'
                       '[lattice]\ndelta = "1/2"\noffset = "0"\n'
                       'bogus = 3\n')
        code = main(["reduce", "--spec", str(bad),
                     "--out", str(tmp_path)])
        assert code == 2
        err = json.loads(capsys.readouterr().out)
        assert "lattice.bogus" in err["message"]

    def test_bad_grid_flag(self, tmp_path, capsys):
        code = main(["fit", "--spec", spec_path("linear_half"),
                     "--out", str(tmp_path), "--grid", "levels=lots"])
        assert code == 2
        err = json.loads(capsys.readouterr().out)
        assert err["error"] == "InputError"

    def test_bad_target_order(self, tmp_path, capsys):
        code = main(["solve-formal", "--spec",
                     spec_path("incompatible_corner"),
                     "--out", str(tmp_path), "--target-order", "soon"])
        assert code == 2

    def test_malformed_toml(self, tmp_path, capsys):
        bad = tmp_path / "broken.toml"
        bad.write_text("kind = [unclosed\n")
        code = main(["reduce", "--spec", str(bad),
                     "--out", str(tmp_path)])
        assert code == 2


class TestDeterminism:

    def test_byte_identical_outputs(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            code = main(["verify", "--spec", spec_path("linear_half"),
                         "--out", str(out), "--seed", "7", *FAST])
            assert code == 0
            outs.append(out)
        for fname in ("verify.json", "manifest.json"):
            assert (outs[0] / fname).read_bytes() == \
                (outs[1] / fname).read_bytes()

    def test_fit_json_identical(self, tmp_path):
        blobs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            code = main(["fit", "--spec",
                         spec_path("incompatible_corner"),
                         "--out", str(out), *FAST])
            assert code == 0
            blobs.append((out / "fit.json").read_bytes())
        assert blobs[0] == blobs[1]


class TestChartFlag:

    def test_solve_char_xtau(self, tmp_path):
        code, out = run(tmp_path, "solve-char",
                        spec_path("incompatible_corner"),
                        "--chart", "xtau",
                        "--grid", "levels=48,uniform=true,T=0.35")
        assert code == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["chart"] == "xtau"

    def test_fit_rejects_xtau(self, tmp_path):
        code, _ = run(tmp_path, "fit", spec_path("incompatible_corner"),
                      "--chart", "xtau", *FAST)
        assert code == 2
