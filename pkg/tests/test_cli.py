import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from fracrd import DegradationSpec, DepthField, RestorationConfig, SceneSpec, compute_metrics
from fracrd import degrade, generate_scene, run_restoration
from fracrd.cli import main
from fracrd.io import read_pfm, write_pfm, write_pgm16


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def plane_pair(tmp_path, capsys):
    gt, raw = tmp_path / "gt.pfm", tmp_path / "raw.pfm"
    code, _, _ = run(capsys, "synth", gt, raw, "--width", 32, "--height", 24)
    assert code == 0
    return gt, raw


class TestRestore:
    def test_constant_field_unchanged(self, tmp_path, capsys):
        f = DepthField.constant(9, 6, 1500.0)
        write_pfm(tmp_path / "c.pfm", f)
        code, out, _ = run(capsys, "restore", tmp_path / "c.pfm", tmp_path / "o.pfm",
                           "--alpha", "adaptive", "--smoothing", "tent")
        assert code == 0
        assert out.strip() == "iterations=6 final_max_update=0"
        assert (tmp_path / "o.pfm").read_bytes() == (tmp_path / "c.pfm").read_bytes()

    def test_keeps_pgm_format_and_range(self, tmp_path, capsys):
        f = DepthField(np.linspace(900, 1100, 36).reshape(6, 6))
        write_pgm16(tmp_path / "in.pgm", f, depth_range=(500.0, 1500.0))
        code, _, _ = run(capsys, "restore", tmp_path / "in.pgm", tmp_path / "out.pgm")
        assert code == 0
        assert (tmp_path / "out.pgm").read_bytes().startswith(b"P5\n# depth_range_mm 500.0 1500.0\n")

    @pytest.mark.parametrize(
        "flags",
        [
            ["--alpha", "0"],
            ["--alpha", "1.2"],
            ["--iterations", "0"],
            ["--tau", "2"],
            ["--lambda", "-1"],
            ["--conductance", "cubic"],
            ["--kappa", "-3"],
            ["--init", "median", "--init-radius", "0"],
            ["--alpha", "0.5,0.5", "--iterations", "3"],
            ["--frobnicate", "1"],
        ],
    )
    def test_invalid_config_exits_nonzero(self, plane_pair, tmp_path, capsys, flags):
        _, raw = plane_pair
        code, out, err = run(capsys, "restore", raw, tmp_path / "o.pfm", *flags)
        assert code != 0
        assert err.count("\n") == 1 and err.startswith("fracrd: error:")
        assert not (tmp_path / "o.pfm").exists()

    def test_missing_input(self, tmp_path, capsys):
        code, _, err = run(capsys, "restore", tmp_path / "nope.pfm", tmp_path / "o.pfm")
        assert code == 2 and "nope.pfm" in err and err.count("\n") == 1

    def test_instability_exit_code(self, tmp_path, capsys):
        cb = (np.indices((8, 8)).sum(axis=0) % 2) * 2000.0 - 1000.0
        write_pgm16(tmp_path / "cb.pgm", DepthField(cb), depth_range=(-1000.0, 1000.0))
        argv = ["restore", tmp_path / "cb.pgm", tmp_path / "o.pgm", "--alpha", "0.1", "--tau", "1",
                "--conductance", "const", "--iterations", "600", "--history-window", "50"]
        code, _, err = run(capsys, *argv)
        assert code == 3 and "iteration" in err and err.count("\n") == 1
        assert not (tmp_path / "o.pgm").exists()
        code, out, _ = run(capsys, *argv, "--nan-policy", "clamp")
        assert code == 0 and "stopped early" in out


class TestSynth:
    def test_pipeline_reduces_error(self, plane_pair, tmp_path, capsys):
        gt, raw = plane_pair
        assert run(capsys, "restore", raw, tmp_path / "r.pfm")[0] == 0
        _, raw_csv, _ = run(capsys, "eval", raw, gt)
        _, res_csv, _ = run(capsys, "eval", tmp_path / "r.pfm", gt)
        assert float(rows(res_csv)[1][0]) < float(rows(raw_csv)[1][0])

    def test_seed_determinism(self, tmp_path, capsys):
        for name in ("a", "b", "c"):
            seed = "7" if name != "c" else "8"
            run(capsys, "synth", tmp_path / f"{name}g.pfm", tmp_path / f"{name}r.pfm",
                "--kind", "spheres", "--width", 20, "--height", 20, "--seed", seed)
        assert (tmp_path / "ar.pfm").read_bytes() == (tmp_path / "br.pfm").read_bytes()
        assert (tmp_path / "ar.pfm").read_bytes() != (tmp_path / "cr.pfm").read_bytes()

    def test_zero_degradation_identical(self, tmp_path, capsys):
        code, _, _ = run(capsys, "synth", tmp_path / "g.pfm", tmp_path / "r.pfm",
                         "--kind", "stairs", "--noise-sigma", 0, "--width", 16, "--height", 16)
        assert code == 0
        assert (tmp_path / "g.pfm").read_bytes() == (tmp_path / "r.pfm").read_bytes()

    def test_matches_library(self, tmp_path, capsys):
        run(capsys, "synth", tmp_path / "g.pfm", tmp_path / "r.pfm", "--kind", "slope",
            "--width", 12, "--height", 10, "--seed", 4)
        gt = generate_scene(SceneSpec(kind="slope", width=12, height=10, seed=4))
        raw = degrade(gt, DegradationSpec(seed=4))
        np.testing.assert_array_equal(read_pfm(tmp_path / "r.pfm").data, raw.data.astype(np.float32))

    @pytest.mark.parametrize("flags", [["--depth-min", "0"], ["--width", "0"], ["--attenuation", "0"],
                                       ["--seed", "-1"], ["--kind", "cube"]])
    def test_invalid(self, tmp_path, capsys, flags):
        code, _, err = run(capsys, "synth", tmp_path / "g.pfm", tmp_path / "r.pfm", *flags)
        assert code == 2 and err.count("\n") == 1


class TestEval:
    def test_identical(self, tmp_path, capsys):
        write_pfm(tmp_path / "a.pfm", DepthField.constant(4, 4, 1000.0))
        code, out, _ = run(capsys, "eval", tmp_path / "a.pfm", tmp_path / "a.pfm")
        assert code == 0
        assert out == "mae,rmse,rho_1.02,rho_1.05,rho_1.10\n0,0,100,100,100\n"

    def test_constant_offset(self, tmp_path, capsys):
        write_pfm(tmp_path / "p.pfm", DepthField.constant(4, 4, 1005.0))
        write_pfm(tmp_path / "g.pfm", DepthField.constant(4, 4, 1000.0))
        code, out, _ = run(capsys, "eval", tmp_path / "p.pfm", tmp_path / "g.pfm", "--out", tmp_path / "m.csv")
        assert code == 0
        assert out.splitlines()[1] == "5,5,100,100,100"
        assert (tmp_path / "m.csv").read_bytes() == out.encode()

    def test_custom_thresholds(self, tmp_path, capsys):
        write_pfm(tmp_path / "p.pfm", DepthField.constant(2, 2, 1030.0))
        write_pfm(tmp_path / "g.pfm", DepthField.constant(2, 2, 1000.0))
        _, out, _ = run(capsys, "eval", tmp_path / "p.pfm", tmp_path / "g.pfm", "--thresholds", "1.01,1.25")
        assert out == "mae,rmse,rho_1.01,rho_1.25\n30,30,0,100\n"

    def test_dimension_mismatch(self, tmp_path, capsys):
        write_pfm(tmp_path / "p.pfm", DepthField.constant(4, 4, 1.0))
        write_pfm(tmp_path / "g.pfm", DepthField.constant(5, 4, 1.0))
        code, out, err = run(capsys, "eval", tmp_path / "p.pfm", tmp_path / "g.pfm")
        assert code == 2 and "dimension mismatch" in err and out == ""


class TestSweep:
    ARGS = ["--kind", "step", "--width", 24, "--height", 24]

    def test_rows(self, tmp_path, capsys):
        code, _, _ = run(capsys, "sweep", tmp_path / "s.csv", "--alphas", "0.2,0.4,0.6,0.8,1", *self.ARGS)
        assert code == 0
        table = rows((tmp_path / "s.csv").read_text())
        assert table[0] == ["alpha", "mae", "rmse", "rho_1.02", "rho_1.05", "rho_1.10",
                            "raw_mae", "raw_rmse", "iterations_run"]
        assert [r[0] for r in table[1:]] == ["0.2", "0.4", "0.6", "0.8", "1", "adaptive"]

        gt = generate_scene(SceneSpec(kind="step", width=24, height=24))
        raw = degrade(gt, DegradationSpec())
        out, _ = run_restoration(raw, RestorationConfig(alpha_schedule=1.0))
        assert table[5][1] == f"{compute_metrics(out, gt).mae:.6g}"

    def test_byte_identical_and_stdout(self, tmp_path, capsys):
        for name in ("a.csv", "b.csv"):
            run(capsys, "sweep", tmp_path / name, "--alphas", "0.3,0.7", *self.ARGS)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        _, out, _ = run(capsys, "sweep", "-", "--alphas", "0.3,0.7", *self.ARGS)
        assert out.encode() == (tmp_path / "a.csv").read_bytes()

    def test_bad_alphas(self, capsys):
        code, _, err = run(capsys, "sweep", "-", "--alphas", "0.5,1.5")
        assert code == 2 and "1.5" in err


class TestConfigFile:
    def test_precedence(self, tmp_path, capsys):
        (tmp_path / "c.ini").write_text("[scene]\nwidth = 10\nheight = 8\n[degradation]\nnoise_sigma = 0\n")
        code, _, _ = run(capsys, "synth", tmp_path / "g.pfm", tmp_path / "r.pfm",
                         "--config", tmp_path / "c.ini", "--width", 6)
        assert code == 0
        g = read_pfm(tmp_path / "g.pfm")
        assert (g.width, g.height) == (6, 8)
        assert (tmp_path / "g.pfm").read_bytes() == (tmp_path / "r.pfm").read_bytes()

    def test_io_paths_from_file(self, tmp_path, capsys):
        (tmp_path / "c.ini").write_text(
            f"[io]\ngt = {tmp_path / 'g.pfm'}\nraw = {tmp_path / 'r.pfm'}\n[scene]\nwidth = 5\nheight = 5\n")
        assert run(capsys, "synth", "--config", tmp_path / "c.ini")[0] == 0
        assert (tmp_path / "r.pfm").exists()

    @pytest.mark.parametrize("text", ["[scene]\ncolour = red\n", "[camera]\nfov = 60\n",
                                      "[restoration]\nalpha = half\n", "no section\n"])
    def test_rejected(self, tmp_path, capsys, text):
        (tmp_path / "c.ini").write_text(text)
        code, _, err = run(capsys, "synth", tmp_path / "g.pfm", tmp_path / "r.pfm",
                           "--config", tmp_path / "c.ini")
        if "restoration" in text:
            # restoration keys are valid in the file but unused by synth
            assert code == 0
        else:
            assert code == 2 and err.count("\n") == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracrd.cli", "eval", str(tmp_path / "x"), str(tmp_path / "y")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("fracrd: error:") and proc.stderr.count("\n") == 1


def test_no_subcommand(capsys):
    code, _, err = run(capsys)
    assert code == 2 and "subcommand" in err
