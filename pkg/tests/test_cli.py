import json
import os
import subprocess
import sys

import numpy as np
import pytest

from divakit import analysis
from divakit.cli import main
from divakit.targets import parse_target


def run(args):
    return main([str(a) for a in args])


class TestTargets:
    def test_list(self, capsys):
        assert run(["targets", "list"]) == 0
        out = capsys.readouterr().out.split()
        assert out == ["i", "u", "e", "ae", "happy", "example"]

    def test_show_roundtrips(self, capsys):
        assert run(["targets", "show", "i"]) == 0
        text = capsys.readouterr().out
        assert parse_target(text).name == "i"

    def test_show_unknown(self, capsys):
        assert run(["targets", "show", "zz"]) == 2


class TestProduce:
    def test_artifacts_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        assert run(["produce", "u", "--deterministic", "--seed", 1, "--out", out]) == 0
        names = sorted(os.listdir(out))
        assert names == ["manifest.json", "u_iter01.prog.csv", "u_iter01.wav",
                         "u_iter01_meta.json", "u_iter01_trace.csv"]
        manifest = json.loads((out / "manifest.json").read_text())
        for rel in manifest["outputs"]:
            assert (out / rel).is_file()
        assert manifest["seed"] == 1

    def test_unknown_target_exit_2(self, tmp_path):
        assert run(["produce", "nosuch", "--out", tmp_path / "x"]) == 2

    def test_example_needs_reset(self, tmp_path):
        # 'example' ships without a trained program on purpose
        assert run(["produce", "example", "--out", tmp_path / "x"]) == 2
        assert run(["produce", "example", "--reset", "--deterministic",
                    "--out", tmp_path / "y"]) == 0

    def test_deterministic_reruns_bit_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["produce", "u", "--deterministic", "--seed", 7, "--out", out]) == 0
        for name in ("u_iter01_trace.csv", "u_iter01.wav", "u_iter01.prog.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        ma = json.loads((a / "manifest.json").read_text())
        mb = json.loads((b / "manifest.json").read_text())
        ma["created_utc"] = mb["created_utc"] = None
        ma["args"]["out"] = mb["args"]["out"] = None
        assert ma == mb

    def test_repetitions_write_rmse_table(self, tmp_path):
        out = tmp_path / "reps"
        assert run(["produce", "u", "--iterations", 2, "--repetitions", 2,
                    "--deterministic", "--out", out]) == 0
        lines = (out / "rmse_by_iteration.csv").read_text().splitlines()
        assert lines[0] == "repetition,iteration,rmse_percent"
        assert len(lines) == 1 + 2 * 2
        # final iteration compared with itself is exactly zero
        finals = [l for l in lines[1:] if l.split(",")[1] == "2"]
        assert all(float(l.split(",")[2]) == 0.0 for l in finals)

    def test_config_file_overrides(self, tmp_path):
        cfg = tmp_path / "engine.cfg"
        cfg.write_text("g_aud = 0.0\ng_som = 0.0\nsmoothing_taps = 1.0\n")
        out = tmp_path / "run"
        assert run(["produce", "u", "--deterministic", "--config", cfg, "--out", out]) == 0
        mat = np.loadtxt(out / "u_iter01_trace.csv", delimiter=",", skiprows=1)
        assert np.all(mat[:, 27:40] == 0.0)  # corrective columns silent

    def test_bad_config_exit_2(self, tmp_path):
        cfg = tmp_path / "engine.cfg"
        cfg.write_text("bogus_key = 1\n")
        assert run(["produce", "u", "--config", cfg, "--out", tmp_path / "x"]) == 2


class TestMakeTarget:
    def test_formants_arithmetic(self, tmp_path):
        out = tmp_path / "v.target"
        assert run(["make-target", "--formants", "120,700,1200,2500",
                    "--tolerance", 0.05, "--duration", 500, "--out", out]) == 0
        target = parse_target(out.read_text())
        assert target.region_at("F1", 250) == pytest.approx((665.0, 735.0))
        assert target.duration_ms == 500

    def test_silence_wav_unvoiced_error(self, tmp_path):
        wav = tmp_path / "silence.wav"
        analysis.write_wav(wav, np.zeros(11025), 11025)
        assert run(["make-target", "--from-wav", wav, "--out", tmp_path / "s.target"]) == 1

    def test_source_flags_exclusive(self, tmp_path):
        assert run(["make-target", "--out", tmp_path / "x.target"]) == 2
        wav = tmp_path / "w.wav"
        analysis.write_wav(wav, np.zeros(100), 11025)
        assert run(["make-target", "--from-wav", wav, "--formants", "1,2,3,4",
                    "--out", tmp_path / "x.target"]) == 2

    def test_bad_formant_string(self, tmp_path):
        assert run(["make-target", "--formants", "120,700", "--out", tmp_path / "x.target"]) == 2


@pytest.fixture(scope="module")
def vowel_wav(tmp_path_factory):
    out = tmp_path_factory.mktemp("vowel")
    assert main(["produce", "e", "--deterministic", "--seed", "3", "--out", str(out)]) == 0
    return out / "e_iter01.wav"


class TestMimic:
    def test_default_runs_five_productions(self, tmp_path, vowel_wav):
        out = tmp_path / "mim"
        assert run(["mimic", "--wav", vowel_wav, "--deterministic", "--seed", 5,
                    "--out", out]) == 0
        lines = (out / "error_by_iteration.csv").read_text().splitlines()
        assert len(lines) == 1 + 5  # header + 4 learning + 1 saved production
        assert (out / "e_iter01_mimic.wav").is_file()
        assert (out / "e_iter01.target").is_file()

    def test_zero_iterations_saves_unlearned(self, tmp_path, vowel_wav):
        out = tmp_path / "mim0"
        assert run(["mimic", "--wav", vowel_wav, "--iterations", 0,
                    "--deterministic", "--out", out]) == 0
        lines = (out / "error_by_iteration.csv").read_text().splitlines()
        assert len(lines) == 2


class TestCompare:
    def test_self_compare_zero(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert run(["produce", "u", "--deterministic", "--out", out]) == 0
        trace = out / "u_iter01_trace.csv"
        assert run(["compare", trace, trace]) == 0
        printed = capsys.readouterr().out
        assert "overall: 0.0000%" in printed
        assert "motor: 0.0000%" in printed

    def test_shape_mismatch_exit_2(self, tmp_path):
        out_u = tmp_path / "u"
        out_h = tmp_path / "h"
        assert run(["produce", "u", "--deterministic", "--out", out_u]) == 0
        assert run(["produce", "happy", "--deterministic", "--out", out_h]) == 0
        assert run(["compare", out_u / "u_iter01_trace.csv", out_h / "happy_iter01_trace.csv"]) == 2


def test_module_entrypoint_subprocess():
    proc = subprocess.run([sys.executable, "-m", "divakit", "targets", "list"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "happy" in proc.stdout