"""
These tests run the command line end to end on small configs and check the
files it writes.
"""

import json
import textwrap

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from cohwit import cli
from cohwit.config import RunConfig
from cohwit.runner import Cache, Runner, read_footer

MONOMER = """
system:
  kind: monomer
  omega_e: 1.5
  huang_rhys: 0.02
  omega0_cm: 100
pulses:
  sigmas: [0.1, 0.2, 0.3, 0.4]
numerics:
  time_step: 0.1
  t_final: 15
  basis:
    truncation: 12
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "monomer.yaml"
    path.write_text(textwrap.dedent(MONOMER))
    return path


def invoke(*args):
    result = CliRunner().invoke(cli.cli, [str(a) for a in args], catch_exceptions=False)
    return result


def read_csv(path):
    return pd.read_csv(path, comment="#")


class TestErrors:
    """Invalid input ends with the exit code of its error."""

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("system:\n  kind: monomer\n  omega_e: 1.5\n  huang_rhys: 0.02\n  colour: red\n")
        result = invoke("absorption", path, "-o", tmp_path / "out")
        assert result.exit_code == 2

    def test_invalid_parameter(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("system:\n  kind: monomer\n  omega_e: 0\n  huang_rhys: 0.02\n")
        assert invoke("recommend", path, "-o", tmp_path / "out").exit_code == 2

    def test_missing_config(self, tmp_path):
        assert invoke("absorption", tmp_path / "nope.yaml").exit_code == 2


class TestSpectra:
    def test_absorption(self, config, tmp_path):
        out = tmp_path / "out"
        result = invoke("absorption", config, "-o", out)
        assert result.exit_code == 0
        sticks = read_csv(out / "absorption_sticks.csv")
        footer = read_footer(out / "absorption_sticks.csv")
        mean = np.sum(sticks.frequency * sticks.weight) / np.sum(sticks.weight)
        assert float(footer["mean"]) == pytest.approx(mean, rel=1e-9)
        assert footer["advisory"] == "none"
        assert (out / "absorption_curve.csv").exists()
        record = json.loads((out / "absorption.json").read_text())
        assert record["kind"] == "absorption"
        assert record["config"]["system"]["omega_e"] == 1.5

    def test_raman(self, config, tmp_path):
        out = tmp_path / "out"
        assert invoke("raman", config, "-o", out).exit_code == 0
        curve = read_csv(out / "raman_curve.csv")
        assert np.all(curve.intensity >= 0)
        assert float(read_footer(out / "raman_sticks.csv")["gamma"]) == pytest.approx(0.01)

    def test_recommend(self, config, tmp_path):
        out = tmp_path / "out"
        assert invoke("recommend", config, "-o", out).exit_code == 0
        payload = json.loads((out / "recommendation.json").read_text())["payload"]
        assert payload["sigma_max"] == pytest.approx(1 / (10 * np.sqrt(payload["absorption_variance"])))
        assert payload["center_frequency"] == pytest.approx(payload["absorption_mean"])


class TestPumpProbe:
    def test_sos_traces(self, config, tmp_path):
        out = tmp_path / "out"
        assert invoke("pumpprobe", config, "-o", out).exit_code == 0
        frames = sorted(out.glob("pumpprobe_sos_*.csv"))
        assert len(frames) == 4
        trace = read_csv(frames[0])
        assert list(trace.columns) == ["T", "T_fs", "S_PP", "SE", "ESA", "GSB"]
        assert trace.ESA.isna().all()
        assert np.allclose(trace.S_PP, trace.SE + trace.GSB)
        assert read_footer(frames[0])["engine"] == "sos"

    @pytest.mark.slow
    def test_both_engines_agree(self, config, tmp_path):
        out = tmp_path / "out"
        result = invoke("pumpprobe", config, "-o", out, "--engine", "both")
        assert result.exit_code == 0
        assert len(list(out.glob("pumpprobe_grid_*.csv"))) == 4
        footer = read_footer(out / "pumpprobe_grid_00.csv")
        assert np.isfinite(float(footer["max_rel_dev"]))
        assert "max_rel_dev" in result.output


class TestWitness:
    def test_witness_files(self, config, tmp_path):
        out = tmp_path / "out"
        result = invoke("witness", config, "-o", out)
        assert result.exit_code == 0
        assert "classification" in result.output
        assert "T_A" in result.output
        curve = read_csv(out / "witness.csv")
        assert list(curve.columns) == ["sigma", "fwhm", "gamma"]
        assert len(curve) == 4
        footer = read_footer(out / "witness.csv")
        assert footer["classification"] in ("vibrational", "electronic_present", "inconclusive")
        assert float(footer["t_min"]) == pytest.approx(2.4)
        assert (out / "recommendation.json").exists()

    def test_reruns_are_byte_identical(self, config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert invoke("witness", config, "-o", a).exit_code == 0
        assert invoke("witness", config, "-o", b, "-j", "2").exit_code == 0
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


class TestCache:
    """Results are keyed by the config subtree they depend on."""

    def test_second_run_hits(self, config, tmp_path):
        cfg = RunConfig.load(config)
        cache = Cache(tmp_path / "cache")
        first = Runner(cfg, cache).absorption()
        assert (cache.hits, cache.misses) == (0, 1)
        second = Runner(cfg, cache).absorption()
        assert cache.hits == 1
        assert first == second
        index = json.loads((tmp_path / "cache" / "index.json").read_text())
        assert [v["kind"] for v in index.values()] == ["absorption"]

    def test_unrelated_change_reuses_spectrum(self, config, tmp_path):
        cfg = RunConfig.load(config)
        cache = Cache(tmp_path / "cache")
        Runner(cfg, cache).absorption()
        other = RunConfig.loads(textwrap.dedent(MONOMER).replace("[0.1, 0.2, 0.3, 0.4]", "[0.2, 0.5]"))
        Runner(other, cache).absorption()
        assert cache.hits == 1

    def test_cli_writes_the_cache(self, config, tmp_path):
        cache = tmp_path / "cache"
        assert invoke("recommend", config, "-o", tmp_path / "out", "--cache", cache).exit_code == 0
        assert (cache / "index.json").exists()


class TestSweep:
    def test_centering_sweep(self, tmp_path):
        path = tmp_path / "sweep.yaml"
        path.write_text(
            textwrap.dedent(MONOMER)
            + "sweep:\n  axis: centering\n  values: [absorption_mean, midpoint]\n"
        )
        out = tmp_path / "out"
        assert invoke("sweep", path, "-o", out, "-j", "2").exit_code == 0
        table = read_csv(out / "sweep.csv")
        assert list(table.centering) == ["absorption_mean", "midpoint"]
        assert np.all(table.T_A > 0)
        assert "partial" not in read_footer(out / "sweep.csv")


def test_plot(config, tmp_path):
    out = tmp_path / "out"
    assert invoke("absorption", config, "-o", out).exit_code == 0
    assert invoke("witness", config, "-o", out).exit_code == 0
    assert invoke("plot", out).exit_code == 0
    assert len(list(out.glob("*.png"))) >= 2


@pytest.mark.slow
def test_checkhealth():
    assert invoke("checkhealth").exit_code == 0
