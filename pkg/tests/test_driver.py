import json
import subprocess
import sys

import numpy as np
import pytest

from ttosim.driver import (RunConfig, load_config, load_driver_checkpoint,
                           read_records, records_header, resume, run_quench,
                           sweep)

CONFIG_TEXT = """
[model]
sites = 4
coupling = 1.0
anisotropy = 0.5
rate = 1.0
drive = 1.0
initial_state = Z-

[evolution]
dt = 0.05
t_max = 0.5
merge_unitaries = true

[caps]
chi_max = 16
kraus_max = 64
cutoff = 0.0

[measure]
every = 2
seed = 7

[output]
directory = run
checkpoint_every = 0
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(CONFIG_TEXT)
    return load_config(path)


class TestConfig:
    def test_load_round_trip(self, small_cfg):
        assert small_cfg.n_sites == 4
        assert small_cfg.dt == 0.05
        assert small_cfg.chi_max == 16
        assert small_cfg.measure_every == 2
        assert small_cfg.merge_unitaries is True

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(CONFIG_TEXT.replace("sites = 4", "sites = 4\nbogus = 1"))
        with pytest.raises(ValueError, match="unknown config key"):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(CONFIG_TEXT + "\n[nonsense]\nx = 1\n")
        with pytest.raises(ValueError, match="unknown config section"):
            load_config(path)

    def test_missing_required(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[model]\nsites = 4\n")
        with pytest.raises(ValueError, match="missing required"):
            load_config(path)

    def test_validation(self):
        with pytest.raises(ValueError, match="dt"):
            RunConfig(n_sites=4, chi_max=4, kraus_max=4, dt=0.0).validate()
        with pytest.raises(ValueError, match="observables"):
            RunConfig(n_sites=4, chi_max=4, kraus_max=4,
                      measure_set=("spam",)).validate()
        with pytest.raises(ValueError, match="crosscheck"):
            RunConfig(n_sites=8, chi_max=4, kraus_max=4,
                      oracle_crosscheck=True).validate()


class TestRunQuench:
    def test_zero_time_single_record(self, small_cfg, tmp_path):
        from dataclasses import replace
        cfg = replace(small_cfg, t_max=0.0)
        res = run_quench(cfg, output_dir=tmp_path / "t0")
        assert len(res.records) == 1
        rec = res.records[0]
        assert rec.t == 0.0
        np.testing.assert_allclose(rec.current, 0.0, atol=1e-12)
        np.testing.assert_allclose(rec.z, -1.0, atol=1e-12)
        header, data = read_records(res.records_path)
        assert header == records_header(4)
        assert data.shape == (1, len(header))

    def test_records_file_format(self, small_cfg, tmp_path):
        res = run_quench(small_cfg, output_dir=tmp_path / "fmt")
        text = res.records_path.read_text().splitlines()
        assert text[0] == ",".join(records_header(4))
        # 17 significant digits on floats
        first = text[1].split(",")
        assert "." in first[0] or "0" == first[0]
        assert len(text) == 1 + len(res.records)
        # measurement cadence: every 2 steps of 10, plus t=0
        times = [float(line.split(",")[0]) for line in text[1:]]
        np.testing.assert_allclose(times, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
                                   atol=1e-12)

    def test_manifest_contents(self, small_cfg, tmp_path):
        res = run_quench(small_cfg, output_dir=tmp_path / "mf")
        manifest = json.loads((res.output_dir / "manifest.json").read_text())
        assert manifest["status"] == "done"
        assert manifest["config"]["n_sites"] == 4
        assert manifest["peak_chi"] <= 16
        assert manifest["peak_kraus"] <= 64
        assert manifest["max_trace_drift"] < 1e-8
        assert "current_arrival_time" in manifest

    def test_record_invariants_hold(self, small_cfg, tmp_path):
        res = run_quench(small_cfg, output_dir=tmp_path / "inv")
        for rec in res.records:
            rec.validate(tol=1e-9)
            assert abs(rec.trace - 1.0) < 1e-9


class TestResume:
    def test_resume_matches_straight_run(self, small_cfg, tmp_path):
        from dataclasses import replace
        cfg = replace(small_cfg, t_max=0.6, checkpoint_every=6)
        straight = run_quench(cfg, output_dir=tmp_path / "straight")
        half = replace(cfg, t_max=0.3)
        first = run_quench(half, output_dir=tmp_path / "part1")
        assert first.checkpoint_path is not None
        second = resume(first.checkpoint_path, tmp_path / "part2", t_max=0.6)
        times_a = [r.t for r in straight.records]
        times_b = [r.t for r in first.records] + [r.t for r in second.records]
        np.testing.assert_allclose(times_a, times_b, atol=1e-12)
        for ra, rb in zip(straight.records,
                          first.records + second.records):
            np.testing.assert_allclose(ra.z, rb.z, atol=1e-10)
            np.testing.assert_allclose(ra.current, rb.current, atol=1e-10)
            np.testing.assert_allclose(ra.log_negativity, rb.log_negativity,
                                       atol=1e-10)

    def test_resume_past_end_is_noop(self, small_cfg, tmp_path):
        res = run_quench(small_cfg, output_dir=tmp_path / "base")
        again = resume(res.checkpoint_path, tmp_path / "noop")
        assert len(again.records) == 0

    def test_physical_override_rejected(self, small_cfg, tmp_path):
        res = run_quench(small_cfg, output_dir=tmp_path / "base2")
        state, step, t, cfg, rng_state = load_driver_checkpoint(
            res.checkpoint_path)
        with pytest.raises(ValueError, match="t_max"):
            resume(res.checkpoint_path, tmp_path / "bad", t_max=0.1)

    def test_checkpoint_round_trip_bit_exact(self, small_cfg, tmp_path):
        res = run_quench(small_cfg, output_dir=tmp_path / "ck")
        state, step, t, cfg, rng_state = load_driver_checkpoint(
            res.checkpoint_path)
        assert step == 10
        from ttosim.tree import state_to_bytes
        from ttosim.driver import save_driver_checkpoint
        rng = np.random.default_rng()
        rng.bit_generator.state = rng_state
        copy_path = tmp_path / "copy.ttoc"
        save_driver_checkpoint(copy_path, state, step, t, cfg, rng)
        assert copy_path.read_bytes() == res.checkpoint_path.read_bytes()


class TestSweep:
    def test_single_value_equals_run(self, small_cfg, tmp_path):
        from dataclasses import replace
        cfg = replace(small_cfg, t_max=0.2)
        direct = run_quench(cfg, output_dir=tmp_path / "direct")
        summary = sweep(cfg, "gamma", [1.0], tmp_path / "sw")
        run = summary["runs"][0]
        assert run["status"] == "ok"
        last = direct.records[-1]
        np.testing.assert_allclose(run["N_L"], last.log_negativity, atol=1e-12)
        np.testing.assert_allclose(run["I_LR"], last.mutual_information,
                                   atol=1e-12)
        assert (tmp_path / "sw" / "sweep_summary.csv").exists()

    def test_failures_marked_and_continue(self, small_cfg, tmp_path):
        from dataclasses import replace
        cfg = replace(small_cfg, t_max=0.1)
        summary = sweep(cfg, "dt", [-1.0, 0.05], tmp_path / "swfail")
        status = [r["status"] for r in summary["runs"]]
        assert status == ["failed", "ok"]

    def test_bad_axis(self, small_cfg, tmp_path):
        with pytest.raises(ValueError, match="axis"):
            sweep(small_cfg, "banana", [1], tmp_path / "x")


class TestCrosscheck:
    def test_small_crosscheck_report(self, small_cfg, tmp_path):
        from dataclasses import replace
        cfg = replace(small_cfg, dt=0.025, t_max=0.5, oracle_crosscheck=True)
        res = run_quench(cfg, output_dir=tmp_path / "cc")
        report = res.manifest["oracle_crosscheck"]
        # full caps: deviation is purely the O(dt^2) Trotter error
        assert report["max_deviation"] < 1e-3
        assert (res.output_dir / "crosscheck.json").exists()


class TestCli:
    def test_cli_run_and_errors(self, tmp_path):
        cfg_path = tmp_path / "cfg.ini"
        cfg_path.write_text(CONFIG_TEXT.replace("t_max = 0.5", "t_max = 0.1"))
        out = subprocess.run(
            [sys.executable, "-m", "ttosim.cli", "run", str(cfg_path),
             "--output-dir", str(tmp_path / "out")],
            capture_output=True, text=True)
        assert out.returncode == 0, out.stderr
        assert (tmp_path / "out" / "records.csv").exists()
        bad = subprocess.run(
            [sys.executable, "-m", "ttosim.cli", "run",
             str(tmp_path / "missing.ini")],
            capture_output=True, text=True)
        assert bad.returncode == 2
        assert "error" in bad.stderr


