import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from aggrekin.fv import extract_peaks
from aggrekin.measures import bump_mass_unit
from aggrekin.scenarios import (
    PRESET_NAMES,
    RunReport,
    ScenarioError,
    initial_cluster_set,
    initial_grid_state,
    load_scenario,
    make_kernel,
    preset,
    report_sync_analysis,
    run_scenario,
    scenario_from_dict,
    scenario_to_dict,
    write_scenario,
)

M0 = bump_mass_unit()


def quick_particle_config(tmp_path: Path, name="quick") -> Path:
    cfg = {
        "name": name,
        "params": {"chi1": 10.0, "chi2": 1.0},
        "kernel": {"kind": "exponential"},
        "initial": {
            "species1": {"clusters": [[-0.3, 0.05], [0.4, 0.025]]},
            "species2": {"clusters": [[0.0, 0.05]]},
        },
        "solver": "particles",
        "T": 1.0,
        "output_dir": str(tmp_path / name),
    }
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return path


class TestLoadScenario:
    def test_builtin_preset_name(self):
        s = load_scenario("example1")
        assert s.params.chi1 == 10.0 and s.params.chi2 == 1.0
        assert s.params.theta1 == 1.0 and s.params.theta2 == 1.0
        assert s.initial1["bumps"] == [[4.0, -0.5], [2.0, 0.5]]
        assert s.initial2["bumps"] == [[2.0, -0.15]]

    def test_preset_key_with_overrides_keeps_default_T(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"preset": "example2", "solver": "particles"}))
        s = load_scenario(path)
        assert s.T == 2.5
        assert s.initial1["bumps"] == [[2.0, -0.5], [4.0, 0.5]]

    def test_unknown_solver_lists_valid_tags(self, tmp_path):
        path = quick_particle_config(tmp_path)
        data = json.loads(path.read_text())
        data["solver"] = "spectral"
        path.write_text(json.dumps(data))
        with pytest.raises(ScenarioError, match="fv, particles, kinetic, compare"):
            load_scenario(path)

    def test_unknown_key_is_named(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"params": {}, "initial": {}, "solver": "fv", "T": 1, "bogus": 2}))
        with pytest.raises(ScenarioError, match="bogus"):
            load_scenario(path)

    def test_negative_mass_rejected(self, tmp_path):
        path = quick_particle_config(tmp_path)
        data = json.loads(path.read_text())
        data["initial"]["species1"]["clusters"][0][1] = -1.0
        path.write_text(json.dumps(data))
        with pytest.raises(ScenarioError, match="species1"):
            load_scenario(path)

    def test_bad_cfl_safety_rejected(self, tmp_path):
        path = quick_particle_config(tmp_path)
        data = json.loads(path.read_text())
        data["cfl_safety"] = 1.0
        path.write_text(json.dumps(data))
        with pytest.raises(ScenarioError, match="cfl_safety"):
            load_scenario(path)

    def test_round_trip_is_identical(self, tmp_path):
        s = preset("example3")
        path = tmp_path / "echo.json"
        write_scenario(path, s)
        back = load_scenario(path)
        assert scenario_to_dict(back) == scenario_to_dict(s)
        path2 = tmp_path / "echo2.json"
        write_scenario(path2, back)
        assert path.read_bytes() == path2.read_bytes()

    def test_grid_solver_requires_grid(self):
        with pytest.raises(ScenarioError, match="grid"):
            scenario_from_dict(
                {
                    "params": {"chi1": 1.0, "chi2": 1.0},
                    "initial": {
                        "species1": {"bumps": [[1.0, 0.0]]},
                        "species2": {"bumps": []},
                    },
                    "solver": "fv",
                    "T": 1.0,
                }
            )


class TestPresets:
    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_initial_peak_masses_match_bump_units(self, name):
        s = preset(name)
        st = initial_grid_state(s)
        peaks = extract_peaks(st)
        bumps = sorted(
            [(c, a, 1) for a, c in s.initial1["bumps"]]
            + [(c, a, 2) for a, c in s.initial2["bumps"]],
            key=lambda b: b[0],
        )
        # bumps closer than 0.05 overlap on the grid and form one peak
        groups: list[list[tuple]] = []
        for bump in bumps:
            if groups and bump[0] - groups[-1][-1][0] < 0.05:
                groups[-1].append(bump)
            else:
                groups.append([bump])
        assert len(peaks) == len(groups)
        for peak, group in zip(peaks, groups):
            m1 = sum(a for _, a, sp in group if sp == 1)
            m2 = sum(a for _, a, sp in group if sp == 2)
            assert peak.mass1 == pytest.approx(m1 * M0, rel=0.01, abs=1e-12)
            assert peak.mass2 == pytest.approx(m2 * M0, rel=0.01, abs=1e-12)

    def test_unknown_preset(self):
        with pytest.raises(ScenarioError):
            preset("example9")

    def test_bumps_to_clusters_conversion(self):
        s = preset("example1")
        cs = initial_cluster_set(s)
        masses = [(c.position, c.m1 / M0, c.m2 / M0) for c in cs.clusters]
        assert masses[0] == pytest.approx((-0.5, 4.0, 0.0))
        assert masses[1] == pytest.approx((-0.15, 0.0, 2.0))
        assert masses[2] == pytest.approx((0.5, 2.0, 0.0))


class TestMakeKernel:
    def test_exponential(self):
        assert make_kernel({"kind": "exponential"}).kind == "exponential"

    def test_regularized(self):
        k = make_kernel({"kind": "regularized", "n": 4})
        assert k.kind == "regularized"

    def test_unknown_kind(self):
        with pytest.raises(ScenarioError):
            make_kernel({"kind": "newtonian"})


class TestRunScenario:
    def test_particle_run_writes_outputs(self, tmp_path):
        s = load_scenario(quick_particle_config(tmp_path))
        report = run_scenario(s)
        out = Path(s.output_dir)
        for fname in ("trajectories.csv", "events.json", "report.json", "scenario.json"):
            assert (out / fname).exists()
        assert report.conservation["mass1_drift"] == 0.0
        payload = json.loads((out / "report.json").read_text())
        assert payload["solver"] == "particles"

    def test_determinism_byte_identical(self, tmp_path):
        pa = quick_particle_config(tmp_path, "run_a")
        pb = quick_particle_config(tmp_path, "run_b")
        ra = run_scenario(load_scenario(pa))
        rb = run_scenario(load_scenario(pb))
        out_a = Path(json.loads(pa.read_text())["output_dir"])
        out_b = Path(json.loads(pb.read_text())["output_dir"])
        for fname in ("trajectories.csv", "events.json"):
            assert (out_a / fname).read_bytes() == (out_b / fname).read_bytes()

    @pytest.mark.filterwarnings("ignore::aggrekin.measures.CoarseGridWarning")
    def test_compare_solver_reports_agreement(self, tmp_path):
        s = preset("example1", solver="compare", dx=2e-3, T=1.2)
        s = replace(s, output_dir=str(tmp_path / "cmp"))
        report = run_scenario(s)
        matches = report.extra["event_agreement"]
        assert matches, "expected at least one matched event"
        contact = [m for m in matches if m["kind"] == "contact"][0]
        assert contact["dt"] < 0.05

    @pytest.mark.filterwarnings("ignore::aggrekin.measures.CoarseGridWarning")
    def test_kinetic_scenario_requires_positivity(self, tmp_path):
        s = preset("example1", solver="kinetic", dx=2e-3, T=0.1)
        s.output_dir = str(tmp_path / "kin")
        with pytest.raises(ScenarioError, match="chi"):
            run_scenario(s)

    def test_kinetic_scenario_runs_with_valid_params(self, tmp_path):
        cfg = {
            "name": "kin",
            "params": {"chi1": 0.45, "chi2": 0.3},
            "initial": {
                "species1": {"bumps": [[1.0, -0.4]]},
                "species2": {"bumps": [[1.0, 0.4]]},
            },
            "bump_width": 200.0,
            "solver": "kinetic",
            "grid": {"xmin": -2.0, "xmax": 2.0, "dx": 4e-3},
            "T": 0.2,
            "epsilon": 0.1,
            "snapshot_times": [0.0, 0.2],
            "output_dir": str(tmp_path / "kin"),
        }
        path = tmp_path / "kin.json"
        path.write_text(json.dumps(cfg))
        report = run_scenario(load_scenario(path))
        out = Path(cfg["output_dir"])
        assert (out / "kinetic_000.csv").exists()
        assert report.conservation["mass1_drift"] == 0.0

    def test_report_sync_analysis_table(self, tmp_path):
        s = load_scenario(quick_particle_config(tmp_path, "table"))
        report = run_scenario(s)
        text = report_sync_analysis(report)
        assert "LHS" in text and "RHS" in text
        assert "synchronise" in text or "separate" in text


class TestCrossValidation:
    def test_fv_peaks_track_particle_positions_before_collision(self):
        from aggrekin.fv import run as fv_run, species_peaks
        from aggrekin.particles import run as particle_run

        kernel = make_kernel({"kind": "exponential"})
        s = preset("example1", dx=1e-3, T=0.8)
        st0 = initial_grid_state(s)
        cs0 = initial_cluster_set(s)
        times = (0.3, 0.6, 0.8)
        fres = fv_run(st0, kernel, s.params, 0.8, snapshot_times=times, track_peaks=False)
        pres = particle_run(cs0, kernel, s.params, 0.8, snapshot_times=times)
        for (t_fv, state), (t_p, snap) in zip(fres.snapshots, pres.snapshots):
            fv_pos = sorted(
                q.position for sp in (1, 2) for q in species_peaks(state, sp)
            )
            part_pos = sorted(c.position for c in snap.clusters)
            assert len(fv_pos) == len(part_pos)
            for a, b in zip(fv_pos, part_pos):
                assert abs(a - b) <= 3 * st0.dx


class TestCli:
    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "aggrekin.cli", *args],
            capture_output=True,
            text=True,
        )

    def test_preset_command(self, tmp_path):
        proc = self.run_cli(
            "preset", "example1", "--solver", "particles", "--out", str(tmp_path)
        )
        assert proc.returncode == 0, proc.stderr
        assert "synchronise" in proc.stdout
        assert (tmp_path / "example1" / "events.json").exists()

    def test_run_command_and_report(self, tmp_path):
        cfg = quick_particle_config(tmp_path, "cli_run")
        proc = self.run_cli("run", str(cfg))
        assert proc.returncode == 0, proc.stderr
        run_dir = tmp_path / "cli_run"
        proc2 = self.run_cli("report", str(run_dir))
        assert proc2.returncode == 0, proc2.stderr
        assert "sync analysis" in proc2.stdout

    def test_failure_emits_json_error(self, tmp_path):
        missing = tmp_path / "nope.json"
        proc = self.run_cli("run", str(missing))
        assert proc.returncode == 1
        payload = json.loads(proc.stderr.strip().splitlines()[-1])
        assert payload["error"] == "ScenarioError"

    def test_help_prints_schema(self):
        proc = self.run_cli("--help")
        assert proc.returncode == 0
        assert "Scenario JSON schema" in proc.stdout

    def test_output_root_env_override(self, tmp_path, monkeypatch):
        from aggrekin.scenarios import resolve_output_dir

        monkeypatch.setenv("AGGREKIN_OUTPUT_ROOT", str(tmp_path / "envroot"))
        s = preset("example1")
        out = resolve_output_dir(s)
        assert out == tmp_path / "envroot" / "example1"
        assert out.is_dir()

    def test_limit_command(self, tmp_path):
        cfg = {
            "name": "lim",
            "params": {"chi1": 0.45, "chi2": 0.3},
            "initial": {
                "species1": {"bumps": [[1.0, -0.4]]},
                "species2": {"bumps": [[1.0, 0.4]]},
            },
            "bump_width": 200.0,
            "solver": "kinetic",
            "grid": {"xmin": -2.0, "xmax": 2.0, "dx": 4e-3},
            "T": 0.2,
            "eps_list": [0.5, 0.1],
            "output_dir": str(tmp_path / "lim"),
        }
        path = tmp_path / "lim.json"
        path.write_text(json.dumps(cfg))
        proc = self.run_cli("limit", str(path))
        assert proc.returncode == 0, proc.stderr
        table = (tmp_path / "lim" / "limit.csv").read_text().splitlines()
        assert table[0] == "epsilon,w2_species1,w2_species2"
        assert len(table) == 3
