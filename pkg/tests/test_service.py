import json

import numpy as np
import pytest

from nlslab import config
from nlslab import data_service as ds
from nlslab import radial_core as rc
from nlslab.cli import main
from nlslab.diagnostics import diagnose
from nlslab.errors import ConfigError, MissingCertificateError
from nlslab.exact_solutions import soliton
from nlslab.models import BlowupReport, ExperimentConfig
from nlslab.propagator import Trajectory
from nlslab.radial_core import RadialField
from nlslab.service import ExperimentService, classify, enforce_monotone

SMALL_GRID = {"d": 4, "M": 128, "rmax": 20.0}


def free_gaussian(grid, t):
    z = 1.0 + 4.0j * t
    return RadialField(grid, z ** (-grid.d / 2.0) * np.exp(-(grid.r**2) / z))


@pytest.fixture
def certificate(tmp_path, Q):
    store = ds.RunStore(tmp_path / "certificate")
    return str(store.root / ds.save_certificate(store, Q.certificate(), Q.profile))


@pytest.fixture
def no_default_certificate(monkeypatch):
    monkeypatch.setattr(config, "DEFAULT_CERTIFICATE", None)


class TestClassify:
    def test_blowup_wins(self, Q):
        times = [0.0, 0.5, 1.0]
        traj = Trajectory.from_snapshots(times, [soliton(Q, t) for t in times])
        report = diagnose(traj, Q)
        assert classify(traj, report, BlowupReport(detected=True, reason="step-floor")) == "blowup-like"

    def test_soliton_like(self, Q):
        times = [0.0, 0.5, 1.0, 1.5, 2.0]
        traj = Trajectory.from_snapshots(times, [soliton(Q, t) for t in times])
        assert classify(traj, diagnose(traj, Q), BlowupReport()) == "soliton-like"

    def test_disperse_like(self, grid):
        times = [0.25 * k for k in range(9)]
        traj = Trajectory.from_snapshots(times, [free_gaussian(grid, t) for t in times], nonlinearity=0.0)
        assert classify(traj, diagnose(traj), BlowupReport()) == "disperse-like"

    def test_undecided_without_decay(self, grid):
        times = [0.0, 0.5, 1.0]
        g = rc.gaussian(grid)
        traj = Trajectory.from_snapshots(times, [g, g, g], nonlinearity=0.0)
        assert classify(traj, diagnose(traj), BlowupReport()) == "undecided"


def test_enforce_monotone():
    labels = {
        ("Q", 0.9): "disperse-like",
        ("Q", 1.1): "blowup-like",
        ("Q", 1.3): "disperse-like",
        ("gaussian", 1.3): "disperse-like",
    }
    fixed = enforce_monotone(labels)
    assert fixed[("Q", 1.3)] == "undecided"
    assert fixed[("Q", 0.9)] == "disperse-like"
    assert fixed[("gaussian", 1.3)] == "disperse-like"
    assert labels[("Q", 1.3)] == "disperse-like"


class TestConfig:
    def test_invalid_scenario(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentService.parse_config({"scenario": "bogus"})
        assert exc.value.detail["errors"][0]["loc"] == ["scenario"]

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            ExperimentService.parse_config('{"scenario": "soliton", "t_span": [1.0, 0.0]}')

    def test_census_ratios_sorted(self):
        cfg = ExperimentService.parse_config({"scenario": "threshold-census", "census_ratios": [1.1, 0.9]})
        assert cfg.census_ratios == [0.9, 1.1]

    def test_default_probe_scales(self):
        assert ExperimentConfig(scenario="operator-suite").probe_N == [1.0, 2.0, 4.0, 8.0, 16.0]

    def test_run_directory_is_content_addressed(self, tmp_path):
        service = ExperimentService(tmp_path)
        cfg = ExperimentConfig(scenario="soliton")
        assert service.run_dir(cfg) == service.run_dir(ExperimentConfig(scenario="soliton"))
        assert service.run_dir(cfg).name.startswith("soliton-")
        other = ExperimentConfig(scenario="soliton", dt0=0.001)
        assert service.run_dir(other) != service.run_dir(cfg)


class TestRuns:
    def test_missing_certificate(self, tmp_path, no_default_certificate):
        with pytest.raises(MissingCertificateError):
            ExperimentService(tmp_path).run({"scenario": "soliton", "t_span": [0.0, 1.0]})

    def test_certificate_grid_must_match(self, tmp_path, certificate):
        payload = {"scenario": "soliton", "grid": SMALL_GRID, "certificate": certificate}
        with pytest.raises(ConfigError):
            ExperimentService(tmp_path).run(payload)

    def test_soliton_scenario(self, tmp_path, certificate):
        payload = {"scenario": "soliton", "t_span": [0.0, 1.0], "certificate": certificate}
        manifest = ExperimentService(tmp_path).run(payload)
        assert manifest.labels == {"soliton": "soliton-like"}
        assert manifest.headline["mass_drift"] <= 1e-10
        assert manifest.headline["modulus_deviation"] <= 1e-3
        assert "series.csv" in manifest.outputs and "diagnostics.csv" in manifest.outputs
        run_dir = ExperimentService(tmp_path).run_dir(ExperimentConfig.model_validate(payload))
        saved = json.loads((run_dir / "manifest.json").read_text())
        assert saved["manifest_hash"] == manifest.manifest_hash

    def test_operator_suite(self, tmp_path):
        payload = {"scenario": "operator-suite", "grid": SMALL_GRID, "probe_N": [1.0, 2.0], "probe_R": [4.0, 8.0]}
        manifest = ExperimentService(tmp_path).run(payload)
        assert manifest.headline["pv_selftest"] <= 1e-4
        assert manifest.headline["inout_identity_error"] <= 1e-12
        assert {"bernstein.csv", "probes.csv"} <= set(manifest.outputs)

    @pytest.mark.slow
    @pytest.mark.parametrize("ratio", [0.7, 0.81])
    def test_subcritical_scenario_disperses(self, tmp_path, certificate, ratio):
        payload = {"scenario": "subcritical", "mass_ratio": ratio, "t_span": [0.0, 20.0], "certificate": certificate}
        manifest = ExperimentService(tmp_path).run(payload)
        assert manifest.labels == {f"Q@{ratio:g}": "disperse-like"}
        assert manifest.headline["linf_final_over_max"] <= 0.5
        assert manifest.headline["mass_drift"] <= 1e-8
        assert manifest.headline["s_second_half"] < manifest.headline["s_first_half"]

    @pytest.mark.slow
    def test_pseudoconformal_scenario_blows_up(self, tmp_path, certificate):
        payload = {"scenario": "pseudoconformal", "t_span": [0.0, 1.0], "blowup_time": 1.0, "certificate": certificate}
        manifest = ExperimentService(tmp_path).run(payload)
        assert manifest.labels == {"pseudoconformal": "blowup-like"}
        assert manifest.headline["blowup_reason"] in ("kinetic-threshold", "step-floor", "unresolved")
        assert manifest.headline["mass_defect"] <= 1e-8

    @pytest.mark.slow
    def test_threshold_census(self, tmp_path, certificate):
        out = tmp_path / "census"
        payload = {
            "scenario": "threshold-census",
            "census_ratios": [0.7, 0.81, 1.3],
            "census_shapes": ["Q", "gaussian"],
            "t_span": [0.0, 20.0],
            "certificate": certificate,
            "output_dir": str(out),
        }
        manifest = ExperimentService(tmp_path).run(payload)
        for key in ("Q@0.7", "Q@0.81", "gaussian@0.7", "gaussian@0.81"):
            assert manifest.labels[key] == "disperse-like"
        assert manifest.labels["Q@1.3"] == "blowup-like"
        assert manifest.headline["members"] == 6
        member = json.loads((out / "census" / "Q-1.3" / "diagnostics.json").read_text())
        assert member["blowup"]["detected"]
        assert member["blowup"]["reason"] == "unresolved"
        assert [row["label"] for row in ds.read_rows(out / "census.csv")][:2] == ["disperse-like", "disperse-like"]

    @pytest.mark.slow
    def test_ground_state_run_is_reproducible(self, tmp_path):
        payload = {"scenario": "ground-state", "grid": {"d": 4, "M": 256, "rmax": 20.0}, "output_dir": str(tmp_path / "gs")}
        first = ExperimentService(tmp_path).run(payload)
        second = ExperimentService(tmp_path).run(payload)
        assert first.manifest_hash == second.manifest_hash
        assert first.headline["mass_agreement"] <= 1e-5
        assert abs(first.headline["energy_ratio"]) <= 1e-6
        assert (tmp_path / "gs" / "ground_state.json").exists()


class TestCli:
    def test_bad_grid_spec(self):
        assert main(["verify-ops", "--grid", "d=4,M=oops"]) == 1
        assert main(["verify-ops", "--grid", "nonsense"]) == 1

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "absent.json")]) == 1

    def test_run_from_config_file(self, tmp_path, capsys):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps({"scenario": "operator-suite", "grid": SMALL_GRID, "probe_N": [1.0, 2.0]}))
        out = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out", str(out)]) == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["config"]["scenario"] == "operator-suite"
        assert (out / "manifest.json").exists()
        rows = ds.read_rows(out / "bernstein.csv")
        assert [float(row["N"]) for row in rows] == [1.0, 2.0]
