import numpy as np
import pytest

from nlslab import data_service as ds
from nlslab import radial_core as rc
from nlslab.errors import GridMismatchError, MissingCertificateError
from nlslab.exact_solutions import soliton
from nlslab.models import ExperimentConfig, RunManifest
from nlslab.propagator import Trajectory


class TestSnapshots:
    def test_roundtrip_is_exact(self, tmp_path, Q):
        u = soliton(Q, 0.3)
        path = ds.write_snapshot(tmp_path / "u.txt", u)
        back = ds.read_snapshot(path)
        assert back.grid is u.grid
        np.testing.assert_array_equal(back.values, u.values)

    def test_header_and_rows(self, tmp_path, grid):
        path = ds.write_snapshot(tmp_path / "g.txt", rc.gaussian(grid))
        lines = path.read_text().splitlines()
        assert lines[0] == "4 512 30"
        assert len(lines) == grid.size + 1
        r, re, im = (float(x) for x in lines[1].split())
        assert r == grid.r[0] and re == np.exp(-grid.r[0] ** 2) and im == 0.0

    def test_truncated_file(self, tmp_path, grid):
        path = ds.write_snapshot(tmp_path / "g.txt", rc.gaussian(grid))
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-3]) + "\n")
        with pytest.raises(GridMismatchError):
            ds.read_snapshot(path)

    def test_nodes_must_match_header(self, tmp_path, grid):
        path = ds.write_snapshot(tmp_path / "g.txt", rc.gaussian(grid))
        lines = path.read_text().splitlines()
        lines[0] = "4 512 31"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(GridMismatchError):
            ds.read_snapshot(path)


class TestRows:
    def test_floats_roundtrip(self, tmp_path):
        value = 1.0 / 3.0
        path = ds.write_rows(tmp_path / "x.csv", ["t", "value", "params"], [{"t": 0.0, "value": value, "params": {"N": 2.0}}])
        (row,) = ds.read_rows(path)
        assert float(row["value"]) == value
        assert row["params"] == '{"N": 2.0}'

    def test_store_tracks_outputs(self, tmp_path, Q):
        times = [0.0, 0.25, 0.5, 0.75, 1.0]
        traj = Trajectory.from_snapshots(times, [soliton(Q, t) for t in times])
        store = ds.RunStore(tmp_path / "run")
        store.save_series("series.csv", traj)
        names = store.save_snapshots(traj, every=2)
        assert names == ["snapshots/u_0000.txt", "snapshots/u_0002.txt", "snapshots/u_0004.txt"]
        rows = ds.read_rows(store.root / "series.csv")
        assert list(rows[0]) == ds.SERIES_COLUMNS
        assert len(rows) == len(times)
        assert store.outputs == ["series.csv"] + names

    def test_child_outputs_are_adopted(self, tmp_path):
        store = ds.RunStore(tmp_path)
        child = store.child("census/Q-0.9")
        child.save_json("diagnostics.json", {"label": "undecided"})
        store.adopt(child)
        assert store.outputs == ["census/Q-0.9/diagnostics.json"]


class TestHashes:
    def test_content_hash_is_stable(self, tmp_path):
        store = ds.RunStore(tmp_path)
        store.save_json("b.json", {"x": 1})
        store.save_json("a.json", {"y": 2})
        first = store.content_hash()
        assert first == ds.content_hash(tmp_path, ["a.json", "b.json"])
        store.save_json("a.json", {"y": 3})
        assert store.content_hash() != first

    def test_manifest_hash_ignores_wall_time(self):
        manifest = RunManifest(
            config=ExperimentConfig(scenario="soliton"),
            code_version="1.0.0",
            wall_time=1.0,
            headline={"mass_drift": 1e-12},
            content_hash="abc",
            manifest_hash="",
        )
        slower = manifest.model_copy(update={"wall_time": 9.0, "manifest_hash": "stale"})
        assert ds.manifest_hash(manifest) == ds.manifest_hash(slower)
        changed = manifest.model_copy(update={"headline": {"mass_drift": 2e-12}})
        assert ds.manifest_hash(changed) != ds.manifest_hash(manifest)


class TestCertificates:
    def test_missing(self, tmp_path):
        with pytest.raises(MissingCertificateError):
            ds.load_certificate(None)
        with pytest.raises(MissingCertificateError) as exc:
            ds.load_certificate(tmp_path / "absent.json")
        assert exc.value.status_code == 404

    def test_roundtrip(self, tmp_path, Q):
        store = ds.RunStore(tmp_path)
        name = ds.save_certificate(store, Q.certificate(), Q.profile)
        certificate = ds.load_certificate(tmp_path / name)
        assert certificate.mass == Q.mass
        assert certificate.snapshot_path == "ground_state_profile.txt"
        profile = ds.certificate_profile(tmp_path / name, certificate)
        np.testing.assert_array_equal(profile.values, Q.profile.values)

    def test_certificate_without_profile(self, tmp_path, Q):
        path = ds.write_json(tmp_path / "ground_state.json", Q.certificate())
        certificate = ds.load_certificate(path)
        with pytest.raises(MissingCertificateError):
            ds.certificate_profile(path, certificate)
