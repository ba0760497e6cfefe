# nlslab/data_service.py
"""Run storage: field snapshots, CSV time series, JSON certificates and manifests.

Snapshot files are plain text. The first line holds "d M Rmax"; each of the following M
lines holds "r re im" for one grid node, all in full double precision (%.17g).
"""
import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from nlslab import radial_core as rc
from nlslab.errors import GridMismatchError, MissingCertificateError, PreconditionError
from nlslab.models import GroundStateCertificate, RunManifest
from nlslab.propagator import Trajectory
from nlslab.radial_core import RadialField

logger = logging.getLogger("nlslab.data_service")

SERIES_COLUMNS = ["t", "mass", "energy", "kinetic", "linf", "S"]
PROBE_COLUMNS = ["kind", "params", "m", "measured", "bound", "ratio"]

PathLike = Union[str, Path]


def write_snapshot(path: PathLike, f: RadialField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = f.grid
    lines = [f"{grid.d} {grid.size} {grid.rmax:.17g}"]
    lines += [f"{r:.17g} {v.real:.17g} {v.imag:.17g}" for r, v in zip(grid.r, f.values)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_snapshot(path: PathLike) -> RadialField:
    path = Path(path)
    if not path.exists():
        raise PreconditionError(f"Snapshot {path} does not exist")
    header, *rows = path.read_text().split("\n")
    d, M, rmax = header.split()
    grid = rc.make_grid(int(d), int(M), float(rmax))
    data = np.array([[float(x) for x in row.split()] for row in rows if row.strip()])
    if data.shape != (grid.size, 3):
        raise GridMismatchError(f"Snapshot {path} has {data.shape[0]} rows, header says {grid.size}")
    if np.max(np.abs(data[:, 0] - grid.r)) > 1e-12 * grid.rmax:
        raise GridMismatchError(f"Snapshot {path} nodes do not match the grid in its header")
    return RadialField(grid, data[:, 1] + 1j * data[:, 2])


def write_rows(path: PathLike, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(value) for key, value in row.items()})
    return path


def _cell(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return value


def read_rows(path: PathLike) -> List[dict]:
    with Path(path).open(newline="") as handle:
        return list(csv.DictReader(handle))


def write_json(path: PathLike, payload: Union[BaseModel, dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.model_dump(mode="json") if isinstance(payload, BaseModel) else payload
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def content_hash(root: PathLike, outputs: Sequence[str]) -> str:
    """sha256 over (relative name, bytes) of every output, in sorted order"""
    root = Path(root)
    digest = hashlib.sha256()
    for name in sorted(outputs):
        digest.update(name.encode())
        digest.update((root / name).read_bytes())
    return digest.hexdigest()


def manifest_hash(manifest: RunManifest) -> str:
    """Hash of everything but wall time and the hash itself"""
    data = manifest.model_dump(mode="json", exclude={"wall_time", "manifest_hash"})
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


class RunStore:
    """One output directory per run; paths handed back are relative to it"""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.outputs: List[str] = []

    def _track(self, path: Path) -> str:
        name = path.relative_to(self.root).as_posix()
        if name not in self.outputs:
            self.outputs.append(name)
        return name

    def child(self, name: str) -> "RunStore":
        return RunStore(self.root / name)

    def adopt(self, child: "RunStore") -> None:
        prefix = child.root.relative_to(self.root).as_posix()
        for name in child.outputs:
            self._track(self.root / prefix / name)

    def save_snapshot(self, name: str, f: RadialField) -> str:
        return self._track(write_snapshot(self.root / name, f))

    def save_series(self, name: str, traj: Trajectory) -> str:
        return self._track(write_rows(self.root / name, SERIES_COLUMNS, (rec.as_row() for rec in traj.records)))

    def save_snapshots(self, traj: Trajectory, every: int = 1) -> List[str]:
        names = []
        for k, (t, u) in enumerate(zip(traj.times, traj.snapshots)):
            if k % every == 0 or k == len(traj.times) - 1:
                names.append(self.save_snapshot(f"snapshots/u_{k:04d}.txt", u))
        return names

    def save_rows(self, name: str, columns: Sequence[str], rows: Iterable[dict]) -> str:
        return self._track(write_rows(self.root / name, columns, rows))

    def save_json(self, name: str, payload: Union[BaseModel, dict]) -> str:
        return self._track(write_json(self.root / name, payload))

    def content_hash(self) -> str:
        return content_hash(self.root, self.outputs)


def save_certificate(store: RunStore, certificate: GroundStateCertificate, profile: RadialField) -> str:
    snapshot = store.save_snapshot("ground_state_profile.txt", profile)
    certificate = certificate.model_copy(update={"snapshot_path": snapshot})
    return store.save_json("ground_state.json", certificate)


def load_certificate(path: Optional[PathLike]) -> GroundStateCertificate:
    if path is None or not Path(path).exists():
        raise MissingCertificateError(
            f"Ground-state certificate {path} not found; run the ground-state scenario first", path=str(path)
        )
    certificate = GroundStateCertificate.model_validate_json(Path(path).read_text())
    logger.info(f"Loaded ground-state certificate {path} (d={certificate.d}, M(Q)={certificate.mass:.10f})")
    return certificate


def certificate_profile(path: PathLike, certificate: GroundStateCertificate) -> RadialField:
    """Profile snapshot referenced by a certificate; relative paths resolve next to it"""
    if certificate.snapshot_path is None:
        raise MissingCertificateError(f"Certificate {path} names no profile snapshot", path=str(path))
    snapshot = Path(path).parent / certificate.snapshot_path
    return read_snapshot(snapshot)
