# nlslab/service.py
import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from nlslab import __version__, config
from nlslab import data_service as ds
from nlslab import radial_core as rc
from nlslab.diagnostics import diagnose, frequency_median, interior_kinetic, scaling_exponent
from nlslab.errors import CertificationError, ConfigError, NlsLabError
from nlslab.exact_solutions import pseudoconformal, soliton
from nlslab.ground_state import GroundStateSolution, certify, solve_gradient_flow, solve_shooting
from nlslab.inout_decomp import p_in, p_out, pv_selftest
from nlslab.middleware import log_timing
from nlslab.models import (
    BlowupReport,
    ClassificationThresholds,
    DiagnosticsReport,
    EvolutionConfig,
    ExperimentConfig,
    GridParams,
    GroundStateCertificate,
    Label,
    RunManifest,
)
from nlslab.propagator import Trajectory, evolve, scattering_state_drift
from nlslab.radial_core import RadialField, RadialGrid
from nlslab.spectral_ops import bernstein_sweep, mismatch_sweep

logger = logging.getLogger("nlslab.service")

CROSS_METHOD_TOLERANCE = 1e-5
SNAPSHOT_EVERY = 8
DIAGNOSTIC_COLUMNS = [
    "t",
    "virial",
    "virial_rate",
    "virial_accel",
    "sixteen_energy",
    "mass_out",
    "kinetic_out",
    "frequency_scale",
    "profile_distance",
]
BERNSTEIN_COLUMNS = ["N", "p", "q", "s", "up_min", "up_max", "down_min", "down_max", "gain_min", "gain_max"]

Headline = Dict[str, Union[float, str, bool, None]]


def classify(
    traj: Trajectory,
    report: DiagnosticsReport,
    blowup: BlowupReport,
    thresholds: Optional[ClassificationThresholds] = None,
) -> Label:
    """Heuristic label for a finished run; thresholds are versioned in every manifest"""
    thresholds = thresholds or ClassificationThresholds()
    if blowup.detected:
        return "blowup-like"

    half = len(report.t) // 2
    distances = report.profile_distance[half:]
    scales = report.frequency_scale[half:]
    if (
        distances
        and all(delta is not None and delta <= thresholds.profile_distance for delta in distances)
        and max(scales) / min(scales) < thresholds.frequency_variation
    ):
        return "soliton-like"

    linf = traj.series("linf")
    # kinetic energy still held near the origin must drain away
    draining = interior_kinetic(traj.snapshots[-1], report.R) < interior_kinetic(traj.snapshots[0], report.R)
    if linf[-1] <= thresholds.amplitude_decay * linf.max() and draining:
        return "disperse-like"
    return "undecided"


def enforce_monotone(labels: Dict[Tuple[str, float], Label]) -> Dict[Tuple[str, float], Label]:
    """Per shape, relabel disperse-like members above the smallest blowup-like ratio as undecided"""
    out = dict(labels)
    for shape in {shape for shape, _ in labels}:
        blowups = [ratio for (s, ratio), label in labels.items() if s == shape and label == "blowup-like"]
        if not blowups:
            continue
        threshold = min(blowups)
        for (s, ratio), label in labels.items():
            if s == shape and ratio > threshold and label == "disperse-like":
                logger.warning(
                    f"Census order violated for {shape}: disperse-like at {ratio:g} above blowup-like at {threshold:g}"
                )
                out[(s, ratio)] = "undecided"
    return out


def _label_key(shape: str, ratio: float) -> str:
    return f"{shape}@{ratio:g}"


class ExperimentService:
    """Runs scenarios and keeps certified ground states per grid"""

    def __init__(self, output_dir: Optional[Union[str, Path]] = None, max_workers: Optional[int] = None):
        self.output_dir = Path(output_dir or config.OUTPUT_DIR)
        self.max_workers = max_workers or config.MAX_WORKERS
        self._ground_states: Dict[Tuple[int, int, float], GroundStateSolution] = {}
        self._lock = threading.Lock()
        self._scenarios: Dict[str, Callable[[ExperimentConfig, ds.RunStore], Tuple[Headline, Dict[str, Label]]]] = {
            "ground-state": self._run_ground_state,
            "soliton": self._run_soliton,
            "pseudoconformal": self._run_pseudoconformal,
            "subcritical": self._run_subcritical,
            "threshold-census": self._run_census,
            "operator-suite": self._run_operator_suite,
        }

    # -- configuration and ground states ------------------------------------------------------

    @staticmethod
    def parse_config(payload: Union[ExperimentConfig, dict, str]) -> ExperimentConfig:
        if isinstance(payload, ExperimentConfig):
            return payload
        try:
            if isinstance(payload, str):
                return ExperimentConfig.model_validate_json(payload)
            return ExperimentConfig.model_validate(payload)
        except ValidationError as exc:
            errors = [{"loc": [str(part) for part in error["loc"]], "msg": error["msg"]} for error in exc.errors()]
            raise ConfigError(f"Invalid experiment config: {exc.error_count()} error(s)", errors=errors)

    @staticmethod
    def grid(params: GridParams) -> RadialGrid:
        return rc.make_grid(params.d, params.M, params.rmax)

    @staticmethod
    def _key(params: GridParams) -> Tuple[int, int, float]:
        return (params.d, params.M, float(params.rmax))

    def ground_state(self, params: GridParams) -> GroundStateSolution:
        """Shooting solution on the grid, computed once per grid"""
        key = self._key(params)
        with self._lock:
            if key not in self._ground_states:
                self._ground_states[key] = solve_shooting(params.d, grid=self.grid(params))
            return self._ground_states[key]

    def ground_state_certificate(self, params: GridParams) -> GroundStateCertificate:
        return self.ground_state(params).certificate()

    def _load_ground_state(self, cfg: ExperimentConfig) -> GroundStateSolution:
        key = self._key(cfg.grid)
        path = cfg.certificate
        if path is None:
            with self._lock:
                if key in self._ground_states:
                    return self._ground_states[key]
            path = config.DEFAULT_CERTIFICATE
        certificate = ds.load_certificate(path)
        profile = ds.certificate_profile(path, certificate)
        if profile.grid is not self.grid(cfg.grid):
            raise ConfigError(
                f"Certificate grid {profile.grid.describe()} does not match the run grid {cfg.grid.model_dump()}"
            )
        Q = certify(RadialField(profile.grid, profile.values.real), certificate.q0, certificate.method)
        with self._lock:
            self._ground_states[key] = Q
        return Q

    # -- runs ---------------------------------------------------------------------------------

    def run_dir(self, cfg: ExperimentConfig) -> Path:
        if cfg.output_dir:
            return Path(cfg.output_dir)
        digest = hashlib.sha256(json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()).hexdigest()
        return self.output_dir / f"{cfg.scenario}-{digest[:12]}"

    def run(self, payload: Union[ExperimentConfig, dict, str]) -> RunManifest:
        cfg = self.parse_config(payload)
        store = ds.RunStore(self.run_dir(cfg))
        start_time = time.time()
        with log_timing(f"scenario {cfg.scenario} in {store.root}", logger):
            headline, labels = self._scenarios[cfg.scenario](cfg, store)
        manifest = RunManifest(
            config=cfg,
            code_version=__version__,
            wall_time=time.time() - start_time,
            headline=headline,
            labels=labels,
            outputs=sorted(store.outputs),
            content_hash=store.content_hash(),
            manifest_hash="",
        )
        manifest.manifest_hash = ds.manifest_hash(manifest)
        ds.write_json(store.root / "manifest.json", manifest)
        logger.info(f"Run {cfg.scenario} finished: manifest {manifest.manifest_hash[:12]} labels={labels}")
        return manifest

    def _run_ground_state(self, cfg: ExperimentConfig, store: ds.RunStore):
        grid = self.grid(cfg.grid)
        shot = solve_shooting(cfg.grid.d, grid=grid)
        flowed = solve_gradient_flow(grid)
        # flow output before its Newton polish
        agreement = abs(shot.mass - flowed.unpolished_mass) / shot.mass
        profile_gap = rc.lp_norm(shot.profile - flowed.profile, 2.0) / shot.l2
        if agreement > CROSS_METHOD_TOLERANCE:
            raise CertificationError(
                "cross-method mass",
                f"Shooting and gradient-flow masses differ by {agreement:.2e} (relative)",
                value=agreement,
            )
        ds.save_certificate(store, shot.certificate(), shot.profile)
        store.save_json("ground_state_flow.json", flowed.certificate())
        with self._lock:
            self._ground_states[self._key(cfg.grid)] = shot
        headline: Headline = {
            "mass": shot.mass,
            "kinetic_sq": shot.kinetic**2,
            "energy": shot.energy,
            "energy_ratio": shot.energy / shot.kinetic**2,
            "c_gn": shot.c_gn,
            "q0": shot.q0,
            "residual": shot.residual,
            "flow_mass": flowed.mass,
            "flow_unpolished_mass": flowed.unpolished_mass,
            "flow_unpolished_residual": flowed.unpolished_residual,
            "mass_agreement": agreement,
            "profile_agreement": profile_gap,
        }
        return headline, {}

    def _evolution(self, cfg: ExperimentConfig, Q: GroundStateSolution, t0: float, t1: float) -> EvolutionConfig:
        return EvolutionConfig(
            t0=t0,
            t1=t1,
            dt0=cfg.dt0,
            snapshot_dt=cfg.snapshot_dt,
            k_max=cfg.k_max_factor * Q.kinetic,
        )

    def _trajectory(
        self, cfg: ExperimentConfig, Q: GroundStateSolution, u0: RadialField, store: ds.RunStore, t0: float, t1: float
    ) -> Tuple[Trajectory, BlowupReport, DiagnosticsReport, Label]:
        traj, blowup = evolve(u0, self._evolution(cfg, Q, t0, t1))
        report = diagnose(traj, Q, cfg.virial_radius)
        label = classify(traj, report, blowup, cfg.thresholds)
        store.save_series("series.csv", traj)
        store.save_snapshots(traj, every=SNAPSHOT_EVERY)
        rows = (
            {column: getattr(report, column)[k] for column in DIAGNOSTIC_COLUMNS}
            for k in range(len(report.t))
        )
        store.save_rows("diagnostics.csv", DIAGNOSTIC_COLUMNS, rows)
        store.save_json(
            "diagnostics.json",
            {
                "R": report.R,
                "compactness": report.compactness,
                "local_constancy": report.local_constancy.model_dump() if report.local_constancy else None,
                "frequency_scale_definition": report.frequency_scale_definition,
                "blowup": blowup.model_dump(),
                "label": label,
                "thresholds": cfg.thresholds.model_dump(),
            },
        )
        return traj, blowup, report, label

    def _run_soliton(self, cfg: ExperimentConfig, store: ds.RunStore):
        Q = self._load_ground_state(cfg)
        t0, t1 = cfg.t_span
        u0 = soliton(Q, t0, cfg.symmetry)
        traj, blowup, report, label = self._trajectory(cfg, Q, u0, store, t0, t1)
        modulus = np.abs(u0.values)
        deviation = max(
            rc.lp_norm(RadialField(u0.grid, np.abs(u.values) - modulus), 2.0) for u in traj.snapshots
        ) / rc.lp_norm(u0, 2.0)
        S = traj.series("S")
        headline: Headline = {
            "mass_drift": traj.mass_drift(),
            "energy_drift": traj.energy_drift(),
            "modulus_deviation": deviation,
            "s_slope": float((S[-1] - S[0]) / (traj.times[-1] - traj.times[0])),
            "potential": rc.potential(u0),
            "frequency_scale_spread": max(report.frequency_scale) / min(report.frequency_scale),
            "blowup": blowup.detected,
            "label": label,
        }
        return headline, {"soliton": label}

    def _run_pseudoconformal(self, cfg: ExperimentConfig, store: ds.RunStore):
        Q = self._load_ground_state(cfg)
        t0, t1 = cfg.t_span
        T = t0 + cfg.blowup_time
        u0 = pseudoconformal(Q, t0, T, cfg.symmetry)
        traj, blowup, report, label = self._trajectory(cfg, Q, u0, store, t0, t1)

        mismatch = 0.0
        times, medians = [], []
        for t, u in zip(traj.times, traj.snapshots):
            if t > T - 0.25:
                continue
            try:
                exact = pseudoconformal(Q, t, T, cfg.symmetry)
            except NlsLabError:
                continue
            mismatch = max(mismatch, rc.lp_norm(u - exact, 2.0) / rc.lp_norm(exact, 2.0))
            times.append(t)
            medians.append(frequency_median(u))
        exponent = scaling_exponent(times, medians, T) if len(times) >= 2 else None
        headline: Headline = {
            "T": T,
            "t_est": blowup.t_est,
            "alpha": blowup.alpha,
            "blowup_reason": blowup.reason,
            "mass_defect": abs(rc.norm(u0, "mass") - Q.mass) / Q.mass,
            "exact_mismatch": mismatch,
            "frequency_exponent": exponent,
            "label": label,
        }
        return headline, {"pseudoconformal": label}

    def _run_subcritical(self, cfg: ExperimentConfig, store: ds.RunStore):
        Q = self._load_ground_state(cfg)
        t0, t1 = cfg.t_span
        u0 = np.sqrt(cfg.mass_ratio) * Q.profile
        traj, blowup, report, label = self._trajectory(cfg, Q, u0, store, t0, t1)
        linf = traj.series("linf")
        S = traj.series("S")
        mid = traj.record_times <= 0.5 * (t0 + t1)
        drift = scattering_state_drift(traj)
        headline: Headline = {
            "mass_ratio": cfg.mass_ratio,
            "linf_final_over_max": float(linf[-1] / linf.max()),
            "s_first_half": float(S[mid][-1] - S[0]),
            "s_second_half": float(S[-1] - S[mid][-1]),
            "scattering_drift_last": float(drift[-1]) if drift.size else None,
            "mass_drift": traj.mass_drift(),
            "label": label,
        }
        return headline, {_label_key("Q", cfg.mass_ratio): label}

    def _census_member(
        self, cfg: ExperimentConfig, Q: GroundStateSolution, shape: str, ratio: float, store: ds.RunStore
    ) -> Label:
        if shape == "Q":
            u0 = np.sqrt(ratio) * Q.profile
        else:
            gaussian = rc.gaussian(Q.grid)
            u0 = np.sqrt(ratio * Q.mass / rc.norm(gaussian, "mass")) * gaussian
        t0, t1 = cfg.t_span
        try:
            _, _, _, label = self._trajectory(cfg, Q, u0, store, t0, t1)
        except NlsLabError as exc:
            logger.warning(f"Census member {shape}@{ratio:g} failed: {exc.message}")
            label = "undecided"
        return label

    def _run_census(self, cfg: ExperimentConfig, store: ds.RunStore):
        Q = self._load_ground_state(cfg)
        members = [(shape, ratio) for shape in cfg.census_shapes for ratio in cfg.census_ratios]
        children = {member: store.child(f"census/{member[0]}-{member[1]:g}") for member in members}
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            futures = {
                member: pool.submit(self._census_member, cfg, Q, member[0], member[1], children[member])
                for member in members
            }
            raw = {member: future.result() for member, future in futures.items()}
        for member in members:
            store.adopt(children[member])
        labels = enforce_monotone(raw)
        table = [{"shape": shape, "ratio": ratio, "label": labels[(shape, ratio)]} for shape, ratio in members]
        store.save_rows("census.csv", ["shape", "ratio", "label"], table)
        named = {_label_key(shape, ratio): labels[(shape, ratio)] for shape, ratio in members}
        headline: Headline = {
            "members": len(members),
            "blowup_like": sum(label == "blowup-like" for label in labels.values()),
            "disperse_like": sum(label == "disperse-like" for label in labels.values()),
            "relabelled": sum(raw[m] != labels[m] for m in members),
        }
        return headline, named

    def _run_operator_suite(self, cfg: ExperimentConfig, store: ds.RunStore):
        grid = self.grid(cfg.grid)
        headline: Headline = {}

        bernstein = bernstein_sweep(grid, cfg.probe_N, trials=cfg.probe_trials, seed=cfg.seed)
        store.save_rows(
            "bernstein.csv",
            BERNSTEIN_COLUMNS,
            (
                {
                    "N": rep.N,
                    "p": rep.p,
                    "q": rep.q,
                    "s": rep.s,
                    "up_min": rep.derivative_up.min,
                    "up_max": rep.derivative_up.max,
                    "down_min": rep.derivative_down.min,
                    "down_max": rep.derivative_down.max,
                    "gain_min": rep.lp_gain.min,
                    "gain_max": rep.lp_gain.max,
                }
                for rep in bernstein
            ),
        )
        maxima = [rep.derivative_up.max for rep in bernstein]
        headline["bernstein_spread"] = max(maxima) / min(maxima)

        real_points = [{"N": N, "R": R} for N in cfg.probe_N for R in cfg.probe_R if N * R >= 4]
        freq_points = [{"N": N, "M": 4.0 * N, "R": R} for N in cfg.probe_N for R in cfg.probe_R if 8.0 * N < grid.xi[-1]]
        reports = []
        if real_points:
            reports += mismatch_sweep(grid, "real", real_points, trials=cfg.probe_trials, seed=cfg.seed)
        if freq_points:
            reports += mismatch_sweep(grid, "freq", freq_points, trials=cfg.probe_trials, seed=cfg.seed)
        store.save_rows(
            "probes.csv",
            ds.PROBE_COLUMNS,
            (
                {
                    "kind": rep.kind,
                    "params": rep.params,
                    "m": rep.m,
                    "measured": rep.measured,
                    "bound": rep.bound,
                    "ratio": rep.ratio,
                }
                for rep in reports
            ),
        )
        for kind in ("real", "freq"):
            mine = [rep for rep in reports if rep.kind == kind]
            if mine:
                headline[f"mismatch_{kind}_constant"] = mine[0].constant
                headline[f"mismatch_{kind}_within_bound"] = all(rep.within_bound for rep in mine)

        headline["pv_selftest"] = pv_selftest()
        bank = [rc.gaussian(grid, a) for a in (0.5, 1.0, 2.0)]
        identity = [
            rc.lp_norm(p_out(f) + p_in(f) - f, 2.0) / rc.lp_norm(f, 2.0) for f in bank
        ]
        headline["inout_identity_error"] = float(max(identity))
        return headline, {}
