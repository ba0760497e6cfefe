# nlslab/propagator.py
"""Strang split-step integration of  i u_t + Delta u = -mu |u|^{4/d} u  on a radial grid."""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit

from nlslab import radial_core as rc
from nlslab.errors import InsufficientSnapshotsError, PreconditionError, ResolutionError
from nlslab.models import BlowupReport, EvolutionConfig
from nlslab.radial_core import RadialField, SpectralField

logger = logging.getLogger("nlslab.propagator")

SNAPSHOTS_PER_UNIT = 8
FIT_WINDOW = 2.0


@dataclass(frozen=True)
class StepRecord:
    t: float
    mass: float
    energy: float
    kinetic: float
    linf: float
    S: float

    def as_row(self) -> dict:
        return {
            "t": self.t,
            "mass": self.mass,
            "energy": self.energy,
            "kinetic": self.kinetic,
            "linf": self.linf,
            "S": self.S,
        }


@dataclass
class Trajectory:
    """Snapshots on the schedule plus one record per accepted step"""

    nonlinearity: float = 1.0
    times: List[float] = field(default_factory=list)
    snapshots: List[RadialField] = field(default_factory=list)
    records: List[StepRecord] = field(default_factory=list)

    @property
    def grid(self):
        return self.snapshots[0].grid

    @property
    def record_times(self) -> np.ndarray:
        return np.array([rec.t for rec in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records])

    def add_snapshot(self, t: float, u: RadialField) -> None:
        if self.times and not t > self.times[-1]:
            raise PreconditionError(f"Snapshot times must increase, got {t} after {self.times[-1]}")
        self.times.append(float(t))
        self.snapshots.append(u)

    def at(self, t: float) -> RadialField:
        index = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[index] - t) > 1e-9 * max(1.0, abs(t)):
            raise InsufficientSnapshotsError(f"No snapshot at t={t}", available=[self.times[0], self.times[-1]])
        return self.snapshots[index]

    def mass_drift(self) -> float:
        mass = self.series("mass")
        if mass[0] == 0:
            return 0.0
        return float(np.max(np.abs(mass - mass[0])) / mass[0])

    def energy_drift(self) -> float:
        """Energy excursion relative to the energy scale 1/2 ||grad u0||^2 + d/(2(d+2)) ||u0||_p^p"""
        first = self.records[0]
        d = self.grid.d
        u0 = self.snapshots[0]
        scale = 0.5 * first.kinetic**2 + abs(self.nonlinearity) * d / (2.0 * (d + 2)) * rc.potential(u0)
        energy = self.series("energy")
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(energy - energy[0])) / scale)

    @classmethod
    def from_snapshots(
        cls, times: Sequence[float], fields: Sequence[RadialField], nonlinearity: float = 1.0
    ) -> "Trajectory":
        """Trajectory of given states (exact solutions, imported runs); records follow the snapshots"""
        traj = cls(nonlinearity=nonlinearity)
        S = 0.0
        previous = None
        for t, u in zip(times, fields):
            traj.add_snapshot(t, u)
            pot = rc.potential(u)
            if previous is not None:
                S += 0.5 * (t - previous[0]) * (pot + previous[1])
            traj.records.append(_record(t, u, nonlinearity, S))
            previous = (t, pot)
        return traj


def _record(t: float, u: RadialField, nonlinearity: float, S: float) -> StepRecord:
    grid = u.grid
    d = grid.d
    spectrum = rc.apply(grid.forward, u.values)
    kin = np.sqrt(rc.spectral_mass(SpectralField(grid, grid.xi * spectrum)))
    return StepRecord(
        t=float(t),
        mass=rc.norm(u, "mass"),
        energy=float(0.5 * kin**2 - nonlinearity * d / (2.0 * (d + 2)) * rc.potential(u)),
        kinetic=float(kin),
        linf=rc.lp_norm(u, np.inf),
        S=float(S),
    )


def free_multiplier(grid: rc.RadialGrid, dt: float) -> np.ndarray:
    """Frequency-side symbol of e^{i dt Delta}"""
    return np.exp(-1j * grid.xi**2 * dt)


def free_evolve(u: RadialField, dt: float) -> RadialField:
    g = rc.to_frequency(u)
    return rc.to_physical(SpectralField(g.grid, free_multiplier(g.grid, dt) * g.values))


def step_strang(u: RadialField, dt: float, nonlinearity: float = 1.0) -> RadialField:
    """Half free step, exact nonlinear phase rotation, half free step"""
    if not dt > 0:
        raise PreconditionError(f"Time step must be positive, got {dt}")
    grid = u.grid
    spectrum = rc.apply(grid.forward, u.values)
    rc.check_resolved(u, "state before step", spectrum)
    half = free_multiplier(grid, 0.5 * dt)
    v = rc.apply(grid.inverse, half * spectrum)
    if nonlinearity:
        v = np.exp(1j * dt * nonlinearity * np.abs(v) ** (4.0 / grid.d)) * v
    spectrum = half * rc.apply(grid.forward, v)
    out = RadialField(grid, rc.apply(grid.inverse, spectrum))
    rc.check_resolved(out, "state after step", spectrum)
    return out


def _schedule(cfg: EvolutionConfig) -> np.ndarray:
    count = int(np.floor((cfg.t1 - cfg.t0) / cfg.snapshot_dt + 1e-9))
    times = cfg.t0 + cfg.snapshot_dt * np.arange(1, count + 1)
    if times.size == 0 or cfg.t1 - times[-1] > 1e-9 * max(1.0, abs(cfg.t1)):
        times = np.append(times, cfg.t1)
    else:
        times[-1] = cfg.t1
    return times


def evolve(u0: RadialField, cfg: EvolutionConfig) -> Tuple[Trajectory, BlowupReport]:
    rc.check_resolved(u0, "initial data")
    d = u0.grid.d
    k_max = cfg.k_max if cfg.k_max is not None else 100.0 * rc.kinetic(u0)
    traj = Trajectory(nonlinearity=cfg.nonlinearity)
    traj.add_snapshot(cfg.t0, u0)
    traj.records.append(_record(cfg.t0, u0, cfg.nonlinearity, 0.0))
    logger.info(
        f"Evolving on {u0.grid.describe()} over [{cfg.t0}, {cfg.t1}] | dt0={cfg.dt0} c_nl={cfg.c_nl} K_max={k_max:.3e}"
    )

    u = u0
    t = cfg.t0
    pot = rc.potential(u0)
    S = 0.0
    reason = None
    for target in _schedule(cfg):
        while target - t > 1e-12 * max(1.0, abs(target)):
            linf = traj.records[-1].linf
            dt = cfg.dt0
            if cfg.nonlinearity and linf > 0:
                dt = min(dt, cfg.c_nl / (abs(cfg.nonlinearity) * linf ** (4.0 / d)))
            if dt < cfg.dt_min:
                reason = "step-floor"
                break
            dt = min(dt, target - t)
            try:
                u = step_strang(u, dt, cfg.nonlinearity)
            except ResolutionError as exc:
                logger.warning(f"State lost resolvability at t={t:.6f}: {exc.message}")
                reason = "unresolved"
                break
            t = target if target - (t + dt) <= 1e-12 * max(1.0, abs(target)) else t + dt
            new_pot = rc.potential(u)
            S += 0.5 * dt * (pot + new_pot)
            pot = new_pot
            traj.records.append(_record(t, u, cfg.nonlinearity, S))
            if traj.records[-1].kinetic > k_max:
                reason = "kinetic-threshold"
                break
        if reason is not None:
            if t > traj.times[-1]:
                traj.add_snapshot(t, u)
            break
        traj.add_snapshot(t, u)

    report = BlowupReport()
    if reason is not None:
        report = _fit_blowup(traj, reason)
        logger.info(
            f"Blowup flagged ({reason}) at t={t:.6f}: T_est={report.t_est} alpha={report.alpha}"
        )
    else:
        logger.info(
            f"Reached t={t} after {len(traj.records) - 1} steps | mass drift {traj.mass_drift():.2e}"
        )
    return traj, report


def _power_law(t, log_c, alpha, T):
    return log_c - alpha * np.log(np.maximum(T - t, 1e-300))


def _fit_blowup(traj: Trajectory, reason: str) -> BlowupReport:
    """Fit ||grad u(t)|| = c (T - t)^{-alpha} on the last stretch where the kinetic norm rose by FIT_WINDOW"""
    t = traj.record_times
    kin = traj.series("kinetic")
    below = np.nonzero(kin < kin[-1] / FIT_WINDOW)[0]
    start = int(below[-1]) + 1 if below.size else 0
    t_fit, k_fit = t[start:], kin[start:]
    report = BlowupReport(detected=True, reason=reason, t_stop=float(t[-1]))
    if t_fit.size < 5 or k_fit[-1] <= k_fit[0]:
        logger.warning(f"Too few records ({t_fit.size}) in the blowup window to fit a rate")
        return report

    # two-point estimate for K ~ c / (T - t)
    t_guess = (k_fit[-1] * t_fit[-1] - k_fit[0] * t_fit[0]) / (k_fit[-1] - k_fit[0])
    span = t_fit[-1] - t_fit[0]
    t_guess = min(max(t_guess, t_fit[-1] + 1e-3 * span), t_fit[-1] + 10 * span)
    guess = [np.log(k_fit[-1] * (t_guess - t_fit[-1])), 1.0, t_guess]
    try:
        params, _ = curve_fit(
            _power_law,
            t_fit,
            np.log(k_fit),
            p0=guess,
            bounds=([-np.inf, 0.1, t_fit[-1] + 1e-12], [np.inf, 10.0, t_fit[-1] + 20 * span]),
            maxfev=20000,
        )
    except (RuntimeError, ValueError) as exc:
        logger.warning(f"Blowup rate fit failed: {exc}")
        return report
    residual = np.log(k_fit) - _power_law(t_fit, *params)
    report.t_est = float(params[2])
    report.alpha = float(params[1])
    report.fit_residual = float(np.sqrt(np.mean(residual**2)))
    return report


def _phi(z: np.ndarray, order: int) -> np.ndarray:
    """phi_1(z) = (e^z - 1)/z and phi_2(z) = (e^z - 1 - z)/z^2, by series near 0"""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    term = np.ones_like(zs)
    total = np.zeros_like(zs)
    factorial = float(np.prod(np.arange(1, order + 1)))
    for n in range(20):
        total += term / factorial
        term = term * zs
        factorial *= n + order + 1
    out[small] = total
    zl = z[~small]
    if order == 1:
        out[~small] = np.expm1(zl) / zl
    else:
        out[~small] = (np.expm1(zl) - zl) / zl**2
    return out


def _nonlinear_spectrum(u: RadialField, nonlinearity: float) -> np.ndarray:
    values = nonlinearity * np.abs(u.values) ** (4.0 / u.grid.d) * u.values
    return rc.apply(u.grid.forward, values)


def duhamel_residual(traj: Trajectory, t0: float, t1: float) -> float:
    """Relative L^2 defect of the Duhamel formula between two snapshot times.

    The nonlinearity is interpolated linearly in time between snapshots and the free phase
    e^{-i xi^2 (t1 - s)} is integrated exactly against it.
    """
    if not t1 > t0:
        raise PreconditionError(f"Need t1 > t0, got [{t0}, {t1}]")
    u_start = traj.at(t0)
    u_end = traj.at(t1)
    times = np.asarray(traj.times)
    inside = (times >= t0 - 1e-12) & (times <= t1 + 1e-12)
    nodes = times[inside]
    fields = [traj.snapshots[i] for i in np.nonzero(inside)[0]]
    intervals = nodes.size - 1
    if intervals < SNAPSHOTS_PER_UNIT * (t1 - t0) - 1e-9:
        raise InsufficientSnapshotsError(
            f"{intervals} snapshot intervals over [{t0}, {t1}]; need {SNAPSHOTS_PER_UNIT} per unit time",
            intervals=intervals,
        )

    grid = u_start.grid
    xi2 = grid.xi**2
    integral = np.zeros(grid.size, dtype=complex)
    if traj.nonlinearity:
        spectra = [_nonlinear_spectrum(u, traj.nonlinearity) for u in fields]
        for k in range(intervals):
            h = nodes[k + 1] - nodes[k]
            z = -1j * xi2 * h
            p1 = _phi(z, 1)
            p2 = _phi(z, 2)
            carry = np.exp(-1j * xi2 * (t1 - nodes[k + 1]))
            integral += h * carry * (spectra[k] * (p1 - p2) + spectra[k + 1] * p2)

    predicted = free_multiplier(grid, t1 - t0) * rc.apply(grid.forward, u_start.values) + 1j * integral
    defect = rc.apply(grid.forward, u_end.values) - predicted
    defect_norm = np.sqrt(rc.spectral_mass(SpectralField(grid, defect)))
    return float(defect_norm / rc.lp_norm(u_end, 2.0))


def scattering_norm(traj: Trajectory) -> np.ndarray:
    """S(t) = int_{t0}^{t} ||u(s)||_p^p ds at every record time"""
    return traj.series("S")


def scattering_state_drift(traj: Trajectory) -> np.ndarray:
    """||e^{-i t_{k+1} Delta} u(t_{k+1}) - e^{-i t_k Delta} u(t_k)||_2 / ||u||_2 between snapshots"""
    pulled = [free_evolve(u, -t) for t, u in zip(traj.times, traj.snapshots)]
    mass = rc.lp_norm(traj.snapshots[0], 2.0)
    return np.array([rc.lp_norm(b - a, 2.0) / mass for a, b in zip(pulled[:-1], pulled[1:])])


def time_reverse(u: RadialField) -> RadialField:
    """Conjugation maps solutions forward in time to solutions backward in time"""
    return u.conj()
