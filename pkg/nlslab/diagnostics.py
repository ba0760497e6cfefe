# nlslab/diagnostics.py
"""Quantities measured along trajectories: virial, exterior norms, frequency scale, orbit distance."""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np

from nlslab import radial_core as rc
from nlslab import spectral_ops
from nlslab.errors import ConcentrationError, InsufficientSnapshotsError, NlsLabError, PreconditionError
from nlslab.exact_solutions import apply_phase, apply_scaling
from nlslab.ground_state import GroundStateSolution
from nlslab.models import DiagnosticsReport, ExteriorNorms, LocalConstancy, ProfileDistance, VirialReport
from nlslab.propagator import Trajectory
from nlslab.radial_core import RadialField

logger = logging.getLogger("nlslab.diagnostics")

LADDER_STEPS = 8
CONCENTRATION_LIMIT = 0.01
COMPACTNESS_LEVELS = (0.1, 0.01, 0.001)
CONSTANCY_FLOOR = 1e-3


@dataclass(frozen=True)
class VirialCutoff:
    """psi = 1 on r <= R, 0 on r >= 2R; weight a(r) = r^2 psi(r / R)"""

    R: float

    def psi(self, r) -> np.ndarray:
        return spectral_ops.smooth_step(np.asarray(r) / self.R, 1.0, 2.0)

    def weight(self, r) -> np.ndarray:
        r = np.asarray(r)
        return r**2 * self.psi(r)

    def weight_derivative(self, r) -> np.ndarray:
        r = np.asarray(r)
        return 2.0 * r * self.psi(r) + r**2 * spectral_ops.smooth_step_derivative(r / self.R, 1.0, 2.0) / self.R


def _integrate(f: RadialField, density: np.ndarray) -> float:
    return float(f.grid.surface_area * np.sum(f.grid.weights * density))


def virial(u: RadialField, R: float) -> float:
    """V_R = int |x|^2 psi(|x|/R) |u|^2 dx"""
    if not R > 0:
        raise PreconditionError(f"Virial radius must be positive, got {R}")
    return _integrate(u, VirialCutoff(R).weight(u.grid.r) * np.abs(u.values) ** 2)


def virial_rate(u: RadialField, R: float) -> float:
    """dV_R/dt = 2 Im int grad(|x|^2 psi(|x|/R)) . conj(u) grad u dx"""
    if not R > 0:
        raise PreconditionError(f"Virial radius must be positive, got {R}")
    du = rc.radial_derivative(u).values
    density = VirialCutoff(R).weight_derivative(u.grid.r) * np.conj(u.values) * du
    return 2.0 * _integrate(u, density.imag)


def _second_difference(times: np.ndarray, values: np.ndarray) -> List[Optional[float]]:
    out: List[Optional[float]] = [None]
    for k in range(1, len(times) - 1):
        h1 = times[k] - times[k - 1]
        h2 = times[k + 1] - times[k]
        slope = (values[k + 1] - values[k]) / h2 - (values[k] - values[k - 1]) / h1
        out.append(float(2.0 * slope / (h1 + h2)))
    out.append(None)
    return out


def _energy_scale(u: RadialField, nonlinearity: float) -> float:
    d = u.grid.d
    return 0.5 * rc.kinetic(u) ** 2 + abs(nonlinearity) * d / (2.0 * (d + 2)) * rc.potential(u)


def virial_accel_check(traj: Trajectory, R: float) -> VirialReport:
    """Compare the second difference of V_R with 16 E(u) on a concentrated trajectory.

    The relative deviation is taken against 16 times the energy scale 1/2 ||grad u||^2 +
    d/(2(d+2)) |mu| ||u||_p^p, which is 16 E for a linear run and stays finite when E = 0.
    """
    if len(traj.snapshots) < 5:
        raise InsufficientSnapshotsError(f"Virial check needs 5 snapshots, got {len(traj.snapshots)}")
    times = np.asarray(traj.times)
    steps = np.diff(times)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
        raise InsufficientSnapshotsError("Virial check needs equally spaced snapshots")

    exterior = [exterior_norms(u, R) for u in traj.snapshots]
    fraction = max(ext.mass_out / (ext.mass_out + ext.mass_in) for ext in exterior)
    if fraction > CONCENTRATION_LIMIT:
        raise ConcentrationError(
            f"{fraction:.2%} of the mass lies beyond R={R}; the truncated virial identity does not apply",
            exterior_mass_fraction=fraction,
        )

    values = np.array([virial(u, R) for u in traj.snapshots])
    second = _second_difference(times, values)[1:-1]
    sixteen = [16.0 * rc.energy(u, traj.nonlinearity) for u in traj.snapshots[1:-1]]
    deviation = float(np.max(np.abs(np.array(second) - np.array(sixteen))))
    scale = 16.0 * max(_energy_scale(u, traj.nonlinearity) for u in traj.snapshots)
    p = traj.grid.strichartz_exponent
    error_terms = {
        "mass": max(ext.mass_out for ext in exterior) / R**2,
        "kinetic": max(ext.kinetic_out**2 for ext in exterior),
        "potential": max(ext.potential_out for ext in exterior),
    }
    logger.info(f"Virial check at R={R}: deviation {deviation:.3e} (relative {deviation / scale:.3e}), p={p:.3f}")
    return VirialReport(
        R=R,
        times=[float(t) for t in times[1:-1]],
        second_difference=second,
        sixteen_energy=sixteen,
        deviation_abs=deviation,
        deviation_rel=deviation / scale,
        exterior_mass_fraction=fraction,
        error_terms=error_terms,
    )


def exterior_norms(u: RadialField, R: float) -> ExteriorNorms:
    """Mass, kinetic and potential energy carried by r > R (sharp node mask)"""
    grid = u.grid
    outside = grid.r > R
    density = np.abs(u.values) ** 2
    mass_out = _integrate(u, np.where(outside, density, 0.0))
    mass_in = _integrate(u, np.where(outside, 0.0, density))
    du = rc.radial_derivative(u).values
    kinetic_out = np.sqrt(_integrate(u, np.where(outside, np.abs(du) ** 2, 0.0)))
    p = grid.strichartz_exponent
    potential_out = _integrate(u, np.where(outside, np.abs(u.values) ** p, 0.0))
    return ExteriorNorms(
        R=R,
        mass_out=mass_out,
        mass_in=mass_in,
        l2_out=float(np.sqrt(mass_out)),
        kinetic_out=float(kinetic_out),
        potential_out=potential_out,
    )


def _cumulative_spectrum(u: RadialField) -> np.ndarray:
    g = rc.to_frequency(u)
    return np.cumsum(u.grid.surface_area * u.grid.dual_weights * np.abs(g.values) ** 2)


def _quantile(nodes: np.ndarray, cumulative: np.ndarray, level: float) -> float:
    """Smallest abscissa where the interpolated cumulative sum reaches `level`"""
    if level <= 0:
        return 0.0
    xs = np.concatenate([[0.0], nodes])
    ys = np.concatenate([[0.0], cumulative])
    index = int(np.searchsorted(ys, level))
    if index >= ys.size:
        return float(xs[-1])
    lo, hi = ys[index - 1], ys[index]
    weight = (level - lo) / (hi - lo) if hi > lo else 1.0
    return float(xs[index - 1] + weight * (xs[index] - xs[index - 1]))


def frequency_median(u: RadialField) -> float:
    cumulative = _cumulative_spectrum(u)
    if cumulative[-1] == 0:
        raise PreconditionError("Frequency scale is undefined for the zero field")
    return _quantile(u.grid.xi, cumulative, 0.5 * cumulative[-1])


def frequency_scale(u: RadialField) -> float:
    """Smallest N = 2^{k/8} whose low-frequency ball holds half the mass"""
    median = frequency_median(u)
    k = np.ceil(LADDER_STEPS * np.log2(median) - 1e-9)
    return float(2.0 ** (k / LADDER_STEPS))


def _modulus(u: RadialField, eta: float) -> float:
    if eta >= 1:
        return 0.0
    grid = u.grid
    N = frequency_scale(u)
    spatial = np.cumsum(grid.surface_area * grid.weights * np.abs(u.values) ** 2)
    spectral = _cumulative_spectrum(u)
    radius = _quantile(grid.r, spatial, (1.0 - eta) * spatial[-1])
    frequency = _quantile(grid.xi, spectral, (1.0 - eta) * spectral[-1])
    return max(radius * N, frequency / N)


def compactness_modulus(traj: Trajectory, eta: float) -> float:
    """Smallest C with mass beyond C/N(t) and frequency mass beyond C N(t) both at most eta M"""
    if not 0 < eta <= 1:
        raise PreconditionError(f"eta must lie in (0, 1], got {eta}")
    return float(max(_modulus(u, eta) for u in traj.snapshots))


def local_constancy_probe(traj: Trajectory) -> LocalConstancy:
    """min over snapshot pairs of N(t1) <t1 - t2>^{1/2} / N(t2)"""
    if len(traj.snapshots) < 3:
        raise InsufficientSnapshotsError(f"Local constancy needs 3 snapshots, got {len(traj.snapshots)}")
    scales = np.array([frequency_scale(u) for u in traj.snapshots])
    times = np.asarray(traj.times)
    gap = times[:, None] - times[None, :]
    value = scales[:, None] * (1.0 + gap**2) ** 0.25 / scales[None, :]
    np.fill_diagonal(value, np.inf)
    i, j = np.unravel_index(np.argmin(value), value.shape)
    best = float(value[i, j])
    if best < CONSTANCY_FLOOR:
        logger.warning(f"Local constancy probe {best:.2e} at t=({times[i]}, {times[j]}) is below {CONSTANCY_FLOOR}")
    return LocalConstancy(value=best, flagged=best < CONSTANCY_FLOOR, pair=[float(times[i]), float(times[j])])


def profile_distance(u: RadialField, Q: GroundStateSolution) -> ProfileDistance:
    """H^1 distance from the kinetic-matched, phase-aligned rescaling of u to Q"""
    kin = rc.kinetic(u)
    if kin == 0:
        raise PreconditionError("Profile distance needs nonzero kinetic energy")
    lam = Q.kinetic / kin
    v = apply_scaling(u, lam)
    theta = -np.angle(rc.inner(v, Q.profile))
    difference = apply_phase(v, theta) - Q.profile
    delta = np.sqrt(rc.lp_norm(difference, 2.0) ** 2 + rc.kinetic(difference) ** 2)
    return ProfileDistance(delta=float(delta), theta=float(np.mod(theta, 2 * np.pi)), lam=float(lam))


def scaling_exponent(times: Iterable[float], values: Iterable[float], T: float) -> float:
    """Exponent a in values ~ c |T - t|^{-a} by least squares in log-log"""
    times = np.asarray(list(times))
    values = np.asarray(list(values))
    slope, _ = np.polyfit(np.log(np.abs(T - times)), np.log(values), 1)
    return float(-slope)


def diagnose(traj: Trajectory, Q: Optional[GroundStateSolution] = None, R: Optional[float] = None) -> DiagnosticsReport:
    grid = traj.grid
    R = R or grid.rmax / 4.0
    times = np.asarray(traj.times)
    virials = [virial(u, R) for u in traj.snapshots]
    exterior = [exterior_norms(u, R) for u in traj.snapshots]
    distances: List[Optional[float]] = []
    for u in traj.snapshots:
        if Q is None:
            distances.append(None)
            continue
        try:
            distances.append(profile_distance(u, Q).delta)
        except NlsLabError as exc:
            logger.debug(f"Profile distance unavailable: {exc.message}")
            distances.append(None)

    compactness: Dict[str, float] = {str(eta): compactness_modulus(traj, eta) for eta in COMPACTNESS_LEVELS}
    constancy = local_constancy_probe(traj) if len(traj.snapshots) >= 3 else None
    return DiagnosticsReport(
        R=R,
        t=[float(t) for t in times],
        virial=virials,
        virial_rate=[virial_rate(u, R) for u in traj.snapshots],
        virial_accel=_second_difference(times, np.asarray(virials)),
        sixteen_energy=[16.0 * rc.energy(u, traj.nonlinearity) for u in traj.snapshots],
        mass_out=[ext.mass_out for ext in exterior],
        kinetic_out=[ext.kinetic_out for ext in exterior],
        frequency_scale=[frequency_scale(u) for u in traj.snapshots],
        profile_distance=distances,
        compactness=compactness,
        local_constancy=constancy,
    )


def interior_kinetic(u: RadialField, R: float) -> float:
    """||grad u||_{L^2(r <= R)}"""
    du = rc.radial_derivative(u).values
    return float(np.sqrt(_integrate(u, np.where(u.grid.r <= R, np.abs(du) ** 2, 0.0))))
