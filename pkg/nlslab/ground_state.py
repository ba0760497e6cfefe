# nlslab/ground_state.py
"""Ground state Q of  Delta Q + Q^{1+4/d} = Q  by shooting and by a normalized gradient flow."""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.integrate import solve_ivp

from nlslab import radial_core as rc
from nlslab.errors import BracketError, CertificationError, ConvergenceError, PreconditionError
from nlslab.models import GroundStateCertificate
from nlslab.radial_core import RadialField, RadialGrid

logger = logging.getLogger("nlslab.ground_state")

BRACKET = (1.0, 20.0)
RESIDUAL_TOL = 1e-8
ENERGY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GroundStateSolution:
    d: int
    grid: RadialGrid
    profile: RadialField = field(repr=False)
    q0: float
    mass: float
    kinetic: float
    potential: float
    energy: float
    residual: float
    c_gn: float
    method: str
    # gradient flow only: the resampled flow output before the Newton polish
    unpolished_mass: Optional[float] = None
    unpolished_residual: Optional[float] = None

    @property
    def l2(self) -> float:
        return float(np.sqrt(self.mass))

    def certificate(self, snapshot_path: Optional[str] = None) -> GroundStateCertificate:
        return GroundStateCertificate(
            d=self.d,
            M=self.grid.size,
            rmax=self.grid.rmax,
            method=self.method,
            mass=self.mass,
            kinetic_sq=self.kinetic**2,
            potential=self.potential,
            energy=self.energy,
            residual=self.residual,
            c_gn=self.c_gn,
            q0=self.q0,
            unpolished_mass=self.unpolished_mass,
            unpolished_residual=self.unpolished_residual,
            snapshot_path=snapshot_path,
        )


def _power(d: int) -> float:
    return 1.0 + 4.0 / d


def elliptic_residual(profile: RadialField) -> RadialField:
    d = profile.grid.d
    q = profile.values
    return RadialField(profile.grid, rc.apply(profile.grid.laplacian_matrix, q) + np.abs(q) ** (4.0 / d) * q - q)


def certify(profile: RadialField, q0: float, method: str) -> GroundStateSolution:
    """Measure the certified quantities and enforce positivity, residual and E(Q) = 0"""
    grid = profile.grid
    d = grid.d
    q = profile.values.real
    significant = q > 1e-8 * q.max()
    floor = int(np.argmin(significant)) if not significant.all() else grid.size
    if not significant[:floor].all() or floor < 4:
        raise CertificationError("positivity", "Profile is not positive up to the resolvability floor")
    if np.any(np.diff(q[:floor]) >= 0):
        raise CertificationError("monotonicity", "Profile is not strictly decreasing")

    rc.check_resolved(profile, "ground state")
    mass = rc.norm(profile, "mass")
    kin = rc.kinetic(profile)
    pot = rc.potential(profile)
    e = rc.energy(profile)
    residual = rc.lp_norm(elliptic_residual(profile), 2.0)
    if residual > RESIDUAL_TOL * np.sqrt(mass):
        raise CertificationError("residual", f"Elliptic residual {residual:.2e} too large", residual)
    if abs(e) > ENERGY_TOL * kin**2:
        raise CertificationError("energy", f"E(Q) = {e:.2e} is not zero", e)

    solution = GroundStateSolution(
        d=d,
        grid=grid,
        profile=profile,
        q0=float(q0),
        mass=mass,
        kinetic=kin,
        potential=pot,
        energy=e,
        residual=residual,
        c_gn=(d + 2.0) / d * mass ** (-2.0 / d),
        method=method,
    )
    logger.info(f"Certified ground state ({method}) d={d}: M(Q)={mass:.10f} E(Q)={e:.2e} rho={residual:.2e}")
    return solution


# -- shooting -------------------------------------------------------------------------------


def _series_start(a: float, d: int, r0: float):
    c = (a - a ** _power(d)) / (2.0 * d)
    return np.array([a + c * r0**2, 2.0 * c * r0])


def _shoot(a: float, d: int, r_end: float):
    """Integrate from the series start; returns (label, solution)"""
    p = _power(d)
    r0 = 1e-3

    def rhs(r, y):
        q, dq = y
        return [dq, q - np.abs(q) ** (p - 1.0) * q - (d - 1.0) / r * dq]

    def crossing(r, y):
        return y[0]

    crossing.terminal = True
    crossing.direction = -1

    def turning(r, y):
        return y[1]

    turning.terminal = True
    turning.direction = 1

    sol = solve_ivp(
        rhs,
        (r0, r_end),
        _series_start(a, d, r0),
        method="RK45",
        rtol=1e-12,
        atol=1e-14,
        events=(crossing, turning),
        dense_output=True,
    )
    if sol.t_events[0].size:
        return "overshoot", sol
    return "undershoot", sol


def _bracket(d: int, r_end: float):
    lo = None
    a = BRACKET[0] * 1.05
    while a <= BRACKET[1]:
        label, _ = _shoot(a, d, r_end)
        if label == "overshoot":
            if lo is None:
                break
            return lo, a
        lo = a
        a *= 1.25
    raise BracketError(f"No shooting dichotomy found for Q(0) in {list(BRACKET)}", d=d)


def _newton_refine(profile: RadialField, steps: int = 30) -> RadialField:
    grid = profile.grid
    p = _power(grid.d)
    q = profile.values.real.copy()
    eye = np.eye(grid.size)
    lap = grid.laplacian_matrix.real
    for step in range(steps):
        f = lap @ q + np.abs(q) ** (p - 1.0) * q - q
        scale = np.sqrt(np.sum(grid.weights * q**2))
        if np.sqrt(np.sum(grid.weights * f**2)) <= 1e-13 * scale:
            break
        jac = lap + np.diag(p * np.abs(q) ** (p - 1.0)) - eye
        q -= np.linalg.solve(jac, f)
    logger.debug(f"Newton refinement stopped after {step} steps")
    return RadialField(grid, q)


def solve_shooting(
    d: int, tol: float = 1e-12, grid: Optional[RadialGrid] = None, r_end: float = 60.0
) -> GroundStateSolution:
    if d < 1:
        raise PreconditionError(f"Dimension must be at least 1, got {d}")
    if not 0 < tol <= 1e-6:
        raise PreconditionError(f"Shooting tolerance must lie in (0, 1e-6], got {tol}")
    grid = grid or rc.make_grid(d, 512, 30.0)
    if grid.d != d:
        raise PreconditionError(f"Grid dimension {grid.d} does not match d={d}")

    lo, hi = _bracket(d, r_end)
    logger.info(f"Shooting bracket for d={d}: Q(0) in [{lo:.4f}, {hi:.4f}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        label, _ = _shoot(mid, d, r_end)
        if label == "overshoot":
            hi = mid
        else:
            lo = mid

    _, sol = _shoot(lo, d, r_end)
    # the undershoot trajectory is trusted up to its turning point; beyond that, the decaying tail
    r_cut = sol.t_events[1][0] if sol.t_events[1].size else sol.t[-1]
    q_cut = float(sol.sol(r_cut)[0])
    r = grid.r
    values = np.empty_like(r)
    inner = r <= r_cut
    start = r < sol.t[0]
    values[inner & ~start] = sol.sol(r[inner & ~start])[0]
    values[start] = _series_start(lo, d, r[start])[0]
    outer = ~inner
    values[outer] = q_cut * (r_cut / r[outer]) ** ((d - 1) / 2.0) * np.exp(-(r[outer] - r_cut))

    profile = _newton_refine(RadialField(grid, values))
    q0 = float(rc.evaluate(profile, [0.0])[0].real)
    return certify(profile, q0, "shooting")


# -- normalized gradient flow ---------------------------------------------------------------


@dataclass
class FlowTrace:
    normalized_energy: List[float] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)


def weinstein_functional(f: RadialField) -> float:
    """J(f) = ||f||_p^p / (||f||_2^{4/d} ||grad f||_2^2); its maximum is the sharp GN constant"""
    d = f.grid.d
    return rc.potential(f) / (rc.lp_norm(f, 2.0) ** (4.0 / d) * rc.kinetic(f) ** 2)


def _fit_equation(profile: np.ndarray, grid: RadialGrid):
    """Least-squares (mu, c) in  Delta P + c |P|^{4/d} P = mu P"""
    lap = grid.laplacian_matrix.real @ profile
    nonlinear = np.abs(profile) ** (4.0 / grid.d) * profile
    w = np.sqrt(grid.weights)
    design = np.column_stack([w * profile, -w * nonlinear])
    (mu, c), *_ = np.linalg.lstsq(design, w * lap, rcond=None)
    residual = np.linalg.norm(w * (lap - mu * profile + c * nonlinear)) / np.linalg.norm(w * profile)
    return float(mu), float(c), float(residual)


def solve_gradient_flow(
    grid: RadialGrid,
    dtau: float = 0.05,
    tol: float = 1e-9,
    seed: Optional[RadialField] = None,
    max_steps: int = 50000,
    trace: Optional[FlowTrace] = None,
) -> GroundStateSolution:
    """Imaginary-time ascent of the Weinstein functional with mass renormalization each step"""
    d = grid.d
    seed = seed if seed is not None else rc.gaussian(grid)
    q = seed.values.real
    if np.any(q < 0) or not np.any(q > 0):
        raise PreconditionError("Gradient flow needs a positive real seed")
    if max_steps < 1:
        raise PreconditionError(f"Gradient flow needs at least one step, got max_steps={max_steps}")

    xi2 = grid.xi**2
    area = grid.surface_area
    mu_history: List[float] = []
    mu = c = 0.0
    residual = np.inf
    q = q / np.sqrt(area * np.sum(grid.weights * q**2))
    for step in range(max_steps):
        spectrum = grid.forward @ q
        kin = area * np.sum(grid.dual_weights * xi2 * np.abs(spectrum) ** 2)
        pot = area * np.sum(grid.weights * np.abs(q) ** (2.0 + 4.0 / d))
        explicit = q + dtau * ((2.0 + 4.0 / d) * np.abs(q) ** (4.0 / d) * q / pot - (4.0 / d) * q)
        q = (grid.inverse @ ((grid.forward @ explicit) / (1.0 + 2.0 * dtau * xi2 / kin))).real
        q = q / np.sqrt(area * np.sum(grid.weights * q**2))

        if trace is not None:
            candidate = RadialField(grid, q)
            trace.normalized_energy.append(0.5 - d / (2.0 * (d + 2)) * weinstein_functional(candidate))
        if step % 50 == 0 or step == max_steps - 1:
            mu, c, residual = _fit_equation(q, grid)
            mu_history.append(mu)
            if trace is not None:
                trace.residual.append(residual)
            if residual <= tol:
                break
    else:
        raise ConvergenceError(f"Gradient flow did not converge in {max_steps} steps", residual=residual)

    if mu <= 0 or c <= 0:
        raise ConvergenceError(f"Fitted mu={mu:.3e}, c={c:.3e} must be positive")
    if len(mu_history) >= 3 and np.std(mu_history[-3:]) > 1e-6 * abs(mu):
        raise ConvergenceError("The mu estimate is still oscillating", mu=mu)
    logger.info(f"Gradient flow converged after {step + 1} steps: mu={mu:.8f} c={c:.8f}")

    # P(x) = A Q(x / s) with s = mu^{-1/2}, A = (mu / c)^{d/4}
    s = mu ** -0.5
    amplitude = (mu / c) ** (d / 4.0)
    flowed = RadialField(grid, q)
    inside = s * grid.r < grid.rmax
    values = np.zeros(grid.size)
    values[inside] = rc.evaluate(flowed, s * grid.r[inside]).real / amplitude
    resampled = RadialField(grid, values)
    unpolished_mass = rc.norm(resampled, "mass")
    unpolished_residual = rc.lp_norm(elliptic_residual(resampled), 2.0)
    logger.info(f"Gradient flow before polish: M={unpolished_mass:.10f} rho={unpolished_residual:.2e}")
    # the resampled profile carries the flow's truncation error; polish on the target grid
    profile = _newton_refine(resampled)
    q0 = float(rc.evaluate(profile, [0.0])[0].real)
    solution = certify(profile, q0, "gradient-flow")
    return replace(solution, unpolished_mass=unpolished_mass, unpolished_residual=unpolished_residual)


def gn_deficit(f: RadialField, Q: GroundStateSolution) -> float:
    """RHS - LHS of the sharp Gagliardo-Nirenberg inequality (>= 0 up to quadrature error)"""
    mass = rc.norm(f, "mass")
    if mass == 0:
        raise PreconditionError("The Gagliardo-Nirenberg deficit is undefined for the zero field")
    d = f.grid.d
    rhs = (d + 2.0) / d * (mass / Q.mass) ** (2.0 / d) * rc.norm(f, "kinetic") ** 2
    return rhs - rc.potential(f)


def gn_rhs(f: RadialField, Q: GroundStateSolution) -> float:
    d = f.grid.d
    return (d + 2.0) / d * (rc.norm(f, "mass") / Q.mass) ** (2.0 / d) * rc.kinetic(f) ** 2
