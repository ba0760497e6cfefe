# nlslab/exact_solutions.py
"""Scaling and phase symmetries, the soliton and the pseudo-conformal blowup family."""
import logging
from typing import Optional

import numpy as np

from nlslab import radial_core as rc
from nlslab.errors import PreconditionError, ResolutionError
from nlslab.ground_state import GroundStateSolution
from nlslab.models import SymmetryParams
from nlslab.radial_core import RadialField, SpectralField

logger = logging.getLogger("nlslab.exact_solutions")

MASS_TOLERANCE = 1e-8


def _spectrum_at(f: RadialField, frequencies: np.ndarray) -> np.ndarray:
    """Radial Fourier transform of the sampled field at arbitrary frequencies"""
    grid = f.grid
    kernel = rc.bessel_kernel(grid.nu, np.outer(frequencies, grid.r)) * grid.weights[None, :]
    return rc.apply(kernel, f.values)


def apply_scaling(f: RadialField, lam: float) -> RadialField:
    """f -> lam^{d/2} f(lam x), resampled on the frequency side where the dilation stays in band"""
    if not lam > 0:
        raise PreconditionError(f"Scale must be positive, got {lam}")
    if lam == 1:
        return f
    grid = f.grid
    d = grid.d
    if lam > 1:
        # spectrum spreads out: g^(xi) = lam^{-d/2} f^(xi / lam), every xi / lam is inside the band
        scaled = SpectralField(grid, lam ** (-d / 2.0) * _spectrum_at(f, grid.xi / lam))
        out = rc.to_physical(scaled)
    else:
        # field spreads out: g(r) = lam^{d/2} f(lam r), every lam r is inside the box
        out = RadialField(grid, lam ** (d / 2.0) * rc.evaluate(f, lam * grid.r))
    rc.check_resolved(out, f"field scaled by {lam:g}")
    before, after = rc.norm(f, "mass"), rc.norm(out, "mass")
    if abs(after - before) > MASS_TOLERANCE * before:
        raise ResolutionError(
            f"Scaling by {lam:g} moves mass outside the grid ({after:.6e} vs {before:.6e})", lam=lam
        )
    return out


def apply_phase(f: RadialField, theta: float) -> RadialField:
    return np.exp(1j * theta) * f


def soliton(Q: GroundStateSolution, t: float, params: Optional[SymmetryParams] = None) -> RadialField:
    """e^{i theta0} e^{i lambda0^2 t} lambda0^{d/2} Q(lambda0 x)"""
    params = params or SymmetryParams()
    scaled = apply_scaling(Q.profile, params.lambda0)
    return apply_phase(scaled, params.theta0 + params.lambda0**2 * t)


def pseudoconformal(
    Q: GroundStateSolution, t: float, T: float, params: Optional[SymmetryParams] = None
) -> RadialField:
    """Explicit blowup solution at time T.

    v(t, x) = e^{i theta0} lambda0^{d/2} |t-T|^{-d/2} e^{i|x|^2 / (4(t-T)) - i lambda0^2 / (t-T)}
              Q(lambda0 x / (t-T))

    With theta0 = 0 and lambda0 = 1 this is |t-T|^{-d/2} e^{i(|x|^2-4)/(4(t-T))} Q(x/(t-T)).
    """
    params = params or SymmetryParams()
    if t == T:
        raise PreconditionError("The pseudo-conformal solution is singular at t = T", t=t, T=T)
    tau = t - T
    grid = Q.grid
    profile = apply_scaling(Q.profile, params.lambda0 / abs(tau))
    chirp = np.exp(1j * grid.r**2 / (4.0 * tau) - 1j * params.lambda0**2 / tau + 1j * params.theta0)
    out = RadialField(grid, chirp * profile.values)
    rc.check_resolved(out, f"pseudo-conformal solution at t - T = {tau:g}")
    return out


def pseudoconformal_kinetic(Q: GroundStateSolution, t: float, T: float, lambda0: float = 1.0) -> float:
    """Closed form ||grad v(t)||_2 = sqrt(lambda0^2 |t-T|^{-2} ||grad Q||^2 + ||x Q||^2 / (4 lambda0^2))

    The chirp contributes the time-independent moment term.
    """
    return float(np.sqrt(lambda0**2 / (t - T) ** 2 * Q.kinetic**2 + moment(Q) / (4.0 * lambda0**2)))


def moment(Q: GroundStateSolution) -> float:
    """||x Q||_2^2"""
    return rc.lp_norm(RadialField(Q.grid, Q.grid.r * Q.profile.values), 2.0) ** 2
