# nlslab/inout_decomp.py
"""Incoming/outgoing decomposition of radial fields.

    [P^{+-} f](r) = 1/2 f(r) +- (i/pi) r^{2-d} PV int_0^inf f(rho) rho^{d-1} / (r^2 - rho^2) d rho

The principal value is taken by singularity subtraction on a uniform auxiliary grid:

    PV int_0^L g / (r^2 - rho^2) = int_0^L (g(rho) - g(r)) / (r^2 - rho^2) + g(r) ln((L+r)/(L-r)) / (2r)

The subtracted integrand is smooth with value -g'(r)/(2r) at the pole. P^+ keeps outgoing
spherical waves (in d = 1, P^+ cos(kr) = e^{ikr}/2). Its output is singular at the origin for
d >= 3, so norms of P^{+-} f are taken on r >= r_min.
"""
import logging
from functools import lru_cache
from typing import Literal, Optional, Tuple

import numpy as np
from scipy import special

from nlslab import radial_core as rc
from nlslab import spectral_ops
from nlslab.errors import PreconditionError
from nlslab.models import PVQuadrature
from nlslab.radial_core import RadialField, RadialGrid

logger = logging.getLogger("nlslab.inout_decomp")

DECAY_TOLERANCE = 1e-8
SELFTEST_TOLERANCE = 1e-4

Sign = Literal["+", "-"]


def _auxiliary_nodes(q: PVQuadrature, upper: float) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform nodes on [0, L] with trapezoid (order 0) or Simpson (order 1) weights"""
    count = int(np.floor(upper / q.h))
    if q.extrapolation_order == 1 and count % 2:
        count -= 1
    if count < 4:
        raise PreconditionError(f"Auxiliary spacing h={q.h} is too coarse for L={upper}")
    rho = q.h * np.arange(count + 1)
    weights = np.full(count + 1, q.h)
    if q.extrapolation_order == 1:
        weights[1:-1:2] *= 4.0 / 3.0
        weights[2:-1:2] *= 2.0 / 3.0
        weights[[0, -1]] = q.h / 3.0
    else:
        weights[[0, -1]] = q.h / 2.0
    return rho, weights


def _pv_rule(targets: np.ndarray, rho: np.ndarray, weights: np.ndarray):
    """Pieces of the subtracted rule at each target r.

    Returns (A, pole_weight, log_term): PV(g)(r_k) = A_k . g(rho) - (A_k . 1) g(r_k)
    + log_term_k g(r_k) - pole_weight_k g'(r_k) / (2 r_k).
    """
    upper = rho[-1]
    if np.any(targets >= upper) or np.any(targets <= 0):
        raise PreconditionError(f"PV targets must lie in (0, {upper})")
    gap = targets[:, None] - rho[None, :]
    near = np.abs(gap) < 1e-6 * (rho[1] - rho[0])
    denominator = np.where(near, 1.0, gap * (targets[:, None] + rho[None, :]))
    A = np.where(near, 0.0, weights[None, :] / denominator)
    pole_weight = (near * weights[None, :]).sum(axis=1)
    log_term = np.log((upper + targets) / (upper - targets)) / (2.0 * targets)
    return A, pole_weight, log_term


def _apply_rule(rule, g_aux: np.ndarray, g_target: np.ndarray, dg_target: np.ndarray, targets: np.ndarray):
    A, pole_weight, log_term = rule
    return (
        A @ g_aux
        - A.sum(axis=1) * g_target
        + log_term * g_target
        - pole_weight * dg_target / (2.0 * targets)
    )


def _upper_limit(grid: RadialGrid, q: PVQuadrature) -> float:
    return min(q.upper_limit, grid.rmax) if q.upper_limit else grid.rmax


@lru_cache(maxsize=8)
def _hilbert_matrix(grid: RadialGrid, h: float, order: int, upper: Optional[float]) -> np.ndarray:
    """Real matrix H with (P^{+-} f)(r_k) = f_k / 2 +- (i / pi) (H f)_k"""
    q = PVQuadrature(h=h, extrapolation_order=order, upper_limit=upper)
    check_pv(q)
    rho, weights = _auxiliary_nodes(q, _upper_limit(grid, q))
    d = grid.d
    r = grid.r
    inside = r < rho[-1]
    targets = r[inside]
    A, pole_weight, log_term = _pv_rule(targets, rho, weights)

    # g = f rho^{d-1}, sampled off-grid by band-limited interpolation
    to_aux = (rho ** (d - 1))[:, None] * (grid.evaluation_matrix(rho) @ grid.forward)
    select = np.eye(grid.size)[inside]
    g_node = targets ** (d - 1)
    dg_node = g_node[:, None] * grid.derivative_matrix[inside] + ((d - 1) * targets ** (d - 2.0))[:, None] * select
    pv = (
        A @ to_aux
        + select * ((log_term - A.sum(axis=1)) * g_node)[:, None]
        - (pole_weight / (2.0 * targets))[:, None] * dg_node
    )
    H = np.zeros((grid.size, grid.size))
    H[inside] = (targets ** (2.0 - d))[:, None] * pv / np.pi
    logger.info(f"Built PV operator on {grid.describe()} with {rho.size} auxiliary nodes (h={h}, order={order})")
    return H


def check_decay(f: RadialField, peak: Optional[float] = None) -> None:
    """The truncated kernel needs |f| below 1e-8 of its peak beyond Rmax / 2"""
    peak = peak if peak is not None else rc.lp_norm(f, np.inf)
    outer = f.grid.r >= 0.5 * f.grid.rmax
    tail = float(np.max(np.abs(f.values[outer]))) if outer.any() else 0.0
    if tail > DECAY_TOLERANCE * peak:
        raise PreconditionError(
            f"Field does not decay by Rmax/2: tail {tail:.2e} vs peak {peak:.2e}", tail=tail, peak=peak
        )


def _decompose(f: RadialField, sign: Sign, q: PVQuadrature, peak: Optional[float] = None) -> RadialField:
    check_decay(f, peak)
    H = _hilbert_matrix(f.grid, q.h, q.extrapolation_order, q.upper_limit)
    factor = 1j if sign == "+" else -1j
    return RadialField(f.grid, 0.5 * f.values + factor * rc.apply(H, f.values))


def p_out(f: RadialField, q: Optional[PVQuadrature] = None) -> RadialField:
    """Outgoing part P^+ f"""
    return _decompose(f, "+", q or PVQuadrature())


def p_in(f: RadialField, q: Optional[PVQuadrature] = None) -> RadialField:
    """Incoming part P^- f"""
    return _decompose(f, "-", q or PVQuadrature())


def p_band(
    f: RadialField, N: float, sign: Sign, q: Optional[PVQuadrature] = None, band: spectral_ops.Band = "band"
) -> RadialField:
    """P^{+-} P_N f (band="ge" gives P^{+-} P_{>=N} f); decay is judged against the peak of f"""
    piece = spectral_ops.lp_project(f, N, band)
    return _decompose(piece, sign, q or PVQuadrature(), peak=rc.lp_norm(f, np.inf))


def exterior_l2(f: RadialField, r_min: float) -> float:
    mask = f.grid.r >= r_min
    return float(np.sqrt(f.grid.surface_area * np.sum(f.grid.weights[mask] * np.abs(f.values[mask]) ** 2)))


def exterior_ratio(u: RadialField, r_min: float, sign: Sign = "-", q: Optional[PVQuadrature] = None) -> float:
    """||chi_{r >= r_min} P^{+-} u|| / ||chi_{r >= r_min} u||"""
    part = _decompose(u, sign, q or PVQuadrature())
    return exterior_l2(part, r_min) / exterior_l2(u, r_min)


def non_idempotency(f: RadialField, r_min: float, q: Optional[PVQuadrature] = None) -> float:
    """||P^+ P^+ f - P^+ f|| / ||P^+ f|| on r >= r_min.

    The singular core of P^+ f is removed with a smooth cutoff between r_min and 2 r_min before
    the second application. Reported only; P^+ is not a projection.
    """
    q = q or PVQuadrature()
    first = p_out(f, q)
    core = spectral_ops.smooth_step(f.grid.r, r_min, 2.0 * r_min)
    trimmed = RadialField(f.grid, (1.0 - core) * first.values)
    H = _hilbert_matrix(f.grid, q.h, q.extrapolation_order, q.upper_limit)
    second = RadialField(f.grid, 0.5 * trimmed.values + 1j * rc.apply(H, trimmed.values))
    return exterior_l2(second - first, 2.0 * r_min) / exterior_l2(first, 2.0 * r_min)


def pv_selftest(q: Optional[PVQuadrature] = None, case: Literal["pole", "vanishing"] = "pole") -> float:
    """Max error of the PV rule on integrands with closed-form principal values.

    pole:      PV int_0^inf e^{-rho} / (r^2 - rho^2) = (e^{-r} Ei(r) + e^{r} E1(r)) / (2r)
    vanishing: int_0^L (rho^2 - r^2) e^{-rho^2} / (r^2 - rho^2) = -sqrt(pi)/2 erf(L)
    """
    q = q or PVQuadrature()
    rho, weights = _auxiliary_nodes(q, q.upper_limit or 30.0)
    # off-node targets plus a few sitting exactly on auxiliary nodes
    count = rho.size - 1
    on_node = rho[[max(1, count // 40), max(1, count // 9), max(1, count // 4)]]
    targets = np.concatenate([np.linspace(0.37, 0.45 * rho[-1], 40) + 0.37 * q.h, on_node])
    targets = targets[targets < 0.5 * rho[-1]]
    rule = _pv_rule(targets, rho, weights)
    if case == "pole":
        value = _apply_rule(rule, np.exp(-rho), np.exp(-targets), -np.exp(-targets), targets)
        exact = (np.exp(-targets) * special.expi(targets) + np.exp(targets) * special.exp1(targets)) / (2 * targets)
    else:
        # g vanishes at its own pole, so every target needs its own integrand
        value = np.array(
            [
                _apply_rule(
                    tuple(piece[k : k + 1] for piece in rule),
                    (rho**2 - r**2) * np.exp(-(rho**2)),
                    np.zeros(1),
                    np.array([2 * r * np.exp(-(r**2))]),
                    np.array([r]),
                )[0]
                for k, r in enumerate(targets)
            ]
        )
        exact = np.full(targets.size, -0.5 * np.sqrt(np.pi) * special.erf(rho[-1]))
    error = float(np.max(np.abs(value - exact)))
    logger.info(f"PV self-test ({case}, h={q.h}, order={q.extrapolation_order}): max error {error:.2e}")
    return error


def check_pv(q: PVQuadrature) -> None:
    error = pv_selftest(q)
    if error > SELFTEST_TOLERANCE:
        raise PreconditionError(f"PV rule with h={q.h} fails its self-test (error {error:.2e})", error=error)
