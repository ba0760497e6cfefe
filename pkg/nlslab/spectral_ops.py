# nlslab/spectral_ops.py
"""Littlewood-Paley projections, spatial cutoffs and numerical probes of Bernstein and mismatch bounds."""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Literal, Optional

import numpy as np

from nlslab import radial_core as rc
from nlslab.errors import HypothesisError, PreconditionError
from nlslab.models import BernsteinReport, MismatchReport, RatioStats
from nlslab.radial_core import RadialField, RadialGrid, SpectralField

logger = logging.getLogger("nlslab.spectral_ops")

Band = Literal["le", "band", "gt", "ge", "tilde"]
Side = Literal["le", "gt"]

MISMATCH_STABILITY = 10.0
POWER_ITERATIONS = 60
BERNSTEIN_SCALES = (1.0, 2.0, 4.0, 8.0, 16.0)


def _glue(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    positive = t > 0
    out[positive] = np.exp(-1.0 / t[positive])
    return out


def _glue_derivative(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    positive = t > 0
    out[positive] = np.exp(-1.0 / t[positive]) / t[positive] ** 2
    return out


def smooth_step(x, inner: float, outer: float) -> np.ndarray:
    """C^infinity step: 1 on [0, inner], 0 on [outer, inf), strictly decreasing in between"""
    s = (np.asarray(x, dtype=float) - inner) / (outer - inner)
    a = _glue(1.0 - s)
    b = _glue(s)
    return a / (a + b)


def smooth_step_derivative(x, inner: float, outer: float) -> np.ndarray:
    s = (np.asarray(x, dtype=float) - inner) / (outer - inner)
    a, b = _glue(1.0 - s), _glue(s)
    da, db = -_glue_derivative(1.0 - s), _glue_derivative(s)
    total = a + b
    return (da * b - a * db) / total**2 / (outer - inner)


@dataclass(frozen=True)
class BumpCutoff:
    """phi = 1 on [0, inner], 0 beyond outer; phi_{<=C}(x) = phi(x / C)"""

    inner: float = 1.0
    outer: float = 25.0 / 24.0

    def __call__(self, x) -> np.ndarray:
        return smooth_step(x, self.inner, self.outer)

    def le(self, x, C: float) -> np.ndarray:
        return self(np.asarray(x) / C)

    def gt(self, x, C: float) -> np.ndarray:
        return 1.0 - self.le(x, C)

    def derivative(self, x) -> np.ndarray:
        return smooth_step_derivative(x, self.inner, self.outer)


PHI = BumpCutoff()


def multiplier(xi: np.ndarray, N: float, band: Band) -> np.ndarray:
    if not N > 0:
        raise PreconditionError(f"Frequency scale must be positive, got {N}")
    if band == "le":
        return PHI.le(xi, N)
    if band == "gt":
        return PHI.gt(xi, N)
    if band == "band":
        return PHI.le(xi, N) - PHI.le(xi, N / 2.0)
    if band == "ge":
        return PHI.gt(xi, N / 2.0)
    if band == "tilde":
        # P_{N/2} + P_N + P_{2N}
        return PHI.le(xi, 2.0 * N) - PHI.le(xi, N / 4.0)
    raise PreconditionError(f"Unknown band {band!r}")


def lp_project(f: RadialField, N: float, band: Band = "band") -> RadialField:
    g = rc.to_frequency(f)
    return rc.to_physical(SpectralField(g.grid, multiplier(g.grid.xi, N, band) * g.values))


def spatial_cutoff(f: RadialField, C: float, side: Side = "le") -> RadialField:
    if not C > 0:
        raise PreconditionError(f"Cutoff radius must be positive, got {C}")
    weight = PHI.le(f.grid.r, C) if side == "le" else PHI.gt(f.grid.r, C)
    return RadialField(f.grid, weight * f.values)


def fractional_derivative(f: RadialField, s: float) -> RadialField:
    """|grad|^s as the multiplier |xi|^s; negative s needs f free of low frequencies"""
    g = rc.to_frequency(f)
    return rc.to_physical(SpectralField(g.grid, g.grid.xi**s * g.values))


# -- probes ---------------------------------------------------------------------------------


def random_mixture(grid: RadialGrid, rng: np.random.Generator, scale: float = 1.0, terms: int = 4) -> RadialField:
    """Gaussian mixture with random complex weights and widths, dilated to frequency scale `scale`"""
    coefficients = rng.normal(size=terms) + 1j * rng.normal(size=terms)
    exponents = rng.uniform(0.25, 2.0, size=terms)
    return rc.gaussian_mixture(grid, coefficients, exponents, scale)


def _stats(values: List[float]) -> RatioStats:
    values = np.asarray(values)
    return RatioStats(min=float(values.min()), max=float(values.max()), median=float(np.median(values)))


def bernstein_probe(
    grid: RadialGrid, N: float, p: float = 2.0, q: float = np.inf, s: float = 1.0, trials: int = 20, seed: int = 0
) -> BernsteinReport:
    """Measure the Bernstein ratios on random fields concentrated at frequency N.

    The same seed draws the same shapes for every N, dilated by N, so the ratios are comparable
    across scales.
    """
    if not 1 <= p <= q <= np.inf:
        raise PreconditionError(f"Need 1 <= p <= q <= inf, got p={p}, q={q}")
    if trials < 20:
        raise PreconditionError(f"At least 20 trials are required, got {trials}")
    rng = np.random.default_rng(seed)
    d = grid.d
    up, down, gain = [], [], []
    while len(up) < trials:
        f = random_mixture(grid, rng, scale=N)
        piece = lp_project(f, N, "band")
        base = rc.lp_norm(piece, p)
        if rc.lp_norm(piece, 2.0) < 1e-8 * rc.lp_norm(f, 2.0):
            logger.debug("Degenerate Bernstein trial resampled")
            continue
        up.append(rc.lp_norm(fractional_derivative(piece, s), p) / (N**s * base))
        down.append(rc.lp_norm(fractional_derivative(piece, -s), p) / (N ** (-s) * base))
        exponent = d / p - (d / q if q != np.inf else 0.0)
        gain.append(rc.lp_norm(piece, q) / (N**exponent * base))
    return BernsteinReport(
        N=N,
        p=p,
        q=q,
        s=s,
        trials=trials,
        derivative_up=_stats(up),
        derivative_down=_stats(down),
        lp_gain=_stats(gain),
    )


def bernstein_sweep(
    grid: RadialGrid, scales: Iterable[float] = BERNSTEIN_SCALES, **kwargs
) -> List[BernsteinReport]:
    return [bernstein_probe(grid, N, **kwargs) for N in scales]


def _orthonormal(grid: RadialGrid, operator: np.ndarray, spectral: bool = False) -> np.ndarray:
    """Conjugate an operator into coordinates where the weighted L^2 norm is Euclidean"""
    w = np.sqrt(grid.surface_area * (grid.dual_weights if spectral else grid.weights))
    return w[:, None] * operator / w[None, :]


def operator_norm(matrix: np.ndarray, trials: int, rng: np.random.Generator) -> float:
    """Largest ratio over random trial vectors, refined by power iteration on A^* A"""
    best, best_vector = 0.0, None
    for _ in range(trials):
        v = rng.normal(size=matrix.shape[1]) + 1j * rng.normal(size=matrix.shape[1])
        ratio = np.linalg.norm(matrix @ v) / np.linalg.norm(v)
        if ratio > best:
            best, best_vector = ratio, v
    v = best_vector / np.linalg.norm(best_vector)
    adjoint = matrix.conj().T
    for _ in range(POWER_ITERATIONS):
        w = adjoint @ (matrix @ v)
        size = np.linalg.norm(w)
        if size == 0:
            break
        v = w / size
        best = max(best, float(np.linalg.norm(matrix @ v)))
    return float(best)


def _real_space_operator(grid: RadialGrid, N: float, R: float) -> np.ndarray:
    """phi_{>R} grad P_{<=N} phi_{<=R/2} in physical coordinates"""
    low = PHI.le(grid.xi, N)[:, None] * grid.forward * PHI.le(grid.r, R / 2.0)[None, :]
    return PHI.gt(grid.r, R)[:, None] * (grid.derivative_synthesis @ low)


def _frequency_operator(grid: RadialGrid, N: float, M: float, R: float, gradient: bool) -> np.ndarray:
    """P_N phi_{<=R} P_M (or P_N phi_{<=R} |grad| P_M) in frequency coordinates"""
    inner = multiplier(grid.xi, M, "band") * (grid.xi if gradient else 1.0)
    middle = grid.forward @ (PHI.le(grid.r, R)[:, None] * grid.inverse)
    return multiplier(grid.xi, N, "band")[:, None] * middle * inner[None, :]


def mismatch_probe(
    grid: RadialGrid,
    kind: Literal["real", "freq"],
    params: Dict[str, float],
    m: float = 2.0,
    trials: int = 20,
    constant: Optional[float] = None,
    seed: int = 0,
) -> MismatchReport:
    """Empirical operator norm against the decay shape of the mismatch bound.

    real: params N, R; shape N^{1-m} R^{-m}.
    freq: params N, M, R and optional gradient=1; shape max(N,M)^{-m} R^{-m}, times M with gradient.
    Without `constant` the constant is fitted at this point.
    """
    rng = np.random.default_rng(seed)
    if kind == "real":
        N, R = params["N"], params["R"]
        if not (N > 0 and R > 0):
            raise PreconditionError(f"Need N, R > 0, got {params}")
        matrix = _orthonormal(grid, _real_space_operator(grid, N, R))
        shape = N ** (1.0 - m) * R ** (-m)
    elif kind == "freq":
        N, M, R = params["N"], params["M"], params["R"]
        if not (N > 0 and M > 0 and R > 0):
            raise PreconditionError(f"Need N, M, R > 0, got {params}")
        if max(N, M) < 4.0 * min(N, M):
            raise HypothesisError(
                f"Frequency mismatch needs max(N, M) >= 4 min(N, M), got N={N}, M={M}", N=N, M=M
            )
        gradient = bool(params.get("gradient", 0))
        matrix = _orthonormal(grid, _frequency_operator(grid, N, M, R, gradient), spectral=True)
        shape = max(N, M) ** (-m) * R ** (-m) * (M if gradient else 1.0)
    else:
        raise PreconditionError(f"Unknown mismatch kind {kind!r}")

    measured = operator_norm(matrix, trials, rng)
    fitted = constant if constant is not None else measured / shape
    bound = fitted * shape
    ratio = measured / bound if bound > 0 else np.inf
    return MismatchReport(
        kind=kind,
        params=dict(params),
        m=m,
        measured=measured,
        bound=bound,
        constant=fitted,
        ratio=float(ratio),
        within_bound=bool(ratio <= MISMATCH_STABILITY),
    )


def mismatch_sweep(
    grid: RadialGrid,
    kind: Literal["real", "freq"],
    points: List[Dict[str, float]],
    m: float = 2.0,
    trials: int = 20,
    seed: int = 0,
) -> List[MismatchReport]:
    """Fit the constant on the first point, then check every point against it"""
    reference = mismatch_probe(grid, kind, points[0], m, trials, seed=seed)
    reports = [reference]
    for point in points[1:]:
        report = mismatch_probe(grid, kind, point, m, trials, constant=reference.constant, seed=seed)
        if not report.within_bound:
            logger.warning(f"Mismatch {kind} at {point}: ratio {report.ratio:.2f} exceeds {MISMATCH_STABILITY}")
        reports.append(report)
    return reports
