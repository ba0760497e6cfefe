# nlslab/radial_core.py
"""Radial grids on R^d and the discrete Hankel transform that realizes their Fourier transform.

A radial function f(x) = f(|x|) on R^d has the radial Fourier transform

    f^(xi) = xi^{-nu} int_0^inf f(r) J_nu(xi r) r^{d/2} dr,    nu = d/2 - 1,

i.e. r^nu f and xi^nu f^ form an order-nu Hankel pair. The grid samples both sides at scaled
zeros of J_nu (physical r_k = j_k Rmax / j_{M+1}, frequency xi_k = j_k / Rmax), where the
transform is a symmetric matrix. That matrix is replaced by its orthogonal polar factor so the
transform is unitary to roundoff in the quadrature-weighted L^2 norms.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional, Union

import numpy as np
from scipy import linalg, special
from scipy.optimize import brentq

from nlslab.errors import GridError, GridMismatchError, PreconditionError, ResolutionError

logger = logging.getLogger("nlslab.radial_core")

MIN_NODES = 16
TAIL_FRACTION = 0.1
TAIL_TOLERANCE = 1e-6

NormKind = Union[str, float]


def bessel_zeros(nu: float, count: int) -> np.ndarray:
    """First `count` positive zeros of J_nu, for any real order nu >= -1/2"""
    if nu >= 0 and float(nu).is_integer():
        return special.jn_zeros(int(nu), count)

    step = np.pi / 16
    x = np.arange(step, (count + abs(nu) + 3) * np.pi, step)
    y = special.jv(nu, x)
    crossings = np.nonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0)[0]
    if len(crossings) < count:
        raise GridError(f"Could only bracket {len(crossings)} zeros of J_{nu}", requested=count)
    zeros = [
        brentq(lambda z: special.jv(nu, z), x[i], x[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        for i in crossings[:count]
    ]
    return np.asarray(zeros)


def bessel_kernel(nu: float, z: np.ndarray) -> np.ndarray:
    """J_nu(z) z^{-nu}, continued to z = 0"""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 1e-8
    out[~small] = special.jv(nu, z[~small]) * z[~small] ** (-nu)
    out[small] = 1.0 / (2.0**nu * special.gamma(nu + 1.0))
    return out


def apply(matrix: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Real matrix times complex vector without promoting the matrix"""
    values = np.asarray(values)
    if not np.iscomplexobj(values):
        return matrix @ values
    return matrix @ values.real + 1j * (matrix @ values.imag)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Immutable node/weight set; identity is the equality (grids are cached per parameters)"""

    d: int
    size: int
    rmax: float
    r: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    dual_weights: np.ndarray = field(repr=False)
    forward: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)

    @property
    def nu(self) -> float:
        return self.d / 2.0 - 1.0

    @property
    def surface_area(self) -> float:
        return 2.0 * np.pi ** (self.d / 2.0) / special.gamma(self.d / 2.0)

    @property
    def strichartz_exponent(self) -> float:
        return 2.0 * (self.d + 2) / self.d

    @cached_property
    def laplacian_matrix(self) -> np.ndarray:
        return self.inverse @ (-(self.xi**2)[:, None] * self.forward)

    @cached_property
    def derivative_synthesis(self) -> np.ndarray:
        """Maps spectral coefficients to d/dr of the band-limited interpolant at the nodes"""
        z = np.outer(self.r, self.xi)
        return -special.jv(self.nu + 1.0, z) * z ** (-self.nu) * (self.xi * self.dual_weights)[None, :]

    @cached_property
    def derivative_matrix(self) -> np.ndarray:
        return self.derivative_synthesis @ self.forward

    def evaluation_matrix(self, radii: np.ndarray) -> np.ndarray:
        """Band-limited synthesis matrix: rows map spectral coefficients to values at `radii`"""
        radii = np.asarray(radii, dtype=float)
        return bessel_kernel(self.nu, np.outer(radii, self.xi)) * self.dual_weights[None, :]

    def describe(self) -> dict:
        return {"d": self.d, "M": self.size, "rmax": self.rmax}


@lru_cache(maxsize=16)
def make_grid(d: int, M: int, rmax: float) -> RadialGrid:
    if d < 1:
        raise GridError(f"Dimension must be at least 1, got {d}", d=d)
    if M < MIN_NODES:
        raise GridError(f"Node count must be at least {MIN_NODES}, got {M}", M=M)
    if not rmax > 0:
        raise GridError(f"Radial extent must be positive, got {rmax}", rmax=rmax)

    nu = d / 2.0 - 1.0
    zeros = bessel_zeros(nu, M + 1)
    edge = zeros[M]
    j = zeros[:M]
    jn1 = np.abs(special.jv(nu + 1.0, j))

    kernel = 2.0 * special.jv(nu, np.outer(j, j) / edge) / (edge * np.outer(jn1, jn1))
    unitary, _ = linalg.polar(kernel)
    unitary = 0.5 * (unitary + unitary.T)
    logger.info(
        f"Built radial grid d={d} M={M} rmax={rmax} | polar correction {np.max(np.abs(unitary - kernel)):.2e}"
    )

    r = j * rmax / edge
    xi = j / rmax
    weights = 2.0 * rmax**2 / (edge**2 * jn1**2) * r ** (2.0 * nu)
    dual_weights = 2.0 / (rmax**2 * jn1**2) * xi ** (2.0 * nu)
    phys = np.sqrt(weights)
    freq = np.sqrt(dual_weights)

    arrays = dict(
        r=r,
        xi=xi,
        weights=weights,
        dual_weights=dual_weights,
        forward=unitary * phys[None, :] / freq[:, None],
        inverse=unitary * freq[None, :] / phys[:, None],
    )
    for value in arrays.values():
        value.setflags(write=False)
    return RadialGrid(d=d, size=M, rmax=float(rmax), **arrays)


def _frozen(values: np.ndarray, grid: RadialGrid, what: str) -> np.ndarray:
    values = np.array(values, dtype=complex)
    if values.shape != (grid.size,):
        raise GridMismatchError(f"{what} has {values.shape} samples, grid has {grid.size} nodes")
    if not np.all(np.isfinite(values)):
        raise PreconditionError(f"{what} contains non-finite samples")
    values.setflags(write=False)
    return values


class _Samples:
    grid: RadialGrid
    values: np.ndarray

    # numpy scalars defer to __rmul__ instead of broadcasting over the object
    __array_ufunc__ = None

    def _coerce(self, other):
        if isinstance(other, type(self)):
            if other.grid is not self.grid:
                raise GridMismatchError("Fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return type(self)(self.grid, self.values + self._coerce(other))

    def __sub__(self, other):
        return type(self)(self.grid, self.values - self._coerce(other))

    def __mul__(self, other):
        return type(self)(self.grid, self.values * self._coerce(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return type(self)(self.grid, -self.values)

    def conj(self):
        return type(self)(self.grid, np.conj(self.values))


@dataclass(frozen=True, eq=False)
class RadialField(_Samples):
    """Samples u(r_k) of a radial function u(x) = f(|x|)"""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid, "RadialField"))

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "RadialField":
        return cls(grid, func(grid.r))


@dataclass(frozen=True, eq=False)
class SpectralField(_Samples):
    """Samples u^(xi_k) of the radial Fourier transform"""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid, "SpectralField"))


def to_frequency(f: RadialField) -> SpectralField:
    return SpectralField(f.grid, apply(f.grid.forward, f.values))


def to_physical(g: SpectralField) -> RadialField:
    return RadialField(g.grid, apply(g.grid.inverse, g.values))


def zeros_like(f: RadialField) -> RadialField:
    return RadialField(f.grid, np.zeros(f.grid.size))


def gaussian(grid: RadialGrid, a: float = 1.0, amplitude: complex = 1.0) -> RadialField:
    return RadialField(grid, amplitude * np.exp(-a * grid.r**2))


def gaussian_mixture(grid: RadialGrid, coefficients, exponents, scale: float = 1.0) -> RadialField:
    """sum_k c_k exp(-a_k (scale r)^2), synthesized from its closed-form spectrum (alias free)"""
    xi = grid.xi / scale
    spectrum = np.zeros(grid.size, dtype=complex)
    for c, a in zip(coefficients, exponents):
        spectrum += c * (2.0 * a) ** (-grid.d / 2.0) * np.exp(-(xi**2) / (4.0 * a))
    return to_physical(SpectralField(grid, spectrum * scale ** (-grid.d)))


def inner(f: RadialField, g: RadialField) -> complex:
    """<f, g> = int f conj(g) dx"""
    if f.grid is not g.grid:
        raise GridMismatchError("Fields live on different grids")
    return complex(f.grid.surface_area * np.sum(f.grid.weights * f.values * np.conj(g.values)))


def spectral_mass(g: SpectralField) -> float:
    return float(g.grid.surface_area * np.sum(g.grid.dual_weights * np.abs(g.values) ** 2))


def spectral_tail(grid: RadialGrid, spectrum: np.ndarray) -> float:
    """Share of the L^2 mass carried by the top 10% of frequency nodes"""
    density = grid.dual_weights * np.abs(spectrum) ** 2
    total = density.sum()
    if total == 0:
        return 0.0
    cut = int(np.floor((1.0 - TAIL_FRACTION) * grid.size))
    return float(density[cut:].sum() / total)


def tail_fraction(f: RadialField) -> float:
    return spectral_tail(f.grid, to_frequency(f).values)


def is_resolved(f: RadialField) -> bool:
    return tail_fraction(f) < TAIL_TOLERANCE


def check_resolved(f: RadialField, what: str = "field", spectrum: Optional[np.ndarray] = None) -> None:
    """Raise ResolutionError when the frequency tail is too heavy; reuses `spectrum` if given"""
    tail = spectral_tail(f.grid, spectrum) if spectrum is not None else tail_fraction(f)
    if tail >= TAIL_TOLERANCE:
        raise ResolutionError(
            f"The {what} carries {tail:.2e} of its mass in the top frequency band",
            tail_fraction=tail,
        )


def lp_norm(f: RadialField, p: float) -> float:
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if p < 1:
        raise PreconditionError(f"L^p norms need p >= 1, got {p}")
    integral = f.grid.surface_area * np.sum(f.grid.weights * np.abs(f.values) ** p)
    return float(integral ** (1.0 / p))


def kinetic(f: RadialField) -> float:
    """||grad f||_2 computed on the frequency side"""
    g = to_frequency(f)
    return float(np.sqrt(spectral_mass(SpectralField(g.grid, g.grid.xi * g.values))))


def potential(f: RadialField) -> float:
    """||f||_p^p with p = 2(d+2)/d"""
    return lp_norm(f, f.grid.strichartz_exponent) ** f.grid.strichartz_exponent


def energy(f: RadialField, nonlinearity: float = 1.0) -> float:
    d = f.grid.d
    return 0.5 * kinetic(f) ** 2 - nonlinearity * d / (2.0 * (d + 2)) * potential(f)


def norm(f: RadialField, kind: NormKind) -> float:
    """mass, kinetic, energy, the named exponents `strichartz` / `sobolev`, `inf`, or numeric p"""
    d = f.grid.d
    if kind == "mass":
        return lp_norm(f, 2.0) ** 2
    if kind in ("kinetic", "energy"):
        check_resolved(f)
        return kinetic(f) if kind == "kinetic" else energy(f)
    if kind == "strichartz":
        return lp_norm(f, f.grid.strichartz_exponent)
    if kind == "sobolev":
        if d <= 2:
            raise PreconditionError(f"The exponent 2d/(d-2) needs d >= 3, got d={d}")
        return lp_norm(f, 2.0 * d / (d - 2.0))
    if kind == "inf":
        return lp_norm(f, np.inf)
    if isinstance(kind, (int, float)):
        return lp_norm(f, float(kind))
    raise PreconditionError(f"Unknown norm kind {kind!r}")


def laplacian(f: RadialField) -> RadialField:
    check_resolved(f)
    return RadialField(f.grid, apply(f.grid.laplacian_matrix, f.values))


def radial_derivative(f: RadialField) -> RadialField:
    return RadialField(f.grid, apply(f.grid.derivative_matrix, f.values))


def evaluate(f: RadialField, radii) -> np.ndarray:
    """Band-limited interpolant of f at arbitrary radii"""
    return apply(f.grid.evaluation_matrix(radii), to_frequency(f).values)
