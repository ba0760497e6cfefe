import numpy as np
import pytest

from nlslab import radial_core as rc
from nlslab.errors import GridError, GridMismatchError, PreconditionError, ResolutionError
from nlslab.radial_core import RadialField, SpectralField
from nlslab.spectral_ops import random_mixture


class TestMakeGrid:
    @pytest.mark.parametrize("d, M, rmax", [(0, 64, 10.0), (4, 8, 10.0), (4, 64, 0.0), (4, 64, -1.0)])
    def test_rejects_invalid_parameters(self, d, M, rmax):
        with pytest.raises(GridError):
            rc.make_grid(d, M, rmax)

    def test_nodes_and_weights(self, grid):
        assert np.all(np.diff(grid.r) > 0) and grid.r[0] > 0
        assert np.all(np.diff(grid.xi) > 0) and grid.xi[0] > 0
        assert np.all(grid.weights > 0) and np.all(grid.dual_weights > 0)
        assert grid.r[-1] < grid.rmax

    def test_grids_are_cached(self):
        assert rc.make_grid(3, 64, 10.0) is rc.make_grid(3, 64, 10)


class TestTransform:
    def test_roundtrip_on_random_fields(self, grid, rng):
        for _ in range(100):
            f = random_mixture(grid, rng, scale=rng.uniform(0.5, 3.0))
            back = rc.to_physical(rc.to_frequency(f))
            assert rc.lp_norm(back - f, 2.0) <= 1e-10 * rc.lp_norm(f, 2.0)

    def test_plancherel(self, grid, rng):
        for _ in range(100):
            f = random_mixture(grid, rng, scale=rng.uniform(0.5, 3.0))
            spectral = np.sqrt(rc.spectral_mass(rc.to_frequency(f)))
            physical = rc.lp_norm(f, 2.0)
            assert abs(physical - spectral) <= 1e-10 * physical

    def test_gaussian_transforms_to_gaussian(self, grid):
        g = rc.to_frequency(rc.gaussian(grid))
        low = grid.xi < 6.0
        ratio = g.values[low].real / np.exp(-grid.xi[low] ** 2 / 4.0)
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-8)
        assert np.max(np.abs(g.values.imag)) < 1e-14

    def test_zero_field(self, grid):
        zero = rc.zeros_like(rc.gaussian(grid))
        assert np.all(rc.to_frequency(zero).values == 0)

    def test_grid_mismatch(self, grid):
        other = rc.make_grid(4, 64, 10.0)
        with pytest.raises(GridMismatchError):
            rc.gaussian(grid) + rc.gaussian(other)
        with pytest.raises(GridMismatchError):
            RadialField(grid, np.ones(10))

    def test_non_finite_samples_rejected(self, grid):
        values = np.ones(grid.size)
        values[3] = np.nan
        with pytest.raises(PreconditionError):
            RadialField(grid, values)


class TestNorms:
    def test_gaussian_mass_in_four_dimensions(self, grid):
        assert rc.norm(rc.gaussian(grid), "mass") == pytest.approx(np.pi**2 / 4.0, rel=1e-8)

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0, 4.0])
    def test_quadrature_exact_on_gaussians(self, grid, a):
        expected = (np.pi / (2.0 * a)) ** (grid.d / 2.0)
        assert rc.norm(rc.gaussian(grid, a), "mass") == pytest.approx(expected, rel=1e-8)

    def test_zero_mass(self, grid):
        assert rc.norm(rc.zeros_like(rc.gaussian(grid)), "mass") == 0.0

    def test_gaussian_kinetic_closed_form(self, grid):
        # ||grad e^{-r^2}||^2 = d * int e^{-2r^2} dx
        expected = np.sqrt(grid.d * (np.pi / 2.0) ** (grid.d / 2.0))
        assert rc.norm(rc.gaussian(grid), "kinetic") == pytest.approx(expected, rel=1e-8)

    def test_named_exponents(self, grid):
        f = rc.gaussian(grid)
        assert rc.norm(f, "strichartz") == pytest.approx(rc.lp_norm(f, 3.0))
        assert rc.norm(f, "sobolev") == pytest.approx(rc.lp_norm(f, 4.0))
        assert rc.norm(f, "inf") == pytest.approx(np.exp(-grid.r[0] ** 2), rel=1e-12)

    def test_sobolev_exponent_needs_three_dimensions(self):
        f = rc.gaussian(rc.make_grid(2, 64, 10.0))
        with pytest.raises(PreconditionError):
            rc.norm(f, "sobolev")

    def test_unresolved_field_rejected_for_derivatives(self, grid, rng):
        noise = RadialField(grid, rng.normal(size=grid.size))
        assert not rc.is_resolved(noise)
        with pytest.raises(ResolutionError):
            rc.norm(noise, "kinetic")
        with pytest.raises(ResolutionError):
            rc.laplacian(noise)


class TestLaplacian:
    def test_gaussian(self, grid):
        r = grid.r
        lap = rc.laplacian(rc.gaussian(grid)).values
        exact = (4.0 * r**2 - 2.0 * grid.d) * np.exp(-(r**2))
        inner = r <= grid.rmax / 2.0
        assert np.max(np.abs(lap[inner] - exact[inner])) <= 1e-8 * np.max(np.abs(exact))
        core = r <= 0.5
        np.testing.assert_allclose(lap[core].real, exact[core], rtol=1e-6)

    def test_pure_mode(self, grid):
        k = 10
        mode = np.zeros(grid.size)
        mode[k] = 1.0
        f = rc.to_physical(SpectralField(grid, mode))
        out = rc.to_frequency(rc.laplacian(f)).values
        expected = np.zeros(grid.size)
        expected[k] = -grid.xi[k] ** 2
        assert np.max(np.abs(out - expected)) <= 1e-10 * grid.xi[k] ** 2

    def test_linear(self, grid, rng):
        f = random_mixture(grid, rng)
        g = random_mixture(grid, rng)
        alpha, beta = 0.7 - 0.2j, -1.3
        lhs = rc.laplacian(alpha * f + beta * g)
        rhs = alpha * rc.laplacian(f) + beta * rc.laplacian(g)
        assert rc.lp_norm(lhs - rhs, 2.0) <= 1e-12 * (rc.lp_norm(f, 2.0) + rc.lp_norm(g, 2.0)) * grid.xi[-1] ** 2

    def test_radial_derivative_and_evaluation(self, grid):
        f = rc.gaussian(grid)
        df = rc.radial_derivative(f).values
        inner = grid.r <= 10.0
        np.testing.assert_allclose(df[inner].real, -2.0 * grid.r[inner] * np.exp(-grid.r[inner] ** 2), atol=1e-10)
        radii = np.array([0.0, 0.3, 1.7])
        np.testing.assert_allclose(rc.evaluate(f, radii).real, np.exp(-(radii**2)), atol=1e-12)
