import numpy as np
import pytest

from nlslab import radial_core as rc
from nlslab.diagnostics import (
    VirialCutoff,
    compactness_modulus,
    diagnose,
    exterior_norms,
    frequency_median,
    frequency_scale,
    interior_kinetic,
    local_constancy_probe,
    profile_distance,
    scaling_exponent,
    virial,
    virial_accel_check,
    virial_rate,
)
from nlslab.errors import ConcentrationError, InsufficientSnapshotsError, PreconditionError
from nlslab.exact_solutions import apply_phase, apply_scaling, pseudoconformal, soliton
from nlslab.models import SymmetryParams
from nlslab.propagator import Trajectory
from nlslab.radial_core import RadialField
from nlslab.spectral_ops import random_mixture


def free_gaussian(grid, t):
    z = 1.0 + 4.0j * t
    return RadialField(grid, z ** (-grid.d / 2.0) * np.exp(-(grid.r**2) / z))


@pytest.fixture(scope="module")
def soliton_traj(Q):
    times = [0.0, 0.25, 0.5, 0.75, 1.0]
    return Trajectory.from_snapshots(times, [soliton(Q, t) for t in times])


@pytest.fixture(scope="module")
def free_traj(grid):
    times = np.round(np.arange(11) * 0.05, 12)
    return Trajectory.from_snapshots(times, [free_gaussian(grid, t) for t in times], nonlinearity=0.0)


class TestVirial:
    def test_cutoff_shape(self):
        cutoff = VirialCutoff(3.0)
        r = np.linspace(0.0, 10.0, 1001)
        psi = cutoff.psi(r)
        assert np.all(psi[r <= 3.0] == 1.0)
        assert np.all(psi[r >= 6.0] == 0.0)
        assert np.all((psi >= 0.0) & (psi <= 1.0))

    def test_weight_derivative(self):
        cutoff = VirialCutoff(2.0)
        r = np.linspace(0.5, 5.0, 19)
        h = 1e-6
        numeric = (cutoff.weight(r + h) - cutoff.weight(r - h)) / (2 * h)
        np.testing.assert_allclose(cutoff.weight_derivative(r), numeric, rtol=1e-5, atol=1e-8)

    def test_soliton_virial_is_constant(self, soliton_traj):
        values = [virial(u, 5.0) for u in soliton_traj.snapshots]
        np.testing.assert_allclose(values, values[0], rtol=1e-10)

    def test_real_field_has_no_rate(self, Q):
        assert virial_rate(Q.profile, 5.0) == pytest.approx(0.0, abs=1e-12)
        assert virial_rate(apply_phase(Q.profile, 0.9), 5.0) == pytest.approx(0.0, abs=1e-10)

    def test_bounded_by_mass(self, grid, rng):
        R = 2.0
        for _ in range(100):
            f = random_mixture(grid, rng, scale=rng.uniform(0.3, 3.0))
            assert abs(virial(f, R)) <= 4.0 * R**2 * rc.norm(f, "mass")

    def test_rejects_nonpositive_radius(self, Q):
        with pytest.raises(PreconditionError):
            virial(Q.profile, 0.0)
        with pytest.raises(PreconditionError):
            virial_rate(Q.profile, -1.0)

    def test_free_flow_acceleration(self, free_traj):
        report = virial_accel_check(free_traj, 10.0)
        assert report.deviation_rel <= 0.02
        assert len(report.second_difference) == len(free_traj.times) - 2
        assert report.exterior_mass_fraction <= 0.01

    def test_soliton_acceleration(self, soliton_traj):
        report = virial_accel_check(soliton_traj, 10.0)
        assert report.deviation_rel <= 1e-4
        assert set(report.error_terms) == {"mass", "kinetic", "potential"}

    def test_needs_five_snapshots(self, Q):
        times = [0.0, 0.5, 1.0]
        traj = Trajectory.from_snapshots(times, [soliton(Q, t) for t in times])
        with pytest.raises(InsufficientSnapshotsError):
            virial_accel_check(traj, 10.0)

    def test_unequal_spacing(self, Q):
        times = [0.0, 0.1, 0.3, 0.4, 0.5]
        traj = Trajectory.from_snapshots(times, [soliton(Q, t) for t in times])
        with pytest.raises(InsufficientSnapshotsError):
            virial_accel_check(traj, 10.0)

    def test_needs_concentration(self, soliton_traj):
        with pytest.raises(ConcentrationError):
            virial_accel_check(soliton_traj, 0.5)


class TestExteriorNorms:
    def test_whole_space(self, Q):
        ext = exterior_norms(Q.profile, 0.0)
        assert ext.mass_out == pytest.approx(Q.mass, rel=1e-12)
        assert ext.kinetic_out == pytest.approx(Q.kinetic, rel=1e-6)

    def test_split_adds_up(self, Q):
        for R in (0.5, 2.0, 8.0):
            ext = exterior_norms(Q.profile, R)
            assert ext.mass_out + ext.mass_in == pytest.approx(Q.mass, rel=1e-12)
            assert ext.l2_out == pytest.approx(np.sqrt(ext.mass_out))

    def test_ground_state_tail(self, Q):
        radii = [1.0, 2.0, 4.0, 8.0, 12.0]
        kinetic_out = [exterior_norms(Q.profile, R).kinetic_out for R in radii]
        assert all(later < earlier for earlier, later in zip(kinetic_out[:-1], kinetic_out[1:]))
        assert kinetic_out[-1] <= 1e-3 * Q.kinetic

    def test_interior_kinetic(self, Q):
        assert interior_kinetic(Q.profile, Q.grid.rmax) == pytest.approx(Q.kinetic, rel=1e-6)
        assert interior_kinetic(Q.profile, 1.0) < Q.kinetic


class TestFrequencyScale:
    def test_dilation_doubles_scale(self, grid):
        g = rc.gaussian(grid)
        ratio = frequency_scale(apply_scaling(g, 2.0)) / frequency_scale(g)
        assert 2.0 * 2.0 ** (-1.0 / 8.0) - 1e-12 <= ratio <= 2.0 * 2.0 ** (1.0 / 8.0) + 1e-12
        assert frequency_median(apply_scaling(g, 2.0)) == pytest.approx(2.0 * frequency_median(g), rel=0.05)

    def test_scale_is_on_the_ladder(self, Q):
        N = frequency_scale(Q.profile)
        k = 8 * np.log2(N)
        assert k == pytest.approx(round(k), abs=1e-9)
        assert N >= frequency_median(Q.profile)

    def test_zero_field(self, grid):
        with pytest.raises(PreconditionError):
            frequency_scale(rc.zeros_like(rc.gaussian(grid)))

    def test_soliton_scale_is_constant(self, soliton_traj):
        scales = {frequency_scale(u) for u in soliton_traj.snapshots}
        assert len(scales) == 1

    def test_pseudoconformal_rate(self, Q):
        taus = np.array([0.15, 0.2, 0.25, 0.3])
        medians = [frequency_median(pseudoconformal(Q, -tau, 0.0)) for tau in taus]
        assert 0.9 <= scaling_exponent(-taus, medians, 0.0) <= 1.1


class TestCompactness:
    def test_full_level_is_trivial(self, soliton_traj):
        assert compactness_modulus(soliton_traj, 1.0) == 0.0

    def test_invalid_level(self, soliton_traj):
        with pytest.raises(PreconditionError):
            compactness_modulus(soliton_traj, 0.0)

    def test_soliton_is_time_independent(self, Q, soliton_traj):
        single = Trajectory.from_snapshots([0.0], [Q.profile])
        assert compactness_modulus(soliton_traj, 0.01) == pytest.approx(compactness_modulus(single, 0.01), rel=1e-8)

    def test_pseudoconformal_stays_compact(self, Q):
        moduli = []
        for tau in (0.2, 0.3, 0.4):
            traj = Trajectory.from_snapshots([0.0], [pseudoconformal(Q, -tau, 0.0)])
            moduli.append(compactness_modulus(traj, 0.01))
        assert max(moduli) <= 2.0 * min(moduli)


class TestLocalConstancy:
    def test_needs_three_snapshots(self, Q):
        traj = Trajectory.from_snapshots([0.0], [Q.profile])
        with pytest.raises(InsufficientSnapshotsError):
            local_constancy_probe(traj)

    def test_soliton(self, soliton_traj):
        probe = local_constancy_probe(soliton_traj)
        assert probe.value >= 1.0
        assert not probe.flagged

    def test_free_flow(self, free_traj):
        assert local_constancy_probe(free_traj).value >= 0.1


class TestProfileDistance:
    def test_orbit_member(self, Q):
        u = soliton(Q, 0.0, SymmetryParams(lambda0=1.5, theta0=0.7))
        result = profile_distance(u, Q)
        assert result.delta <= 1e-6
        assert result.lam == pytest.approx(1.0 / 1.5, rel=1e-6)
        assert result.theta == pytest.approx(2 * np.pi - 0.7, abs=1e-6)

    def test_small_perturbation(self, grid, Q):
        u = Q.profile + 0.01 * rc.gaussian(grid)
        assert 0.0 < profile_distance(u, Q).delta < 0.1

    def test_gaussian_with_ground_state_mass(self, grid, Q):
        g = rc.gaussian(grid)
        g = np.sqrt(Q.mass / rc.norm(g, "mass")) * g
        assert profile_distance(g, Q).delta >= 0.1

    def test_phase_invariant(self, grid, Q):
        u = Q.profile + 0.01 * rc.gaussian(grid)
        assert profile_distance(apply_phase(u, 0.4), Q).delta == pytest.approx(profile_distance(u, Q).delta, rel=1e-8)

    def test_zero_field(self, grid, Q):
        with pytest.raises(PreconditionError):
            profile_distance(rc.zeros_like(rc.gaussian(grid)), Q)


def test_scaling_exponent():
    t = np.array([0.5, 0.7, 0.8, 0.9])
    assert scaling_exponent(t, 3.0 * (1.0 - t) ** -1.5, 1.0) == pytest.approx(1.5)


def test_diagnose_series(Q, soliton_traj):
    report = diagnose(soliton_traj, Q)
    n = len(soliton_traj.times)
    assert report.R == Q.grid.rmax / 4.0
    for series in (report.virial, report.virial_rate, report.virial_accel, report.mass_out, report.frequency_scale):
        assert len(series) == n
    assert report.virial_accel[0] is None and report.virial_accel[-1] is None
    assert max(report.profile_distance) <= 1e-6
    assert set(report.compactness) == {"0.1", "0.01", "0.001"}
    assert report.local_constancy is not None


def test_diagnose_without_ground_state(free_traj):
    report = diagnose(free_traj, R=5.0)
    assert report.profile_distance == [None] * len(free_traj.times)
