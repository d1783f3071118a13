import math

import numpy as np
import pytest

from codtsim.constants import PhysicalConstants
from codtsim.errors import DomainError
from codtsim.optics import AstigmaticBeam
from codtsim.potential import static_potential
from codtsim.trapchar import (
    characterize,
    characterize_crossed_trap,
    fd_hessian,
    misalignment_sensitivity,
    misalignment_sweep,
    phase_space_density,
    reachable_volume,
    thermo_metrics,
)

RB = PhysicalConstants(gravity=0.0)


def harmonic_bowl(omega, rim_radius):
    m = RB.atom_mass

    def u(points):
        r2 = np.sum(np.atleast_2d(points) ** 2, axis=1)
        return 0.5 * m * omega**2 * r2

    return u, 0.5 * m * omega**2 * rim_radius**2


def stigmatic_beam(power=1.0, waist=10.5e-6):
    return AstigmaticBeam(
        power=power,
        wavelength=1.064e-6,
        waist_h=waist,
        waist_v=waist,
        focus_h=0.0,
        focus_v=0.0,
        origin=np.zeros(3),
        direction=np.array([1.0, 0.0, 0.0]),
    )


class TestCharacterize:
    def test_harmonic_bowl_identity(self):
        omega = 2 * math.pi * 500.0
        rim = 200e-6
        u, rim_energy = harmonic_bowl(omega, rim)
        report = characterize(
            u,
            np.array([30e-6, -20e-6, 10e-6]),
            constants=RB,
            step=1e-6,
            domain=(np.zeros(3), np.array([rim, rim, rim])),
            saddle_step=2e-6,
        )
        assert report.valid
        np.testing.assert_allclose(report.frequencies, 500.0, rtol=1e-6)
        assert np.linalg.norm(report.minimum_position) < 1e-9
        # depth under the escape convention equals the rim value
        assert report.depth_escape == pytest.approx(rim_energy, rel=0.02)

    def test_single_beam_gaussian_trap_formulas(self):
        # radial omega = sqrt(4 U0/(m w^2)), axial omega = sqrt(2 U0/(m zR^2))
        beam = stigmatic_beam(power=1.0)
        pot = static_potential(RB, [beam])
        u0 = -pot.at(np.zeros(3))
        m = RB.atom_mass
        w = beam.waist_h
        zr = beam.rayleigh_h
        report = characterize(
            pot,
            np.array([2e-6, 1e-6, -1e-6]),
            constants=RB,
            step=w / 50,
            domain=(np.zeros(3), np.array([2e-3, 2e-4, 2e-4])),
            beam_axes=[beam.direction],
        )
        f_radial = math.sqrt(4 * u0 / (m * w**2)) / (2 * math.pi)
        f_axial = math.sqrt(2 * u0 / (m * zr**2)) / (2 * math.pi)
        assert report.frequencies[0] == pytest.approx(f_axial, rel=0.01)
        assert report.frequencies[1] == pytest.approx(f_radial, rel=0.01)
        assert report.frequencies[2] == pytest.approx(f_radial, rel=0.01)

    def test_hessian_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 3))
        sym = a @ a.T + 3 * np.eye(3)

        def u(points):
            p = np.atleast_2d(points)
            return 0.5 * np.einsum("ni,ij,nj->n", p, sym, p) + 0.1 * p[:, 0] * p[:, 1] * p[:, 2]

        h = fd_hessian(u, np.array([0.3, -0.2, 0.5]), 1e-4)
        assert np.max(np.abs(h - h.T)) <= 1e-6 * np.max(np.abs(h))

    def test_step_halving_changes_frequencies_below_half_percent(self, layout, input_pair):
        r1 = characterize_crossed_trap(RB, layout, input_pair, step=10.5e-6 / 50)
        r2 = characterize_crossed_trap(RB, layout, input_pair, step=10.5e-6 / 100)
        np.testing.assert_allclose(r1.frequencies, r2.frequencies, rtol=5e-3)

    def test_power_scaling_of_depth_and_frequencies(self, layout):
        from codtsim.optics import InputBeam

        weak = (InputBeam(power=2.0), InputBeam(power=2.0))
        strong = (InputBeam(power=8.0), InputBeam(power=8.0))
        r_weak = characterize_crossed_trap(RB, layout, weak)
        r_strong = characterize_crossed_trap(RB, layout, strong)
        assert r_strong.depth == pytest.approx(4 * r_weak.depth, rel=5e-3)
        np.testing.assert_allclose(r_strong.frequencies, 2 * r_weak.frequencies, rtol=5e-3)

    def test_depth_conventions_ordering(self, layout, input_pair):
        report = characterize_crossed_trap(RB, layout, input_pair)
        assert report.depth_peak >= report.depth_escape > 0

    def test_gravity_opens_weak_trap(self, layout):
        from codtsim.optics import InputBeam

        constants = PhysicalConstants(gravity=9.81)
        feeble = (InputBeam(power=1e-4), InputBeam(power=1e-4))
        report = characterize_crossed_trap(constants, layout, feeble)
        assert not report.valid

    def test_saddle_point_detected(self):
        def u(points):
            p = np.atleast_2d(points)
            return p[:, 0] ** 2 + p[:, 1] ** 2 - 0.5 * p[:, 2] ** 2

        with pytest.raises(DomainError):
            characterize(
                u,
                np.zeros(3),
                constants=RB,
                step=1e-3,
                domain=(np.zeros(3), np.ones(3)),
                multi_seed=False,
            )


class TestReachableVolume:
    def test_vertical_span_exact(self, layout):
        result = reachable_volume(layout, 1.38e-3, 1.32e-3)
        assert result["vertical_span_mm"] == pytest.approx(2.64, abs=1e-12)

    def test_diamond_area_from_intersection_oracle(self, layout):
        # brute-force oracle: vertices at (+/-2A/(2 sin a), 0), (0, +/-2A/(2 cos a))
        result = reachable_volume(layout, 1.38e-3, 1.32e-3, n_grid=81)
        a = 1.38e-3
        s, c = math.sin(layout.half_angle), math.cos(layout.half_angle)
        expected_mm2 = 2 * (a / s) * (a / c) * 1e6
        assert result["planar_area_mm2"] == pytest.approx(expected_mm2, rel=1e-3)
        assert result["planar_area_mm2"] == pytest.approx(15.2, rel=0.01)
        assert result["prism_volume_mm3"] == pytest.approx(result["planar_area_mm2"] * 2.64, rel=1e-9)
        assert result["hull_volume_mm3"] == pytest.approx(result["prism_volume_mm3"], rel=1e-6)

    def test_zero_range_degenerates(self, layout):
        result = reachable_volume(layout, 0.0, 0.0)
        assert result["planar_area_mm2"] == 0.0
        assert result["prism_volume_mm3"] == 0.0


class TestThermoMetrics:
    def test_psd_reproduces_quoted_value(self):
        # N = 2e6, T = 20 uK and the implied 347 Hz mean frequency
        psd = phase_space_density(2e6, 20e-6, 347.0, RB)
        assert psd == pytest.approx(1.15e-3, rel=0.05)

    def test_truncation_parameter(self, layout, input_pair):
        report = characterize_crossed_trap(RB, layout, input_pair)
        metrics = thermo_metrics(report, 2e6, 20e-6, RB)
        eta = report.depth / (RB.boltzmann * 20e-6)
        assert metrics.truncation_parameter == pytest.approx(eta)
        # 240 uK depth at 20 uK would give eta = 12
        assert 240e-6 * RB.boltzmann / (RB.boltzmann * 20e-6) == pytest.approx(12.0)

    def test_psd_linear_in_atom_number(self, layout, input_pair):
        report = characterize_crossed_trap(RB, layout, input_pair)
        m1 = thermo_metrics(report, 1e6, 20e-6, RB)
        m2 = thermo_metrics(report, 2e6, 20e-6, RB)
        assert m2.psd == pytest.approx(2 * m1.psd, rel=1e-12)

    def test_invalid_report_rejected(self, layout, input_pair):
        report = characterize_crossed_trap(RB, layout, input_pair)
        object.__setattr__ if False else setattr(report, "valid", False)
        with pytest.raises(DomainError):
            thermo_metrics(report, 1e6, 20e-6, RB)


class TestMisalignment:
    def test_zero_offset_ratio_is_one(self, layout, input_pair):
        assert misalignment_sensitivity(RB, layout, input_pair, 0.0) == pytest.approx(1.0, abs=1e-9)

    def test_even_and_non_increasing(self, layout, input_pair):
        offsets = np.array([-8e-6, -4e-6, 0.0, 4e-6, 8e-6])
        rows = misalignment_sweep(RB, layout, input_pair, offsets)
        ratios = np.array([r["depth_ratio"] for r in rows])
        np.testing.assert_allclose(ratios, ratios[::-1], rtol=1e-6)
        upper = ratios[2:]
        assert np.all(np.diff(upper) < 0)
        assert ratios[2] == pytest.approx(1.0, abs=1e-9)
