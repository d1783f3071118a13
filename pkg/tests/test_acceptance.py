"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines alongside the pytest verdicts.
"""

import json
import math
from contextlib import contextmanager

import numpy as np
import pytest

from codtsim.cli import main as cli_main
from codtsim.constants import PhysicalConstants
from codtsim.evap import (
    bimodal_profile,
    build_schedule,
    castin_dum_lambdas,
    evaporation_efficiency,
    fit_bimodal,
    isotropic_scaling_2d,
    thermal_sigma0,
    timeline,
)
from codtsim.evap import ExpansionState, expand
from codtsim.optics import (
    CHANNELS,
    InputBeam,
    OpticalLayout,
    deflection_to_displacement,
    focus_input_beam,
)
from codtsim.painting import GridSpec, characterize_sites, compensate_powers, synthesize_waveform
from codtsim.pointing import detect_spots, synth_frame
from codtsim.potential import time_averaged_potential
from codtsim.trapchar import (
    ThermoMetrics,
    characterize,
    characterize_crossed_trap,
    misalignment_sweep,
    phase_space_density,
    reachable_volume,
)

RB = PhysicalConstants(gravity=0.0)
LAYOUT = OpticalLayout()
INPUTS = (InputBeam(), InputBeam())


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {number:2d} {name}: FAIL")
        raise
    print(f"ACCEPTANCE {number:2d} {name}: PASS")


@pytest.fixture(scope="module")
def grid_480():
    spec = GridSpec(counts=(1, 3, 3), spacing=(0.0, 480e-6, 480e-6))
    return spec, characterize_sites(RB, LAYOUT, INPUTS, spec)


def test_criterion_01_focal_optics():
    with criterion(1, "focal optics"):
        beam = focus_input_beam(LAYOUT, INPUTS[0])
        assert beam.waist_h == pytest.approx(10.5e-6, rel=0.03)
        assert beam.waist_v == pytest.approx(10.5e-6, rel=0.03)
        assert beam.rayleigh_v == pytest.approx(320e-6, rel=0.03)


def test_criterion_02_deflection_mapping():
    with criterion(2, "deflection mapping"):
        for ch in CHANNELS:
            geo = deflection_to_displacement(LAYOUT, ch, 1.0, mode="geometric") * 1e6
            assert 80.0 <= geo <= 100.0
        # calibrated channels return the measured constants exactly
        assert deflection_to_displacement(LAYOUT, "v1", 1.0) == pytest.approx(86e-6)
        assert deflection_to_displacement(LAYOUT, "v2", 1.0) == pytest.approx(86e-6)
        assert deflection_to_displacement(LAYOUT, "h1", 1.0) == pytest.approx(92e-6)
        assert deflection_to_displacement(LAYOUT, "h2", 1.0) == pytest.approx(92e-6)
        # per-channel geometric means inside the simulated bands (corrections on)
        v_mean = np.mean(
            [deflection_to_displacement(LAYOUT, ch, 1.0, mode="geometric") for ch in ("v1", "v2")]
        )
        h_mean = np.mean(
            [deflection_to_displacement(LAYOUT, ch, 1.0, mode="geometric") for ch in ("h1", "h2")]
        )
        assert 83e-6 <= v_mean <= 93e-6  # 88 +/- 5 um/MHz
        assert 88e-6 <= h_mean <= 96e-6  # 92 +/- 4 um/MHz


def test_criterion_03_static_trap_depth():
    with criterion(3, "static trap depth"):
        report = characterize_crossed_trap(RB, LAYOUT, INPUTS)
        assert report.valid
        target_uk = 11.9e3
        matches = {
            conv: abs(report.depth_uk(conv) / target_uk - 1) <= 0.30
            for conv in ("escape-saddle", "peak-to-min")
        }
        assert any(matches.values())
        matching = [conv for conv, ok in matches.items() if ok]
        print(
            f"    depth: escape-saddle {report.depth_uk('escape-saddle') / 1e3:.2f} mK, "
            f"peak-to-min {report.depth_uk('peak-to-min') / 1e3:.2f} mK; "
            f"conventions within +/-30% of 11.9 mK: {matching}"
        )


def test_criterion_04_painted_trap_depth():
    with criterion(4, "painted trap depth"):
        # the quoted +/-740 um modulation is read as the full painted span,
        # so the triangle sweep amplitude is 370 um
        wf = synthesize_waveform(LAYOUT, "line-paint", {"amplitude_um": 370.0})
        pot = time_averaged_potential(RB, LAYOUT, INPUTS, wf, n_phases=256)
        report = characterize(
            pot,
            np.zeros(3),
            constants=RB,
            step=0.2e-6,
            domain=(np.zeros(3), np.array([4e-3, 1.5e-3, 1e-3])),
            beam_axes=[LAYOUT.beam_direction(1), LAYOUT.beam_direction(2)],
        )
        assert report.valid
        depth = report.depth_uk("peak-to-min")
        print(f"    painted depth {depth:.1f} uK (target 240 +/- 25%)")
        assert depth == pytest.approx(240.0, rel=0.25)


def test_criterion_05_grid_homogeneity(grid_480):
    with criterion(5, "grid homogeneity"):
        spec, table = grid_480
        dev = table.deviations()
        r1 = max(abs(v) for v in dev["radius_beam1"])
        r2 = max(abs(v) for v in dev["radius_beam2"])
        assert 0.05 <= r1 <= 0.15 and 0.05 <= r2 <= 0.15
        center = table.central_row()
        for row in table.rows:  # opposite signs wherever the deviation is resolved
            d1 = row.radius_beam1 / center.radius_beam1 - 1
            d2 = row.radius_beam2 / center.radius_beam2 - 1
            if abs(d1) > 1e-6:
                assert d1 * d2 < 0
        assert max(abs(v) for v in dev["mean_frequency"]) < 0.03
        assert table.depth_spread() < 0.03
        assert table.frequency_spread() < 0.05
        after = compensate_powers(RB, LAYOUT, INPUTS, spec, table=table)
        assert after.converged
        assert after.frequency_spread() < 0.02
        # full-range grid: per-beam offsets at the +/-1.38 mm AOD limit
        spec_full = GridSpec(
            counts=(1, 3, 3),
            spacing=(0.0, 1.38e-3 / math.cos(LAYOUT.half_angle), 1.29e-3),
        )
        full = characterize_sites(RB, LAYOUT, INPUTS, spec_full)
        dev_f = full.deviations()
        size_f = max(
            max(abs(v) for v in dev_f["radius_beam1"]),
            max(abs(v) for v in dev_f["radius_beam2"]),
        )
        assert size_f < 0.30
        depth_var = full.depth_spread()
        mf_var = max(abs(v) for v in dev_f["mean_frequency"])
        variation = max(depth_var, mf_var)
        print(
            f"    480 um grid: sizes +/-{100 * r1:.1f}%, freq spread {100 * table.frequency_spread():.2f}% "
            f"-> {100 * after.frequency_spread():.2f}% after compensation; "
            f"full range: sizes {100 * size_f:.1f}%, depth var {100 * depth_var:.1f}%, "
            f"mean-freq var {100 * mf_var:.1f}%"
        )
        assert 0.15 <= variation <= 0.35


def test_criterion_06_timeline_shape():
    with criterion(6, "evaporation timeline shape"):
        schedule = build_schedule()
        rows = timeline(RB, LAYOUT, INPUTS, schedule, n_samples=14, n_phases=64)
        evap_rows = [r for r in rows if r["valid"] and r["t_s"] <= 1.0]
        assert len(evap_rows) >= 6
        depths = [r["depth_uK"] for r in evap_rows]
        assert all(b < a for a, b in zip(depths, depths[1:]))  # monotone decrease
        t_reopen = schedule.ramp_duration + schedule.hold
        pre = [r for r in rows if r["valid"] and r["t_s"] <= t_reopen][-1]
        post = [r for r in rows if r["valid"] and r["t_s"] > t_reopen][-1]
        assert post["depth_uK"] > pre["depth_uK"]
        assert post["mean_frequency_hz"] < pre["mean_frequency_hz"]


def test_criterion_07_thermodynamic_endpoints():
    with criterion(7, "thermodynamic endpoints"):
        # psd formula at the implied mean frequency reproduces the quoted value
        implied_fbar = 347.0
        psd = phase_space_density(2e6, 20e-6, implied_fbar, RB)
        assert psd == pytest.approx(1.15e-3, rel=0.05)
        # cross-check disclosure: mean frequency of the characterized initial
        # painted trap (flat-bottomed line paint, so the harmonic figure is
        # indicative, not gated at the 5% level)
        wf = synthesize_waveform(LAYOUT, "line-paint", {"amplitude_um": 230.0})
        pot = time_averaged_potential(RB, LAYOUT, INPUTS, wf, n_phases=128)
        report = characterize(
            pot,
            np.zeros(3),
            constants=RB,
            step=0.2e-6,
            domain=(np.zeros(3), np.array([4e-3, 1e-3, 1e-3])),
            beam_axes=[LAYOUT.beam_direction(1), LAYOUT.beam_direction(2)],
        )
        eta = report.depth / (RB.boltzmann * 20e-6)
        freqs = ", ".join(f"{f:.0f}" for f in report.frequencies)
        print(
            f"    psd(2e6, 20 uK, {implied_fbar} Hz) = {psd:.3e}; characterized initial "
            f"painted trap: frequencies ({freqs}) Hz (flat-bottomed along the painted line), "
            f"depth {report.depth_uk():.0f} uK, eta = {eta:.1f}"
        )
        assert report.valid and report.depth > 0
        # gamma: definition cases; the published 2.7 is documented as not
        # reproduced by the naive endpoint formula (it gives 1.46)
        m = lambda n, p: ThermoMetrics(n, 1e-6, p, 1.0)  # noqa: E731
        assert evaporation_efficiency(m(1e6, 1e-3), m(1e5, 1e-2))["gamma"] == pytest.approx(1.0)
        out = evaporation_efficiency(m(2e6, 1.15e-3), m(1e4, 2.612))
        assert out["gamma"] == pytest.approx(1.46, abs=0.01)
        assert out["convention"] == "naive-endpoint"


def test_criterion_08_expansion_inversion():
    with criterion(8, "expansion inversion"):
        # integrator vs the isotropic analytic solution sqrt(1 + w^2 t^2)
        omega = 2 * math.pi * 180.0
        ts = np.linspace(1e-4, 0.03, 50)
        lam = isotropic_scaling_2d(omega, ts)
        np.testing.assert_allclose(lam, np.sqrt(1 + (omega * ts) ** 2), rtol=1e-6)
        # isotropic release keeps the aspect ratio at unity
        lam3 = castin_dum_lambdas(2 * math.pi * np.array([150.0, 150.0, 150.0]), ts)
        np.testing.assert_allclose(lam3[:, 2] / lam3[:, 0], 1.0, atol=1e-6)
        # elongated release inverts while the thermal cloud tends to isotropy
        freqs = (120.0, 35.0, 350.0)
        state = ExpansionState(
            frequencies_hz=freqs,
            tf_radii=(4e-6, 14e-6, 1.4e-6),
            temperature=50e-9,
            thermal_sigma0=tuple(thermal_sigma0(freqs, 50e-9, RB)),
        )
        res = expand(state, np.linspace(0, 0.03, 61), RB)
        tf = res["tf_aspect_zy"]
        assert tf[0] < 1.0 < tf[-1]
        crossing = np.flatnonzero(np.diff(np.sign(tf - 1.0)))
        assert crossing.size == 1
        gaps = np.abs(res["thermal_aspect_zy"] - 1.0)
        assert np.all(np.diff(gaps) <= 1e-12)


def test_criterion_09_bimodal_fitting():
    with criterion(9, "bimodal fitting"):
        rng = np.random.default_rng(5)
        x = np.linspace(-300, 300, 201) * 1e-6
        truth = dict(a_th=600.0, sigma=80e-6, a_tf=1200.0, radius=45e-6, center=5e-6, offset=150.0)
        clean = bimodal_profile(x, *truth.values())
        noise = 0.02 * clean.max()
        y = np.clip(clean + rng.normal(0, noise, x.size), 0, None)
        fit = fit_bimodal(x, y, np.full(x.size, noise))
        assert fit.thermal_sigma == pytest.approx(truth["sigma"], rel=0.05)
        assert fit.tf_radius == pytest.approx(truth["radius"], rel=0.05)
        assert fit.thermal_amplitude == pytest.approx(truth["a_th"], rel=0.05)
        assert fit.tf_amplitude == pytest.approx(truth["a_tf"], rel=0.05)
        assert 0.7 <= fit.chi2_red <= 1.4
        assert fit.thermal_only["chi2_red"] > fit.chi2_red


def test_criterion_10_pointing_pipeline(tmp_path):
    with criterion(10, "pointing pipeline"):
        out = tmp_path / "flight"
        assert cli_main(["flight", "synth", "--out", str(out)]) == 0
        assert cli_main(["flight", "analyze", "--out", str(out), "--frames", str(out)]) == 0
        report = json.loads((out / "flight_report.json").read_text())
        launch_max = report["phases"]["launch"]["displacement_um"]["spot1_x"]["max_abs"]
        micro_mean = report["phases"]["microgravity"]["displacement_um"]["spot1_x"]["mean"]
        dc_std = report["phases"]["microgravity"]["dc_interspot_um"]["std"]
        print(
            f"    recovered: launch excursion {launch_max:.1f} um (75), microgravity offset "
            f"{micro_mean:.1f} um (12), inter-spot std {dc_std:.2f} um (1.2)"
        )
        assert launch_max == pytest.approx(75.0, rel=0.10)
        assert micro_mean == pytest.approx(12.0, rel=0.10)
        assert dc_std == pytest.approx(1.2, rel=0.10)
        # detection equivariance under an integer pixel shift
        frame = synth_frame(
            [{"x_um": 200.0, "y_um": 240.0, "sigma_um": 12.0, "amplitude": 3000.0},
             {"x_um": 260.0, "y_um": 240.0, "sigma_um": 12.0, "amplitude": 3000.0}],
            shape=(96, 96),
            pixel_pitch=5e-6,
            noise=6.0,
            seed=4,
        )
        from codtsim.pointing import Frame

        shifted = Frame(values=np.roll(frame.values, (2, 5), axis=(0, 1)), pixel_pitch=5e-6)
        d0, _ = detect_spots(frame)
        d1, _ = detect_spots(shifted)
        for a, b in zip(d0, d1):
            assert b.centroid_um[0] - a.centroid_um[0] == pytest.approx(25.0, abs=1e-9)
            assert b.centroid_um[1] - a.centroid_um[1] == pytest.approx(10.0, abs=1e-9)
        # determinism: re-synthesis produces byte-identical artifacts
        out2 = tmp_path / "flight2"
        assert cli_main(["flight", "synth", "--out", str(out2)]) == 0
        a = (out / "frames" / "frame_00000.pgm").read_bytes()
        b = (out2 / "frames" / "frame_00000.pgm").read_bytes()
        assert a == b


def test_criterion_11_misalignment_sweep(tmp_path):
    with criterion(11, "misalignment sweep"):
        offsets = np.linspace(-10e-6, 10e-6, 11)
        rows = misalignment_sweep(RB, LAYOUT, INPUTS, offsets)
        ratios = np.array([r["depth_ratio"] for r in rows])
        mid = 5
        assert ratios[mid] == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(ratios, ratios[::-1], rtol=1e-4)  # even in offset
        assert np.all(np.diff(ratios[mid:]) < 0)  # non-increasing on [0, w]
        table = tmp_path / "misalign_sweep.csv"
        table.write_text(
            "offset_um,depth_ratio\n"
            + "\n".join(f"{r['offset_um']:.3f},{r['depth_ratio']:.6f}" for r in rows)
        )
        assert table.exists()
        ratio_8um = ratios[mid + 4]
        print(
            f"    depth ratio at +/-8 um: {ratio_8um:.3f} (qualitative reference: atom number "
            "stable to within 30% there; atom-number response is out of scope)"
        )


def test_criterion_12_reachable_volume():
    with criterion(12, "reachable volume"):
        result = reachable_volume(LAYOUT, 1.38e-3, 1.32e-3, n_grid=81)
        assert result["vertical_span_mm"] == pytest.approx(2.64, abs=1e-12)
        # intersection-oracle values, reported alongside the published
        # 27.2 mm^2 / 71.8 mm^3 whose area convention is not reproduced
        assert result["planar_area_mm2"] == pytest.approx(15.24, abs=0.1)
        assert result["prism_volume_mm3"] == pytest.approx(
            result["planar_area_mm2"] * 2.64, rel=1e-9
        )
        assert result["hull_volume_mm3"] == pytest.approx(result["prism_volume_mm3"], rel=1e-6)
        print(
            f"    oracle: area {result['planar_area_mm2']:.2f} mm^2, volume "
            f"{result['prism_volume_mm3']:.1f} mm^3 (published figures 27.2 mm^2 / 71.8 mm^3 "
            "use an unstated area convention; span 2.64 mm matches exactly)"
        )
