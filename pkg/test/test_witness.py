import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cohwit import witness
from cohwit.ensemble import Ensemble
from cohwit.errors import InvalidParameter, RangeError, SamplingError, WindowError
from cohwit.model import build_dimer, build_monomer
from cohwit.units import PhysicalUnits
from cohwit.witness import Centering, Coherence, WitnessCurve

SIGMAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)


def curve(gammas, sigmas=SIGMAS, scale=1.0):
    return WitnessCurve(tuple(sigmas), tuple(gammas), 3.6, 25.0, Centering.MANUAL, 1.0, scale)


class TestOscillationStrength:
    """The time-integrated squared deviation from the windowed mean."""

    def test_constant_trace(self):
        t = np.linspace(0, 20, 401)
        assert witness.oscillation_strength(t, np.full_like(t, 3.0), 0.1, 0.1, 20) == pytest.approx(0, abs=1e-20)

    def test_cosine_over_whole_periods(self):
        length = 20 * math.pi
        t = np.linspace(0, length, 20001)
        gamma = witness.oscillation_strength(t, 5 + 2 * np.cos(t), 0.0, 0.0, length)
        assert gamma == pytest.approx(4 * length / 2, rel=1e-6)

    def test_window_starts_at_the_overlap_cutoff(self):
        t = np.linspace(0, 10, 1001)
        signal = np.where(t < 2.5, 100 * np.sin(5 * t), 1.0)
        assert witness.cutoff_time(0.5, 0.5) == pytest.approx(3.0)
        assert witness.oscillation_strength(t, signal, 0.5, 0.5, 10) == pytest.approx(0, abs=1e-20)

    @given(st.floats(min_value=1e-3, max_value=1e3))
    def test_scales_with_the_square_of_the_signal(self, c):
        t = np.linspace(0, 12, 241)
        s = np.cos(2 * t) + 0.3 * np.sin(3.1 * t)
        g = witness.oscillation_strength(t, s, 0.1, 0.1, 12)
        assert witness.oscillation_strength(t, c * s, 0.1, 0.1, 12) == pytest.approx(c * c * g, rel=1e-9)

    def test_window_too_short(self):
        t = np.linspace(0, 1, 11)
        with pytest.raises(WindowError):
            witness.oscillation_strength(t, np.ones_like(t), 0.5, 0.5, 1.0)

    def test_nonuniform_sampling(self):
        t = np.array([0.0, 0.1, 0.3, 0.4, 0.5])
        with pytest.raises(WindowError):
            witness.oscillation_strength(t, np.ones_like(t), 0.0, 0.0, 0.5)


class TestFourierPeak:
    """Oscillation amplitude summed over a frequency window."""

    def test_cosine_on_a_bin(self):
        dt, n = 0.05, 800
        t = dt * np.arange(n)
        omega = 2 * np.pi * 10 / (n * dt)
        trace = 1.0 + 0.4 * np.cos(omega * t)
        assert witness.fourier_peak_amplitude(t, trace, (omega - 0.5, omega + 0.5)) == pytest.approx(0.4, rel=1e-9)
        assert witness.fourier_peak_amplitude(t, trace, (omega + 1, omega + 2)) < 1e-9

    def test_window_beyond_nyquist(self):
        t = 0.1 * np.arange(100)
        with pytest.raises(RangeError):
            witness.fourier_peak_amplitude(t, np.cos(t), (1.0, 40.0))
        with pytest.raises(RangeError):
            witness.fourier_peak_amplitude(t, np.cos(t), (-1.0, 2.0))

    def test_two_lines_in_one_window(self):
        dt, n = 0.05, 800
        t = dt * np.arange(n)
        bin_width = 2 * np.pi / (n * dt)
        trace = 0.4 * np.cos(10 * bin_width * t) + 0.1 * np.cos(12 * bin_width * t)
        both = (9.5 * bin_width, 12.5 * bin_width)
        assert witness.fourier_peak_amplitude(t, trace, both) == pytest.approx(0.5, rel=1e-9)
        one = (11.5 * bin_width, 12.5 * bin_width)
        assert witness.fourier_peak_amplitude(t, trace, one) == pytest.approx(0.1, rel=1e-9)

    def test_window_between_bins(self):
        dt, n = 0.05, 800
        t = dt * np.arange(n)
        bin_width = 2 * np.pi / (n * dt)
        with pytest.raises(RangeError):
            witness.fourier_peak_amplitude(t, np.cos(t), (10.2 * bin_width, 10.8 * bin_width))


class TestWitnessTime:
    """Reading the witness time off a sampled curve."""

    def test_peaked_curve(self):
        result = witness.estimate_witness_time(curve([1, 2, 3, 4, 3, 2]))
        assert result.sigma == pytest.approx(0.4)
        assert not result.unbounded

    def test_refined_peak(self):
        c = curve([1, 2, 3, 4, 3.5, 2])
        assert witness.estimate_witness_time(c).sigma == pytest.approx(0.4)
        refined = witness.estimate_witness_time(c, refine_peak=True)
        assert 0.4 < refined.sigma < 0.5

    def test_increasing_curve_is_unbounded(self):
        result = witness.estimate_witness_time(curve([1, 2, 3, 4, 5, 6]))
        assert result.sigma == pytest.approx(0.6)
        assert result.unbounded

    def test_decreasing_curve_has_no_witness_time(self):
        assert witness.estimate_witness_time(curve([6, 5, 4, 3, 2, 1])) is None

    def test_flat_start_is_tolerated(self):
        result = witness.estimate_witness_time(curve([1, 1, 2, 3, 2, 1]))
        assert result.sigma == pytest.approx(0.4)

    def test_too_few_points(self):
        with pytest.raises(SamplingError):
            witness.estimate_witness_time(curve([1, 2, 3], sigmas=(0.1, 0.2, 0.3)))

    def test_fwhm_and_femtoseconds(self):
        result = witness.WitnessTime(1.0)
        assert result.fwhm == pytest.approx(2 * math.sqrt(2 * math.log(2)))
        assert result.in_fs(PhysicalUnits(100.0)) == pytest.approx(result.fwhm * 53.0884, rel=1e-5)


class TestClassification:
    def test_growing_with_duration_is_vibrational(self):
        assert witness.classify_coherence(curve([1, 2, 3, 4, 3, 2])) == Coherence.VIBRATIONAL

    def test_growing_toward_impulsive_is_electronic(self):
        assert witness.classify_coherence(curve([6, 5, 4, 3, 2, 1])) == Coherence.ELECTRONIC_PRESENT

    def test_no_oscillations(self):
        assert witness.classify_coherence(curve([0] * 6, scale=1.0)) == Coherence.INCONCLUSIVE
        assert witness.classify_coherence(curve([1e-14] * 6, scale=1.0)) == Coherence.INCONCLUSIVE

    @given(st.floats(min_value=1e-4, max_value=1e4))
    def test_scaling_changes_nothing(self, c):
        base = curve([1, 2, 3, 4, 3, 2])
        scaled = base.scaled(c)
        assert witness.classify_coherence(scaled) == witness.classify_coherence(base)
        assert witness.estimate_witness_time(scaled) == witness.estimate_witness_time(base)

    def test_curve_validation(self):
        with pytest.raises(InvalidParameter):
            curve([1, 2, 3, 4, 5, 6], sigmas=(0.1, 0.3, 0.2, 0.4, 0.5, 0.6))
        with pytest.raises(InvalidParameter):
            curve([1, 2, -3, 4, 5, 6])
        with pytest.raises(InvalidParameter):
            curve([1, 2])


class TestRecommendation:
    """Pulse parameters read from the linear spectra."""

    def test_poisson_width(self):
        rec = witness.recommend_parameters(build_monomer(1.0, 0.02))
        assert rec.absorption_variance == pytest.approx(0.02, abs=1e-6)
        assert rec.sigma_max == pytest.approx(1 / (10 * math.sqrt(0.02)), abs=1e-3)
        assert rec.sigma_max == pytest.approx(0.707, abs=1e-3)
        assert rec.fwhm_max == pytest.approx(2 * math.sqrt(2 * math.log(2)) * rec.sigma_max)
        assert rec.center_frequency == pytest.approx(rec.absorption_mean)
        assert rec.advisory is None

    def test_no_vibronic_structure(self):
        rec = witness.recommend_parameters(build_monomer(1.0, 0.0))
        assert math.isinf(rec.sigma_max)
        assert rec.advisory == "no vibronic structure"

    def test_midpoint_lies_between(self):
        model = build_monomer(0.5, 0.02)
        rec = witness.recommend_parameters(model, centering=Centering.MIDPOINT)
        lo, hi = sorted((rec.absorption_mean, rec.raman_mean))
        assert lo <= rec.center_frequency <= hi
        raman = witness.recommend_parameters(model, centering="raman_mean")
        assert raman.center_frequency == pytest.approx(rec.raman_mean)

    def test_manual_needs_frequency(self):
        with pytest.raises(InvalidParameter):
            witness.recommend_parameters(build_monomer(1.0, 0.02), centering=Centering.MANUAL)

    def test_encode(self):
        rec = witness.recommend_parameters(build_monomer(1.0, 0.02), centering="manual", manual_freq=0.3)
        data = rec.encode()
        assert data["center_frequency"] == 0.3
        assert set(data) >= {"sigma_max", "fwhm_max", "raman_mean", "advisory"}


def test_ladder_must_increase():
    with pytest.raises(InvalidParameter):
        witness.witness_curve(build_monomer(1.5, 0.02), (0.3, 0.2, 0.1, 0.4), centering="manual", manual_freq=1.0)


def test_ladder_must_leave_a_window():
    numerics = witness.WitnessNumerics(t_final=5.0)
    with pytest.raises(WindowError):
        witness.witness_curve(
            build_monomer(1.5, 0.02), (0.1, 0.5, 1.0, 1.5), numerics=numerics, centering="manual", manual_freq=1.0
        )


def test_default_ladder():
    ladder = witness.default_ladder()
    assert len(ladder) == 12
    assert ladder[0] == pytest.approx(0.05)
    assert ladder[-1] == pytest.approx(1.5)


@pytest.mark.slow
class TestWitnessCurves:
    """Witness curves of the reference monomer and dimer."""

    LADDER = tuple(np.round(np.linspace(0.1, 1.6, 16), 6))

    def test_monomer_is_vibrational(self):
        model = build_monomer(1.5, 0.02)
        c = witness.witness_curve(model, self.LADDER, jobs=2)
        assert witness.classify_coherence(c) == Coherence.VIBRATIONAL
        result = witness.estimate_witness_time(c, refine_peak=True)
        assert result is not None
        assert 0.5 <= result.sigma <= 2.0
        rec = witness.recommend_parameters(model)
        below = [g for s, g in zip(c.sigmas, c.gammas) if s <= rec.sigma_max]
        assert np.all(np.diff(below) > 0)

    def test_dimer_is_electronic(self):
        c = witness.witness_curve(build_dimer(), witness.default_ladder())
        assert witness.classify_coherence(c) == Coherence.ELECTRONIC_PRESENT
        assert witness.estimate_witness_time(c) is None

    def test_identical_results_for_any_worker_count(self):
        model = build_monomer(1.5, 0.02)
        ladder = self.LADDER[:6]
        a = witness.witness_curve(model, ladder, jobs=1)
        b = witness.witness_curve(model, ladder, jobs=3)
        assert a.gammas == b.gammas

    @pytest.mark.parametrize(
        "omega_e, huang_rhys",
        [(0.5, 0.02), (1.0, 0.02), (1.5, 0.02), (2.0, 0.02), (1.5, 0.005), (1.5, 0.05), (1.5, 0.1)],
    )
    def test_witness_time_exceeds_absorption_bound(self, omega_e, huang_rhys):
        model = build_monomer(omega_e, huang_rhys)
        c = witness.witness_curve(model, self.LADDER)
        assert witness.classify_coherence(c) == Coherence.VIBRATIONAL
        result = witness.estimate_witness_time(c, refine_peak=True)
        assert result is not None
        assert result.sigma >= witness.recommend_parameters(model).sigma_max

    def test_thermal_averaging_lengthens_the_witness_time(self):
        units = PhysicalUnits(100.0)
        model = build_monomer(1.5, 0.02)
        cold = witness.estimate_witness_time(witness.witness_curve(model, self.LADDER), refine_peak=True)
        warm_curve = witness.witness_curve(model, self.LADDER, ensemble=Ensemble(temperature=294.0))
        warm = witness.estimate_witness_time(warm_curve, refine_peak=True)
        assert cold.in_fs(units) == pytest.approx(106, rel=0.2)
        assert warm.in_fs(units) == pytest.approx(118, rel=0.2)
        assert warm.sigma > cold.sigma
