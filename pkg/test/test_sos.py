import math

import numpy as np
import pytest

from cohwit import sos
from cohwit.errors import EmptySpectrum, InvalidParameter, TruncationError
from cohwit.model import GridSpec, build_dimer, build_monomer
from cohwit.pulse import GaussianPulse


@pytest.fixture(scope="module")
def monomer_basis():
    return sos.build_sos_basis(build_monomer(1.5, 0.02))


@pytest.fixture(scope="module")
def dimer_basis():
    return sos.build_sos_basis(build_dimer())


def test_basis_numerics_roundtrip():
    numerics = sos.BasisNumerics(GridSpec(96, 0.3), 15, 1e-5)
    assert sos.BasisNumerics.decode(numerics.encode()) == numerics


def test_absorption_sum_rule(monomer_basis):
    spectrum = sos.absorption_spectrum(monomer_basis)
    assert spectrum.total() == pytest.approx(1.0, abs=1e-10)


def test_poisson_moments():
    s = 0.02
    basis = sos.build_sos_basis(build_monomer(1.0, s))
    mean, variance = sos.absorption_spectrum(basis).moments()
    # vertical energy above the excited minimum, and the width
    assert mean == pytest.approx(s, abs=1e-7)
    assert variance == pytest.approx(s, abs=1e-7)
    assert math.sqrt(variance) == pytest.approx(0.1414, abs=1e-4)


def test_undisplaced_spectrum_is_one_line():
    basis = sos.build_sos_basis(build_monomer(1.0, 0.0))
    spectrum = sos.absorption_spectrum(basis)
    assert len(spectrum) == 1
    assert spectrum.moments()[1] == pytest.approx(0.0, abs=1e-20)


def test_empty_spectrum_moments():
    empty = sos.StickSpectrum(np.zeros(0), np.zeros(0))
    with pytest.raises(EmptySpectrum):
        empty.moments()
    with pytest.raises(EmptySpectrum):
        sos.spectral_moments(empty)


def test_shift_moves_the_mean(monomer_basis):
    spectrum = sos.absorption_spectrum(monomer_basis)
    mean, variance = spectrum.moments()
    shifted = spectrum.shifted(0.25)
    assert shifted.moments() == pytest.approx((mean + 0.25, variance))


def test_broadened_curve_keeps_the_area(monomer_basis):
    spectrum = sos.absorption_spectrum(monomer_basis)
    f = np.linspace(spectrum.frequencies.min() - 1, spectrum.frequencies.max() + 1, 4001)
    curve = spectrum.broadened(f, 0.05)
    assert np.trapezoid(curve, f) == pytest.approx(spectrum.total(), rel=1e-6)


def test_raman_is_red_shifted_for_soft_excited_state():
    basis = sos.build_sos_basis(build_monomer(0.5, 0.02))
    absorption_mean, _ = sos.absorption_spectrum(basis).moments()
    raman = sos.resonance_raman_spectrum(basis, gamma=0.01)
    assert sos.raman_mean(raman) < absorption_mean
    assert np.all(raman.weights > 0)
    assert np.all(raman.profile >= 0)


def test_raman_needs_linewidth(monomer_basis):
    with pytest.raises(InvalidParameter):
        sos.resonance_raman_spectrum(monomer_basis, gamma=0.0)


def test_truncation_error_for_strong_coupling():
    with pytest.raises(TruncationError):
        sos.build_sos_basis(build_monomer(1.0, 25.0), truncation=2)


def test_components_sum_to_total(dimer_basis):
    p = GaussianPulse(1.0, 0.3)
    times = np.linspace(1.8, 6.0, 15)
    trace = sos.pump_probe_sos(dimer_basis, p, p, times)
    assert np.allclose(trace.total, trace.se + trace.esa + trace.gsb)
    assert np.all(trace.esa <= 0)
    assert np.all(trace.se >= 0)


def test_trace_scaled_and_combined(monomer_basis):
    p = GaussianPulse(1.5, 0.3)
    times = np.linspace(1.8, 4.0, 5)
    trace = sos.pump_probe_sos(monomer_basis, p, p, times)
    doubled = sos.PumpProbeTrace.combine([trace, trace], [0.5, 1.5])
    assert np.allclose(doubled.total, trace.scaled(2.0).total)
    assert doubled.esa is None


def test_probe_delay_does_not_matter(monomer_basis):
    p = GaussianPulse(1.5, 0.3)
    times = np.linspace(1.8, 4.0, 5)
    a = sos.pump_probe_sos(monomer_basis, p, p, times)
    b = sos.pump_probe_sos(monomer_basis, p, p.delayed(7.0), times)
    assert np.allclose(a.total, b.total)


class TestExpansion:
    """Ordering of the pump-probe signal by powers of the pulse durations."""

    @pytest.fixture(scope="class")
    def terms(self):
        basis = sos.build_sos_basis(build_monomer(1.5, 0.02))
        mean, _ = sos.absorption_spectrum(basis).moments()
        p = GaussianPulse(mean, 0.2)
        times = np.linspace(0.0, 10.0, 101)
        return sos.expansion_terms(basis, p, p, times)

    def test_first_order_stimulated_terms_vanish(self, terms):
        assert np.max(np.abs(terms.se1)) < 1e-12 * terms.scale
        assert np.max(np.abs(terms.esa1)) < 1e-12 * terms.scale

    def test_stimulated_signal_has_no_linear_part(self, dimer_basis):
        times = np.linspace(0.0, 5.0, 11)
        p = GaussianPulse(1.0, 0.2)
        terms = sos.expansion_terms(dimer_basis, p, p, times, order=1)

        def quotients(h):
            short = GaussianPulse(1.0, 0.2 * h)
            trace = sos.pump_probe_sos(dimer_basis, short, short, times)
            return (trace.se - terms.se0) / h, (trace.esa - terms.esa0) / h

        # one-sided quotients halve with the step when the leading term is quadratic
        for coarse, fine in zip(quotients(0.1), quotients(0.05)):
            assert np.linalg.norm(fine) > 0
            assert np.linalg.norm(coarse) / np.linalg.norm(fine) == pytest.approx(2.0, rel=0.02)

    def test_bleach_terms_do_not_oscillate(self, terms):
        for part in (terms.gsb1, terms.gsb2):
            assert np.var(part) < 1e-12 * max(np.mean(part) ** 2, terms.scale**2)

    def test_pump_part_does_not_oscillate_for_monomer(self, terms):
        assert np.ptp(terms.se2_pump) < 1e-10 * terms.scale

    def test_probe_part_at_zero_delay_is_the_absorption_width(self, terms):
        assert terms.se2_vo_t0 == pytest.approx(terms.se2_vo_t0_moment, rel=1e-8)
        assert terms.se2_vo_t0 == pytest.approx(-terms.se2_vo[0], rel=1e-8)

    def test_first_order_only(self):
        basis = sos.build_sos_basis(build_monomer(1.5, 0.02))
        p = GaussianPulse(1.5, 0.2)
        terms = sos.expansion_terms(basis, p, p, [0.0, 1.0], order=1)
        assert np.all(terms.gsb2 == 0)
        with pytest.raises(InvalidParameter):
            sos.expansion_terms(basis, p, p, [0.0], order=3)


def test_probe_width_is_smallest_at_the_absorption_mean(monomer_basis):
    mean, variance = sos.absorption_spectrum(monomer_basis).moments()
    offsets = np.linspace(-0.3, 0.3, 13)
    values = []
    for d in offsets:
        p = GaussianPulse(mean + d, 0.2)
        values.append(sos.expansion_terms(monomer_basis, p, p, [0.0]).se2_vo_t0)
    assert abs(offsets[int(np.argmin(values))]) < 1e-12
    expected = 0.2**2 * variance
    assert min(values) == pytest.approx(expected, rel=1e-8)
