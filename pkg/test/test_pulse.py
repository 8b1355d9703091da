import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, strategies as st

from cohwit import pulse
from cohwit.errors import InvalidParameter

sigmas = st.floats(min_value=1e-3, max_value=1e3)


@given(sigmas)
def test_fwhm_roundtrip(sigma):
    assert pulse.sigma_of_fwhm(pulse.fwhm_of_sigma(sigma)) == pytest.approx(sigma, rel=1e-12)


def test_fwhm_factor():
    assert pulse.fwhm_of_sigma(1.0) == pytest.approx(2.354820045, rel=1e-9)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_nonpositive_widths(bad):
    with pytest.raises(InvalidParameter):
        pulse.fwhm_of_sigma(bad)
    with pytest.raises(InvalidParameter):
        pulse.sigma_of_fwhm(bad)
    with pytest.raises(InvalidParameter):
        pulse.GaussianPulse(1.0, bad)


def test_polarization_is_normalized():
    p = pulse.GaussianPulse(1.0, 0.3, polarization=(0.0, 2.0, 0.0))
    assert p.polarization == (0.0, 1.0, 0.0)
    with pytest.raises(InvalidParameter):
        pulse.GaussianPulse(1.0, 0.3, polarization=(0.0, 0.0, 0.0))


def test_envelope_integrates_to_eta():
    p = pulse.GaussianPulse(1.2, 0.4, center_time=2.0, eta=0.7)
    t = np.linspace(-4, 8, 4001)
    assert scipy.integrate.trapezoid(p.envelope(t), t) == pytest.approx(0.7, rel=1e-9)


def test_half_maximum_at_fwhm():
    p = pulse.GaussianPulse(1.0, 0.5)
    assert p.envelope(p.fwhm / 2) == pytest.approx(p.peak / 2, rel=1e-12)


@given(
    st.floats(min_value=0.05, max_value=2.0),
    st.floats(min_value=0.0, max_value=3.0),
    st.floats(min_value=-3.0, max_value=3.0),
)
def test_field_is_symmetric_about_its_center(sigma, t0, s):
    p = pulse.GaussianPulse(1.0, sigma, center_time=t0)
    assert abs(p.field_time(t0 + s)) == pytest.approx(abs(p.field_time(t0 - s)), rel=1e-9, abs=1e-300)
    assert p.field_freq(1.0 + s) == pytest.approx(p.field_freq(1.0 - s), rel=1e-12, abs=1e-300)


def test_spectrum_is_transform_of_field():
    p = pulse.GaussianPulse(1.5, 0.3)
    t = np.linspace(-4, 4, 8001)
    for omega in (1.0, 1.5, 2.2):
        transformed = scipy.integrate.trapezoid(p.field_time(t) * np.exp(1j * omega * t), t)
        assert transformed == pytest.approx(p.field_freq(omega), abs=1e-9)


def test_variants():
    p = pulse.GaussianPulse(1.0, 0.3)
    assert p.delayed(4.0).center_time == 4.0
    assert p.retuned(1.7).center_freq == 1.7
    assert p.with_sigma(0.1).sigma == 0.1
    assert p.with_sigma(0.1).center_freq == 1.0
    assert pulse.field_freq(p, 1.0) == pytest.approx(1.0)
    assert pulse.field_time(p, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi * 0.09))
