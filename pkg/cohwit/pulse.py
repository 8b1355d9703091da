"""
cohwit.pulse

Classical Gaussian pulses in the time and frequency domains, and the
conversion between the envelope width sigma and the FWHM.

The FWHM refers to the field amplitude envelope exp(-t^2 / 2 sigma^2).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from cohwit.errors import InvalidParameter

FWHM_FACTOR = 2 * math.sqrt(2 * math.log(2))


def fwhm_of_sigma(sigma: float) -> float:
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    return FWHM_FACTOR * sigma


def sigma_of_fwhm(fwhm: float) -> float:
    if not fwhm > 0:
        raise InvalidParameter(f"fwhm must be positive, got {fwhm}")
    return fwhm / FWHM_FACTOR


@dataclass(frozen=True)
class GaussianPulse:
    center_freq: float
    sigma: float
    center_time: float = 0.0
    eta: float = 1.0
    polarization: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameter(f"pulse duration sigma must be positive, got {self.sigma}")
        pol = np.asarray(self.polarization, dtype=float)
        norm = np.linalg.norm(pol)
        if pol.shape != (3,) or norm == 0:
            raise InvalidParameter(f"polarization must be a nonzero 3-vector, got {self.polarization}")
        object.__setattr__(self, "polarization", tuple(float(p) for p in pol / norm))

    @property
    def fwhm(self) -> float:
        return fwhm_of_sigma(self.sigma)

    @property
    def peak(self) -> float:
        return self.eta / math.sqrt(2 * math.pi * self.sigma**2)

    def envelope(self, t):
        """The real envelope, whose time integral is eta."""
        s = np.asarray(t, dtype=float) - self.center_time
        return self.peak * np.exp(-(s**2) / (2 * self.sigma**2))

    def field_time(self, t):
        """The positive-frequency part of the field."""
        s = np.asarray(t, dtype=float) - self.center_time
        return self.envelope(t) * np.exp(-1j * self.center_freq * s)

    def field_freq(self, omega):
        w = np.asarray(omega, dtype=float)
        return self.eta * np.exp(-(self.sigma**2) * (w - self.center_freq) ** 2 / 2)

    def delayed(self, t: float) -> "GaussianPulse":
        return replace(self, center_time=t)

    def retuned(self, omega: float) -> "GaussianPulse":
        return replace(self, center_freq=omega)

    def with_sigma(self, sigma: float) -> "GaussianPulse":
        return replace(self, sigma=sigma)


def field_time(p: GaussianPulse, t):
    return p.field_time(t)


def field_freq(p: GaussianPulse, omega):
    return p.field_freq(omega)
