"""cohwit

Simulate frequency-integrated pump-probe signals of small vibronic systems
and run the pulse-duration witness for electronic coherence.
"""

from cohwit.model import (
    GridSpec,
    HarmonicSurface,
    VibronicModel,
    DimerParameters,
    build_monomer,
    build_dimer,
)
from cohwit.pulse import GaussianPulse, fwhm_of_sigma, sigma_of_fwhm

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "HarmonicSurface",
    "VibronicModel",
    "DimerParameters",
    "build_monomer",
    "build_dimer",
    "GaussianPulse",
    "fwhm_of_sigma",
    "sigma_of_fwhm",
    "__version__",
]
