"""cohwit.units

Everything inside the toolkit is measured in units of the ground-state
vibrational frequency, with hbar = 1. This module converts to and from
laboratory units at the edge of the program.
"""

import math
from dataclasses import dataclass

from cohwit.errors import InvalidParameter

SPEED_OF_LIGHT = 2.99792458e10  # cm / s
BOLTZMANN = 0.69503476  # cm^-1 / K


@dataclass(frozen=True)
class PhysicalUnits:
    omega0_cm: float = 100.0

    def __post_init__(self):
        if not self.omega0_cm > 0:
            raise InvalidParameter(f"omega0_cm must be positive, got {self.omega0_cm}")

    @property
    def time_unit_fs(self) -> float:
        """One inverse ground frequency expressed in femtoseconds."""
        return 1e15 / (2 * math.pi * SPEED_OF_LIGHT * self.omega0_cm)

    def to_fs(self, t: float) -> float:
        return t * self.time_unit_fs

    def from_fs(self, t_fs: float) -> float:
        return t_fs / self.time_unit_fs

    def to_cm(self, omega: float) -> float:
        return omega * self.omega0_cm

    def beta(self, temperature: float) -> float:
        """Inverse temperature in units of 1/omega_0, infinite at T = 0."""
        if temperature < 0:
            raise InvalidParameter(f"temperature must be >= 0, got {temperature}")
        if temperature == 0:
            return math.inf
        return self.omega0_cm / (BOLTZMANN * temperature)
