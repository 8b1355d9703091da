"""
cohwit.health

Numerical self-tests run by `cohwit checkhealth`.
"""

import math
from contextlib import contextmanager

import numpy as np
from loguru import logger

from cohwit.dynamics import CapSpec, Propagator
from cohwit.ensemble import OrientationMode, OrientationScheme, thermal_populations
from cohwit.model import GridSpec, build_dimer, build_monomer, franck_condon_matrix, vibrational_eigenbasis
from cohwit.sos import absorption_spectrum, build_sos_basis
from cohwit.units import BOLTZMANN


class HealthFailure(AssertionError):
    pass


@contextmanager
def _check(reason, failfast=False, failures=None):
    logger.info(reason)
    try:
        yield
    except AssertionError as e:
        msg = str(e)
        if msg:
            logger.error(f"{reason} FAILED: {e}")
        else:
            logger.error(f"{reason} FAILED")
        if failures is not None:
            failures.append(reason)
        if failfast:
            raise HealthFailure(f"{reason}: {msg}") from e
    else:
        logger.success(f"{reason} ok")


def checkhealth(failfast: bool = False) -> list[str]:
    """Run every self-test and return the reasons of those that failed."""
    failures: list[str] = []
    grid = GridSpec(128, 0.25)

    def check(msg):
        return _check(msg, failfast, failures)

    with check("Franck-Condon factors follow the Poisson progression"):
        s = 0.02
        monomer = build_monomer(1.0, s)
        fc = franck_condon_matrix(monomer.ground, monomer.sites[0], grid, n=12)
        expected = [math.exp(-s) * s**m / math.factorial(m) for m in range(8)]
        got = np.abs(fc.overlaps[0, :8]) ** 2
        assert np.allclose(got, expected, atol=1e-6), f"max deviation {np.max(np.abs(got - expected)):.2e}"

    with check("Harmonic eigenvalues are (n + 1/2) w"):
        monomer = build_monomer(1.5, 0.02)
        basis = vibrational_eigenbasis(monomer.sites[0], grid, 10)
        expected = 1.5 * (np.arange(10) + 0.5) + monomer.sites[0].offset
        deviation = np.max(np.abs(basis.energies - expected))
        assert deviation < 1e-8, f"max deviation {deviation:.2e}"

    with check("Split-operator propagation conserves the norm"):
        surface = build_monomer(1.5, 0.02).sites[0]
        prop = Propagator.for_surface(surface, GridSpec(64, 0.3), 0.01, CapSpec(enabled=False))
        x = prop.grid.axis
        psi = np.exp(-((x - 1.0) ** 2) / 2).astype(complex)[None, None, :]
        psi /= math.sqrt(prop.norm(psi)[0])
        worst = 0.0
        for _ in range(200):
            nxt = prop.step(psi)
            worst = max(worst, abs(prop.norm(nxt)[0] - prop.norm(psi)[0]))
            psi = nxt
        assert worst < 1e-12, f"norm drift per step {worst:.2e}"

    with check("Absorption obeys the dipole sum rule"):
        basis = build_sos_basis(build_monomer(1.5, 0.02))
        total = absorption_spectrum(basis).total()
        assert abs(total - 1.0) < 1e-10, f"total strength {total!r}"

    with check("Thermal populations are normalized"):
        energies = 0.5 + np.arange(60)
        weights = thermal_populations(energies, 294.0, 100.0)
        assert abs(weights.total - 1.0) < 1e-12, f"sum {weights.total!r}"
        assert weights.defect < 1e-4, f"defect {weights.defect:.2e}"
        p0 = 1 - math.exp(-100.0 / (BOLTZMANN * 294.0))
        assert abs(weights.weights[0] - p0) < 1e-4, f"p0 {weights.weights[0]:.4f}, expected {p0:.4f}"

    with check("Analytic and quadrature orientation averages agree"):
        dipoles = build_dimer().dipole_matrix
        analytic = OrientationScheme(OrientationMode.ANALYTIC).rank4(dipoles, dipoles, dipoles, dipoles)
        quadrature = OrientationScheme(OrientationMode.QUADRATURE, order=16).rank4(
            dipoles, dipoles, dipoles, dipoles
        )
        scale = np.max(np.abs(analytic))
        deviation = np.max(np.abs(analytic - quadrature)) / scale
        assert deviation < 1e-4, f"relative deviation {deviation:.2e}"

    return failures
