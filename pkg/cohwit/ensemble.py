"""
cohwit.ensemble

Thermal Boltzmann averaging over initial vibrational states and isotropic
averaging over molecular orientations.

Every pulse interaction shares one lab polarization, so a pump-probe
pathway carries a product of four dipole projections. Its isotropic
average is given exactly by the rank-4 tensor identity, or approximately
by a quadrature over orientations.
"""

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable

import numpy as np
from loguru import logger

from cohwit.errors import InvalidParameter
from cohwit.units import PhysicalUnits

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ThermalWeights:
    """Populations p_n of the initial vibrational states, indexed into an energy list."""

    temperature: float
    indices: tuple[int, ...]
    weights: tuple[float, ...]
    defect: float = 0.0

    def __len__(self):
        return len(self.indices)

    def items(self):
        yield from zip(self.indices, self.weights)

    @property
    def total(self) -> float:
        return float(sum(self.weights))

    @staticmethod
    def pure(index: int) -> "ThermalWeights":
        return ThermalWeights(0.0, (int(index),), (1.0,), 0.0)


def thermal_populations(
    energies,
    temperature: float,
    omega0_cm: float = 100.0,
    cutoff: float = 1e-6,
) -> ThermalWeights:
    beta = PhysicalUnits(omega0_cm).beta(temperature)
    energies = np.asarray(energies, dtype=float)
    order = np.argsort(energies, kind="stable")
    e = energies[order] - energies[order[0]]

    if math.isinf(beta):
        keep = int(np.sum(e < DEGENERACY_TOL))
        weights = np.full(keep, 1.0 / keep)
        return ThermalWeights(temperature, tuple(int(i) for i in order[:keep]), tuple(weights), 0.0)

    boltzmann = np.exp(-beta * e)
    p = boltzmann / boltzmann.sum()
    if p[-1] > cutoff:
        logger.warning(
            f"only {len(e)} states supplied at {temperature} K; the highest still carries {p[-1]:.1e}"
        )
    cumulative = np.cumsum(p)
    last = int(np.searchsorted(cumulative, 1 - cutoff))
    last = min(last, len(e) - 1)
    while last + 1 < len(e) and e[last + 1] - e[last] < DEGENERACY_TOL:
        last += 1

    kept = p[: last + 1]
    defect = float(1 - kept.sum())
    kept = kept / kept.sum()
    logger.debug(f"thermal populations at {temperature} K: {len(kept)} states, p0={kept[0]:.4f}")
    return ThermalWeights(
        temperature, tuple(int(i) for i in order[: last + 1]), tuple(float(x) for x in kept), defect
    )


class OrientationMode(enum.StrEnum):
    FIXED = "fixed"
    ANALYTIC = "analytic"
    QUADRATURE = "quadrature"


def _icosahedral_axes() -> np.ndarray:
    g = (1 + math.sqrt(5)) / 2
    axes = np.array(
        [
            (0, 1, g),
            (0, -1, g),
            (1, g, 0),
            (-1, g, 0),
            (g, 0, 1),
            (g, 0, -1),
        ],
        dtype=float,
    )
    return axes / np.linalg.norm(axes, axis=1)[:, None]


@dataclass(frozen=True)
class OrientationScheme:
    mode: OrientationMode = OrientationMode.ANALYTIC
    order: int = 8
    polarization: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", OrientationMode(self.mode))
        except ValueError:
            raise InvalidParameter(
                f"unknown orientation mode {self.mode!r}, expected one of {[m.value for m in OrientationMode]}"
            ) from None
        if self.order < 1:
            raise InvalidParameter(f"quadrature order must be positive, got {self.order}")
        pol = np.asarray(self.polarization, dtype=float)
        object.__setattr__(self, "polarization", tuple(float(x) for x in pol / np.linalg.norm(pol)))

    @staticmethod
    def fixed(polarization=(1.0, 0.0, 0.0)) -> "OrientationScheme":
        return OrientationScheme(OrientationMode.FIXED, polarization=tuple(polarization))

    def aligned(self, polarization) -> "OrientationScheme":
        """The same scheme with the lab polarization of the pulses."""
        return replace(self, polarization=tuple(polarization))

    @cached_property
    def _directions(self) -> tuple[np.ndarray, np.ndarray]:
        match self.mode:
            case OrientationMode.FIXED:
                return np.array([self.polarization]), np.ones(1)
            case OrientationMode.ANALYTIC:
                # the six axes of an icosahedron average every quartic exactly
                axes = _icosahedral_axes()
                return axes, np.full(len(axes), 1 / len(axes))
            case OrientationMode.QUADRATURE:
                n = self.order
                cos_theta, w_theta = np.polynomial.legendre.leggauss(n)
                phi = 2 * np.pi * np.arange(2 * n) / (2 * n)
                sin_theta = np.sqrt(1 - cos_theta**2)
                dirs = np.stack(
                    [
                        np.outer(sin_theta, np.cos(phi)).ravel(),
                        np.outer(sin_theta, np.sin(phi)).ravel(),
                        np.repeat(cos_theta, len(phi)),
                    ],
                    axis=1,
                )
                weights = np.repeat(w_theta / 2, len(phi)) / len(phi)
                return dirs, weights

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Lab-frame polarization directions and their weights, summing to one."""
        return self._directions

    def rank2(self, a, b) -> np.ndarray:
        a, b = np.atleast_2d(a), np.atleast_2d(b)
        if self.mode == OrientationMode.ANALYTIC:
            return a @ b.T / 3
        dirs, w = self.directions()
        pa, pb = a @ dirs.T, b @ dirs.T
        return np.einsum("m,am,bm->ab", w, pa, pb)

    def rank4(self, a, b, c, d) -> np.ndarray:
        """Averaged (e.a_i)(e.b_j)(e.c_k)(e.d_l) for every index combination."""
        a, b, c, d = (np.atleast_2d(x) for x in (a, b, c, d))
        if self.mode == OrientationMode.ANALYTIC:
            ab, cd = a @ b.T, c @ d.T
            ac, bd = a @ c.T, b @ d.T
            ad, bc = a @ d.T, b @ c.T
            return (
                np.einsum("ij,kl->ijkl", ab, cd)
                + np.einsum("ik,jl->ijkl", ac, bd)
                + np.einsum("il,jk->ijkl", ad, bc)
            ) / 15
        dirs, w = self.directions()
        pa, pb, pc, pd = (x @ dirs.T for x in (a, b, c, d))
        return np.einsum("m,im,jm,km,lm->ijkl", w, pa, pb, pc, pd)

    def pathway_weights(self, a, b, c, d) -> np.ndarray:
        return self.rank4(a, b, c, d)


def orientation_average(signal_fn: Callable[[np.ndarray], np.ndarray], scheme: OrientationScheme):
    """Average a signal computed for one lab polarization over the scheme's directions."""
    dirs, weights = scheme.directions()
    total = None
    for direction, w in zip(dirs, weights):
        value = w * np.asarray(signal_fn(direction))
        total = value if total is None else total + value
    return total


@dataclass(frozen=True)
class Ensemble:
    temperature: float = 0.0
    orientation: OrientationScheme = OrientationScheme()
    initial_state: int = 0
    omega0_cm: float = 100.0
    cutoff: float = 1e-6

    def __post_init__(self):
        if self.temperature < 0:
            raise InvalidParameter(f"temperature must be >= 0, got {self.temperature}")
        if self.initial_state < 0:
            raise InvalidParameter(f"initial_state must be >= 0, got {self.initial_state}")

    @property
    def thermal(self) -> bool:
        return self.temperature > 0

    def beta(self) -> float:
        return PhysicalUnits(self.omega0_cm).beta(self.temperature)

    def thermal_quanta(self) -> int:
        """Highest quantum per mode that a thermal population can reach."""
        return math.ceil(math.log(1 / self.cutoff) / self.beta())


def _parallel_dipoles(model) -> np.ndarray | None:
    vectors = [model.dipole_matrix]
    if model.has_doubly:
        vectors.append(model.doubly_dipole_matrix)
    stacked = np.concatenate(vectors)
    stacked = stacked[np.linalg.norm(stacked, axis=1) > 0]
    axis = stacked[0] / np.linalg.norm(stacked[0])
    if np.allclose(np.cross(stacked, axis), 0, atol=1e-12):
        return axis
    return None


def prepare(model, ensemble: Ensemble, numerics=None):
    """Build the sum-over-states basis large enough for the ensemble, plus its populations."""
    from cohwit import sos
    from cohwit.model import vibrational_eigenbasis

    numerics = numerics or sos.BasisNumerics()
    initial_quanta = None
    grid = numerics.grid
    if ensemble.thermal:
        reserve = ensemble.thermal_quanta()
        grid = numerics.thermal_grid
    else:
        ground = vibrational_eigenbasis(model.ground, numerics.grid, ensemble.initial_state + 1)
        initial_quanta = tuple(int(q) for q in ground.quanta[ensemble.initial_state])
        reserve = max(initial_quanta)

    basis = sos.build_sos_basis(
        model,
        truncation=numerics.truncation,
        reserve=reserve,
        grid=grid,
        tol=numerics.tolerance,
        beta=ensemble.beta(),
    )
    if ensemble.thermal:
        if ensemble.initial_state:
            logger.warning("a thermal ensemble ignores the initial_state setting")
        weights = thermal_populations(
            basis.ground_energies, ensemble.temperature, ensemble.omega0_cm, ensemble.cutoff
        )
    else:
        weights = ThermalWeights.pure(basis.index_of(initial_quanta))
    return basis, weights


def ensemble_pump_probe(
    model, pump, probe, times, ensemble: Ensemble = Ensemble(), engine="sos", numerics=None, prepared=None
):
    """
    Sum over initial states of the orientation-averaged pump-probe trace.

    With `engine="sos"` the orientation average is taken inside the
    sum-over-states formulas; with `engine="grid"` one propagation runs per
    initial state and lab direction.
    """
    from cohwit import dynamics, sos

    scheme = ensemble.orientation.aligned(pump.polarization)

    if engine == "sos":
        basis, weights = prepared or prepare(model, ensemble, numerics)
        return sos.pump_probe_sos(basis, pump, probe, times, populations=weights, orientation=scheme)

    if engine != "grid":
        raise InvalidParameter(f"unknown engine {engine!r}, expected 'sos' or 'grid'")

    numerics = numerics or dynamics.GridNumerics()
    grid = numerics.thermal_grid if ensemble.thermal else numerics.grid
    numerics = replace(numerics, grid=grid)
    weights = _grid_populations(model, ensemble, grid)

    axis = _parallel_dipoles(model)
    if scheme.mode == OrientationMode.FIXED:
        directions, dir_weights = [np.asarray(pump.polarization)], [1.0]
    elif axis is not None:
        # a single dipole direction only rescales the trace
        dirs, w = scheme.directions()
        directions, dir_weights = [axis], [float(np.sum(w * (dirs @ axis) ** 4))]
    else:
        directions, dir_weights = scheme.directions()

    traces, factors = [], []
    for n, p in weights.items():
        for direction, w in zip(directions, dir_weights):
            pol = tuple(float(x) for x in direction)
            trace = dynamics.pump_probe_signal(
                model,
                replace(pump, polarization=pol),
                replace(probe, polarization=pol),
                times,
                initial_vib_state=n,
                numerics=numerics,
            )
            traces.append(trace)
            factors.append(p * w)
    return sos.PumpProbeTrace.combine(traces, factors)


def _grid_populations(model, ensemble: Ensemble, grid) -> ThermalWeights:
    from cohwit.model import vibrational_eigenbasis

    if not ensemble.thermal:
        return ThermalWeights.pure(ensemble.initial_state)
    per_mode = min(ensemble.thermal_quanta() + 2, grid.points // 2)
    # every product state with fewer than per_mode quanta in total
    n_states = per_mode if model.n_modes == 1 else per_mode * (per_mode + 1) // 2
    basis = vibrational_eigenbasis(model.ground, grid, n_states)
    return thermal_populations(basis.energies, ensemble.temperature, ensemble.omega0_cm, ensemble.cutoff)
