"""
cohwit.model

This module provides the vibronic systems the toolkit works on: harmonic
potential surfaces, the monomer and dimer models built from them, the
coordinate grid, vibrational eigenbases and Franck-Condon matrices.

All quantities are in units of the ground vibrational frequency (hbar = 1).
"""

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from loguru import logger

from cohwit.errors import InvalidParameter, ResolutionError

Vector = tuple[float, float, float]


@dataclass(frozen=True)
class HarmonicSurface:
    """
    A 'HarmonicSurface' is an electronic offset plus one displaced harmonic
    well per mode: V(x) = offset + sum_k w_k^2 (x_k - shift_k)^2 / 2.
    """

    offset: float
    frequencies: tuple[float, ...]
    shifts: tuple[float, ...]

    def __post_init__(self):
        if len(self.frequencies) != len(self.shifts):
            raise InvalidParameter(
                f"expected one shift per mode, got {len(self.shifts)} for {len(self.frequencies)} modes"
            )
        if not 1 <= len(self.frequencies) <= 2:
            raise InvalidParameter(f"only one or two modes supported, got {len(self.frequencies)}")
        for w in self.frequencies:
            if not (math.isfinite(w) and w > 0):
                raise InvalidParameter(f"vibrational frequency must be positive, got {w}")
        if not math.isfinite(self.offset):
            raise InvalidParameter(f"electronic offset must be finite, got {self.offset}")

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    def mode_potential(self, mode: int, x: np.ndarray) -> np.ndarray:
        w, d = self.frequencies[mode], self.shifts[mode]
        return 0.5 * w**2 * (x - d) ** 2

    def potential(self, grid: "GridSpec") -> np.ndarray:
        """The potential on the flattened product grid (C order), offset included."""
        total = np.full((grid.points,) * self.n_modes, self.offset, dtype=float)
        for k in range(self.n_modes):
            shape = [1] * self.n_modes
            shape[k] = grid.points
            total = total + self.mode_potential(k, grid.axis).reshape(shape)
        return total.ravel()


@dataclass(frozen=True)
class GridSpec:
    points: int = 30
    spacing: float = 0.5

    def __post_init__(self):
        if self.points < 16:
            raise InvalidParameter(f"need at least 16 points per mode, got {self.points}")
        if not self.spacing > 0:
            raise InvalidParameter(f"grid spacing must be positive, got {self.spacing}")
        # six ground-state widths, 1/sqrt(2) each
        if (self.points - 1) * self.spacing < 6 / math.sqrt(2):
            raise InvalidParameter(
                f"grid of {self.points} x {self.spacing} does not cover six ground-state widths"
            )

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.points) - (self.points - 1) / 2) * self.spacing

    @cached_property
    def momenta(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def kinetic_matrix(self) -> np.ndarray:
        """The periodic Fourier-grid kinetic operator, shared with the propagator."""
        n = self.points
        t = np.fft.ifft(
            np.fft.fft(np.eye(n), axis=0) * (0.5 * self.momenta**2)[:, None], axis=0
        ).real
        return 0.5 * (t + t.T)

    def kinetic_nd(self, n_modes: int) -> np.ndarray:
        t = self.kinetic_matrix
        eye = np.eye(self.points)
        if n_modes == 1:
            return t
        return np.kron(t, eye) + np.kron(eye, t)


def _mode_states(grid: GridSpec, frequency: float, shift: float, count: int):
    h = grid.kinetic_matrix + np.diag(0.5 * frequency**2 * (grid.axis - shift) ** 2)
    energies, vectors = scipy.linalg.eigh(h, subset_by_index=[0, count - 1])
    for j in range(count):
        v = vectors[:, j]
        first = np.flatnonzero(np.abs(v) > 1e-3 * np.abs(v).max())[0]
        if v[first] < 0:
            vectors[:, j] = -v
    return energies, vectors


def _check_resolution(grid: GridSpec, energies: np.ndarray, vectors: np.ndarray):
    kmax = np.pi / grid.spacing
    top = float(energies[-1])
    if math.sqrt(2 * max(top, 0.0)) > 0.75 * kmax:
        raise ResolutionError(
            f"state at energy {top:.3g} needs momenta beyond 0.75 of the grid cutoff {kmax:.3g}"
        )
    tail = max(1, grid.points // 20)
    edge = (vectors[:tail] ** 2).sum(axis=0) + (vectors[-tail:] ** 2).sum(axis=0)
    if edge.max() > 1e-6:
        raise ResolutionError(
            f"eigenstates leak onto the grid edge (weight {edge.max():.2e}); widen the grid"
        )


def mode_eigenstates(grid: GridSpec, frequency: float, shift: float, count: int):
    """The lowest `count` states of one displaced harmonic mode, checked for resolution."""
    if count > grid.points // 2:
        raise ResolutionError(
            f"{count} states requested but a {grid.points}-point grid resolves at most {grid.points // 2}"
        )
    energies, vectors = _mode_states(grid, frequency, shift, count)
    _check_resolution(grid, energies, vectors)
    return energies, vectors


@dataclass(frozen=True, eq=False)
class Eigenbasis:
    """Vibrational product eigenstates of one surface, sorted by energy."""

    grid: GridSpec
    energies: np.ndarray
    quanta: np.ndarray
    factors: tuple[np.ndarray, ...]
    mode_energies: tuple[np.ndarray, ...]

    def __len__(self):
        return len(self.energies)

    @cached_property
    def vectors(self) -> np.ndarray:
        """Product eigenvectors on the flattened grid, shape (points**n_modes, n)."""
        columns = []
        for q in self.quanta:
            v = self.factors[0][:, q[0]]
            for k in range(1, len(self.factors)):
                v = np.kron(v, self.factors[k][:, q[k]])
            columns.append(v)
        return np.stack(columns, axis=1)


def vibrational_eigenbasis(
    surface: HarmonicSurface, grid: GridSpec, n_states: int
) -> Eigenbasis:
    if n_states < 1:
        raise InvalidParameter(f"n_states must be positive, got {n_states}")
    per_mode = n_states if surface.n_modes == 1 else min(n_states, grid.points // 2)
    if per_mode > grid.points // 2:
        raise ResolutionError(
            f"{n_states} states requested but a {grid.points}-point grid resolves at most {grid.points // 2}"
        )
    if per_mode**surface.n_modes < n_states:
        raise ResolutionError(f"{n_states} product states do not fit on the grid")

    mode_energies, factors = [], []
    for k in range(surface.n_modes):
        e, v = _mode_states(grid, surface.frequencies[k], surface.shifts[k], per_mode)
        mode_energies.append(e)
        factors.append(v)

    quanta = np.array(list(itertools.product(range(per_mode), repeat=surface.n_modes)))
    energies = sum(mode_energies[k][quanta[:, k]] for k in range(surface.n_modes))
    order = np.argsort(energies, kind="stable")[:n_states]
    quanta, energies = quanta[order], energies[order] + surface.offset

    used = quanta.max(axis=0)
    for k in range(surface.n_modes):
        if per_mode < n_states and used[k] == per_mode - 1 and surface.n_modes > 1:
            raise ResolutionError("product basis reaches the per-mode state limit")
        _check_resolution(
            grid, mode_energies[k][: used[k] + 1], factors[k][:, : used[k] + 1]
        )
        factors[k] = factors[k][:, : used[k] + 1]
        mode_energies[k] = mode_energies[k][: used[k] + 1]

    logger.trace(f"eigenbasis: {n_states} states on {grid.points} points")
    return Eigenbasis(grid, energies, quanta, tuple(factors), tuple(mode_energies))


@dataclass(frozen=True, eq=False)
class FranckCondonMatrix:
    overlaps: np.ndarray
    truncation_size: int

    def completeness(self) -> np.ndarray:
        """Sum over rows of |M_mn|^2 for every column n."""
        return (np.abs(self.overlaps) ** 2).sum(axis=0)


def franck_condon_matrix(
    a: HarmonicSurface, b: HarmonicSurface, grid: GridSpec, n: int = 20
) -> FranckCondonMatrix:
    if a.n_modes != b.n_modes:
        raise InvalidParameter("surfaces have a different number of modes")
    ba = vibrational_eigenbasis(a, grid, n)
    bb = vibrational_eigenbasis(b, grid, n)
    overlaps = np.ones((n, n))
    for k in range(a.n_modes):
        o = ba.factors[k].T @ bb.factors[k]
        overlaps = overlaps * o[np.ix_(ba.quanta[:, k], bb.quanta[:, k])]
    return FranckCondonMatrix(overlaps, n)


@dataclass(frozen=True)
class VibronicModel:
    """
    A ground surface, one excited surface per site, the excitonic coupling
    between sites and the transition dipoles. A dimer also carries the
    doubly-excited surface and the site-to-doubly dipoles.
    """

    ground: HarmonicSurface
    sites: tuple[HarmonicSurface, ...]
    coupling: tuple[tuple[float, ...], ...]
    dipoles: tuple[Vector, ...]
    doubly: HarmonicSurface | None = None
    doubly_dipoles: tuple[Vector, ...] = ()
    kind: str = "monomer"

    def __post_init__(self):
        n = len(self.sites)
        if n == 0:
            raise InvalidParameter("a model needs at least one excited site")
        modes = {self.ground.n_modes, *(s.n_modes for s in self.sites)}
        if self.doubly is not None:
            modes.add(self.doubly.n_modes)
        if len(modes) != 1:
            raise InvalidParameter("all surfaces must share the same modes")
        j = np.asarray(self.coupling, dtype=float)
        if j.shape != (n, n):
            raise InvalidParameter(f"coupling must be {n}x{n}, got {j.shape}")
        if not np.allclose(j, j.T, atol=1e-14) or np.any(np.diag(j) != 0):
            raise InvalidParameter("coupling must be symmetric with a zero diagonal")
        if len(self.dipoles) != n:
            raise InvalidParameter("expected one ground-to-site dipole per site")
        if self.doubly is not None:
            if len(self.doubly_dipoles) != n:
                raise InvalidParameter("expected one site-to-doubly dipole per site")
            expected = sum(s.offset for s in self.sites) - (n - 1) * self.ground.offset
            if not math.isclose(self.doubly.offset, expected, abs_tol=1e-12):
                raise InvalidParameter(
                    f"doubly-excited offset {self.doubly.offset} must equal the sum of site offsets {expected}"
                )

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_modes(self) -> int:
        return self.ground.n_modes

    @property
    def has_doubly(self) -> bool:
        return self.doubly is not None and any(
            np.any(np.asarray(d) != 0) for d in self.doubly_dipoles
        )

    @property
    def labels(self) -> tuple[str, ...]:
        if self.n_sites == 1:
            sites = ("e",)
        else:
            sites = tuple(f"e{i + 1}" for i in range(self.n_sites))
        return ("g", *sites) + (("f",) if self.doubly is not None else ())

    def surface(self, label: str) -> HarmonicSurface:
        lbls = self.labels
        if label not in lbls:
            raise KeyError(f"unknown electronic state {label!r}, expected one of {lbls}")
        if label == "g":
            return self.ground
        if label == "f":
            return self.doubly
        return self.sites[lbls.index(label) - 1]

    @property
    def transition_dipoles(self) -> dict[tuple[str, str], np.ndarray]:
        site_labels = self.labels[1 : 1 + self.n_sites]
        result = {("g", s): np.asarray(d, float) for s, d in zip(site_labels, self.dipoles)}
        if self.doubly is not None:
            for s, d in zip(site_labels, self.doubly_dipoles):
                result[(s, "f")] = np.asarray(d, float)
        return result

    @property
    def dipole_matrix(self) -> np.ndarray:
        """Ground-to-site dipoles as an (n_sites, 3) array."""
        return np.asarray(self.dipoles, dtype=float)

    @property
    def doubly_dipole_matrix(self) -> np.ndarray:
        return np.asarray(self.doubly_dipoles, dtype=float).reshape(-1, 3)

    @property
    def coupling_matrix(self) -> np.ndarray:
        return np.asarray(self.coupling, dtype=float)

    def grid_hamiltonian(self, grid: GridSpec) -> np.ndarray:
        """The dense singly-excited block on the product grid, sites outermost."""
        kinetic = grid.kinetic_nd(self.n_modes)
        size = kinetic.shape[0]
        eye_sites = np.eye(self.n_sites)
        h = np.kron(eye_sites, kinetic)
        h = h + scipy.linalg.block_diag(*(np.diag(s.potential(grid)) for s in self.sites))
        h = h + np.kron(self.coupling_matrix, np.eye(size))
        return h

    def huang_rhys(self, label: str, mode: int = 0) -> float:
        omega_0 = self.ground.frequencies[mode]
        delta = self.surface(label).shifts[mode] - self.ground.shifts[mode]
        return omega_0 * delta**2 / 2


def shift_of_huang_rhys(huang_rhys: float, omega_0: float = 1.0) -> float:
    return math.sqrt(2 * huang_rhys / omega_0)


def _positive(name: str, value: float):
    if not (math.isfinite(value) and value > 0):
        raise InvalidParameter(f"{name} must be positive, got {value}")


def build_monomer(
    omega_e: float, huang_rhys: float, omega_0: float = 1.0, Omega_e: float = 0.0
) -> VibronicModel:
    _positive("omega_e", omega_e)
    _positive("omega_0", omega_0)
    if not huang_rhys >= 0:
        raise InvalidParameter(f"huang_rhys must be >= 0, got {huang_rhys}")
    ground = HarmonicSurface(0.0, (omega_0,), (0.0,))
    excited = HarmonicSurface(
        Omega_e, (omega_e,), (shift_of_huang_rhys(huang_rhys, omega_0),)
    )
    return VibronicModel(ground, (excited,), ((0.0,),), ((1.0, 0.0, 0.0),))


@dataclass(frozen=True)
class DimerParameters:
    Omega_e1: float = 0.0
    delta_E: float = 0.73
    J: float = 1.0
    omega_e1: float = 1.5
    omega_e2: float = 2.0
    huang_rhys1: float = 0.02
    huang_rhys2: float = 0.005
    omega_0: float = 1.0

    @property
    def Omega_e2(self) -> float:
        return self.Omega_e1 + self.delta_E

    @staticmethod
    def decode(data: dict) -> "DimerParameters":
        return DimerParameters(**{k: float(v) for k, v in data.items()})

    def encode(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def build_dimer(params: DimerParameters = DimerParameters()) -> VibronicModel:
    p = params
    for name in ("omega_e1", "omega_e2", "omega_0"):
        _positive(name, getattr(p, name))
    for name in ("huang_rhys1", "huang_rhys2"):
        if not getattr(p, name) >= 0:
            raise InvalidParameter(f"{name} must be >= 0, got {getattr(p, name)}")

    w0 = p.omega_0
    d1 = shift_of_huang_rhys(p.huang_rhys1, w0)
    d2 = shift_of_huang_rhys(p.huang_rhys2, w0)

    ground = HarmonicSurface(0.0, (w0, w0), (0.0, 0.0))
    e1 = HarmonicSurface(p.Omega_e1, (p.omega_e1, w0), (d1, 0.0))
    e2 = HarmonicSurface(p.Omega_e2, (w0, p.omega_e2), (0.0, d2))
    f = HarmonicSurface(p.Omega_e1 + p.Omega_e2, (p.omega_e1, p.omega_e2), (d1, d2))

    # orthogonal site dipoles with norm ratio 1:3
    d_ge1 = (1.0, 0.0, 0.0)
    d_ge2 = (0.0, 3.0, 0.0)
    return VibronicModel(
        ground=ground,
        sites=(e1, e2),
        coupling=((0.0, p.J), (p.J, 0.0)),
        dipoles=(d_ge1, d_ge2),
        doubly=f,
        doubly_dipoles=(d_ge2, d_ge1),
        kind="dimer",
    )
