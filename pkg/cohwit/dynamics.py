"""
cohwit.dynamics

Split-operator wavepacket propagation on the coordinate grid with a complex
absorbing potential, and the perturbative pump-probe signal built from it.

Wavepackets are arrays of shape (batch, electronic state, grid point). The
pump acts once, so the pump-only wavepackets have batch size one; every
probe-generated wavepacket carries one batch entry per waiting time.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from loguru import logger

from cohwit.errors import InstabilityError, InvalidParameter, RangeError
from cohwit.model import GridSpec, HarmonicSurface, VibronicModel, vibrational_eigenbasis
from cohwit.pulse import GaussianPulse
from cohwit.sos import PumpProbeTrace

CHECK_EVERY = 50
NORM_LIMIT = 1e-6


@dataclass(frozen=True)
class CapSpec:
    """An Eckart (sech^2) absorbing potential at both ends of every mode."""

    width: float = 3.0
    amplitude: complex = complex(-10.0, -10.0)
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        if not self.amplitude.imag < 0:
            raise InvalidParameter(f"absorbing amplitude needs a negative imaginary part, got {self.amplitude}")
        if not self.width > 0:
            raise InvalidParameter(f"cap width must be positive, got {self.width}")

    def profile(self, axis: np.ndarray) -> np.ndarray:
        d = np.minimum(axis - axis[0], axis[-1] - axis)
        inside = d < self.width
        values = np.zeros(len(axis), dtype=complex)
        values[inside] = self.amplitude / np.cosh(4 * d[inside] / self.width) ** 2
        return values

    def potential(self, grid: GridSpec, n_modes: int) -> np.ndarray:
        if not self.enabled:
            return np.zeros(grid.points**n_modes, dtype=complex)
        p = self.profile(grid.axis)
        if n_modes == 1:
            return p
        return (p[:, None] + p[None, :]).ravel()


@dataclass(frozen=True)
class GridNumerics:
    grid: GridSpec = GridSpec(30, 0.5)
    thermal_grid: GridSpec = GridSpec(96, 0.25)
    dt: float = 0.01
    total_time: float = 25.0
    cap: CapSpec = CapSpec()

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameter(f"time step must be positive, got {self.dt}")
        if not self.total_time > 0:
            raise InvalidParameter(f"total time must be positive, got {self.total_time}")


class Propagator:
    """
    Strang-split propagation in one electronic manifold.

    `potential` has shape (S, S, G): the electronic potential matrix at every
    grid point. Off-diagonal entries couple sites; the absorbing potential is
    the same for every state and enters as a separate factor.
    """

    def __init__(
        self,
        potential: np.ndarray,
        grid: GridSpec,
        n_modes: int,
        dt: float,
        cap: CapSpec | None = None,
    ):
        self.grid = grid
        self.n_modes = n_modes
        self.dt = dt
        self.potential = potential
        self.states = potential.shape[0]

        k = grid.momenta
        k2 = k**2 if n_modes == 1 else (k[:, None] ** 2 + k[None, :] ** 2)
        self.kinetic = 0.5 * k2
        self.kinetic_factor = np.exp(-1j * dt * self.kinetic)

        if self.states == 1:
            half = np.exp(-0.5j * dt * potential[0, 0])[None, None, :]
        else:
            lam, u = np.linalg.eigh(potential.transpose(2, 0, 1))
            half = np.einsum("gas,gs,gbs->abg", u, np.exp(-0.5j * dt * lam), u.conj())
        self.diagonal = self.states == 1
        if cap is not None and cap.enabled:
            half = half * np.exp(-0.5j * dt * cap.potential(grid, n_modes))[None, None, :]
        self.half = half

    @staticmethod
    def for_surface(
        surface: HarmonicSurface,
        grid: GridSpec,
        dt: float = 0.01,
        cap: CapSpec | None = None,
        shift: float = 0.0,
    ) -> "Propagator":
        v = surface.potential(grid) + shift
        return Propagator(v[None, None, :], grid, surface.n_modes, dt, cap)

    @staticmethod
    def for_sites(
        model: VibronicModel,
        grid: GridSpec,
        dt: float = 0.01,
        cap: CapSpec | None = None,
        shift: float = 0.0,
    ) -> "Propagator":
        s = model.n_sites
        size = grid.points**model.n_modes
        v = np.zeros((s, s, size))
        for i, site in enumerate(model.sites):
            v[i, i] = site.potential(grid) + shift
        j = model.coupling_matrix
        for a in range(s):
            for b in range(s):
                if a != b:
                    v[a, b] = j[a, b]
        return Propagator(v, grid, model.n_modes, dt, cap)

    def _apply_half(self, psi: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return psi * self.half[0]
        return np.einsum("abg,xbg->xag", self.half, psi)

    def _grid_shape(self, psi):
        return psi.shape[:2] + (self.grid.points,) * self.n_modes

    def _axes(self):
        return tuple(range(2, 2 + self.n_modes))

    def step(self, psi: np.ndarray) -> np.ndarray:
        psi = self._apply_half(psi)
        shaped = psi.reshape(self._grid_shape(psi))
        shaped = np.fft.ifftn(np.fft.fftn(shaped, axes=self._axes()) * self.kinetic_factor, axes=self._axes())
        psi = shaped.reshape(psi.shape)
        return self._apply_half(psi)

    def norm(self, psi: np.ndarray) -> np.ndarray:
        return np.sum(np.abs(psi) ** 2, axis=(1, 2))

    def energy(self, psi: np.ndarray) -> np.ndarray:
        """<H> / <psi|psi> per batch entry, without the absorbing potential."""
        shaped = psi.reshape(self._grid_shape(psi))
        momentum = np.fft.fftn(shaped, axes=self._axes())
        kinetic = np.sum(np.abs(momentum) ** 2 * self.kinetic, axis=(1,) + self._axes())
        kinetic = kinetic / self.grid.points**self.n_modes
        potential = np.einsum("xag,abg,xbg->x", psi.conj(), self.potential, psi).real
        return (kinetic + potential) / self.norm(psi)

    def position(self, psi: np.ndarray, mode: int = 0) -> np.ndarray:
        x = self.grid.axis
        if self.n_modes == 2:
            x = (np.repeat(x, self.grid.points) if mode == 0 else np.tile(x, self.grid.points))
        return np.sum(np.abs(psi) ** 2 * x, axis=(1, 2)) / self.norm(psi)


@dataclass(frozen=True, eq=False)
class PerturbativeStack:
    """
    Wavepackets by interaction order, in the frame rotating at the pump
    carrier.

    psi0: unperturbed ground; psi1: pump on psi0; psi2g: pump down from psi1;
    chi0: probe on psi0; chi2: probe on psi2g; se: probe down from psi1;
    esa: probe up from psi1 to the doubly-excited state.
    """

    time: float
    psi0: np.ndarray
    psi1: np.ndarray
    psi2g: np.ndarray
    chi0: np.ndarray
    chi2: np.ndarray
    se: np.ndarray
    esa: np.ndarray | None = None


@dataclass
class _Fields:
    pump: GaussianPulse
    probe: GaussianPulse
    delays: np.ndarray
    reference: float

    def pump_at(self, t: float) -> complex:
        s = t - self.pump.center_time
        return complex(self.pump.envelope(t) * np.exp(-1j * (self.pump.center_freq - self.reference) * s))

    def probe_at(self, t: float) -> np.ndarray:
        s = t - self.delays
        env = self.probe.eta / math.sqrt(2 * math.pi * self.probe.sigma**2) * np.exp(-(s**2) / (2 * self.probe.sigma**2))
        return env * np.exp(-1j * (self.probe.center_freq - self.reference) * s)


class PumpProbePropagator:
    """Advances a PerturbativeStack through the pump and a batch of delayed probes."""

    def __init__(
        self,
        model: VibronicModel,
        pump: GaussianPulse,
        probe: GaussianPulse,
        times,
        numerics: GridNumerics = GridNumerics(),
    ):
        if not np.allclose(pump.polarization, probe.polarization):
            raise InvalidParameter("pump and probe must share one polarization")
        self.model = model
        self.numerics = numerics
        self.dt = numerics.dt
        grid, cap, dt = numerics.grid, numerics.cap, numerics.dt
        ref = pump.center_freq

        self.ground = Propagator.for_surface(model.ground, grid, dt, cap)
        self.excited = Propagator.for_sites(model, grid, dt, cap, shift=-ref)
        self.doubly = None
        if model.has_doubly:
            self.doubly = Propagator.for_surface(model.doubly, grid, dt, cap, shift=-2 * ref)

        eps = np.asarray(pump.polarization)
        self.mu_ge = model.dipole_matrix @ eps
        self.mu_ef = model.doubly_dipole_matrix @ eps if self.doubly is not None else None
        self.fields = _Fields(pump, probe, pump.center_time + np.asarray(times, dtype=float), ref)

    def _up(self, amplitude, psi_g):
        return amplitude * self.mu_ge[None, :, None] * psi_g

    def _down(self, amplitude, psi_e):
        return amplitude * np.einsum("i,xig->xg", self.mu_ge, psi_e)[:, None, :]

    def _to_doubly(self, amplitude, psi_e):
        return amplitude * np.einsum("i,xig->xg", self.mu_ef, psi_e)[:, None, :]

    def _advance(self, prop, psi, source_now, source_next):
        h = 0.5j * self.dt
        return prop.step(psi + h * source_now) + h * source_next

    def propagate_step(
        self, stack: PerturbativeStack, pumping: bool = True, probing: bool = True
    ) -> PerturbativeStack:
        t, t1 = stack.time, stack.time + self.dt
        p0, p1 = (self.fields.pump_at(t), self.fields.pump_at(t1)) if pumping else (0j, 0j)

        psi0 = self.ground.step(stack.psi0)
        psi1 = self._advance(
            self.excited, stack.psi1, self._up(p0, stack.psi0), self._up(p1, psi0)
        )
        psi2g = self._advance(
            self.ground, stack.psi2g,
            self._down(np.conj(p0), stack.psi1), self._down(np.conj(p1), psi1),
        )
        if not probing:
            return replace(stack, time=t1, psi0=psi0, psi1=psi1, psi2g=psi2g)

        q0 = self.fields.probe_at(t)[:, None, None]
        q1 = self.fields.probe_at(t1)[:, None, None]
        chi0 = self._advance(self.excited, stack.chi0, self._up(q0, stack.psi0), self._up(q1, psi0))
        chi2 = self._advance(self.excited, stack.chi2, self._up(q0, stack.psi2g), self._up(q1, psi2g))
        se = self._advance(
            self.ground, stack.se, self._down(np.conj(q0), stack.psi1), self._down(np.conj(q1), psi1)
        )
        esa = None
        if self.doubly is not None:
            esa = self._advance(
                self.doubly, stack.esa,
                self._to_doubly(q0, stack.psi1), self._to_doubly(q1, psi1),
            )
        return PerturbativeStack(t1, psi0, psi1, psi2g, chi0, chi2, se, esa)

    def rewind(self, stack: PerturbativeStack, steps: int) -> PerturbativeStack:
        """
        Evolve the pump-order wavepackets freely `steps` steps back in time.

        Only valid before any probe interaction; the absorbing potential is
        left out so the backward steps stay unitary.
        """
        grid, dt = self.numerics.grid, -self.dt
        ground = Propagator.for_surface(self.model.ground, grid, dt)
        excited = Propagator.for_sites(self.model, grid, dt, shift=-self.fields.reference)
        psi0, psi1, psi2g = stack.psi0, stack.psi1, stack.psi2g
        for _ in range(steps):
            psi0, psi1, psi2g = ground.step(psi0), excited.step(psi1), ground.step(psi2g)
        return replace(stack, time=stack.time + steps * dt, psi0=psi0, psi1=psi1, psi2g=psi2g)

    def initial_stack(self, psi0: np.ndarray, t0: float) -> PerturbativeStack:
        g = psi0.size
        s = self.model.n_sites
        batch = len(self.fields.delays)
        psi0 = psi0.astype(complex).reshape(1, 1, g)
        return PerturbativeStack(
            time=t0,
            psi0=psi0,
            psi1=np.zeros((1, s, g), complex),
            psi2g=np.zeros((1, 1, g), complex),
            chi0=np.zeros((batch, s, g), complex),
            chi2=np.zeros((batch, s, g), complex),
            se=np.zeros((batch, 1, g), complex),
            esa=np.zeros((batch, 1, g), complex) if self.doubly is not None else None,
        )

    def check(self, stack: PerturbativeStack, reference_norm: float):
        norm = float(self.ground.norm(stack.psi0)[0])
        if not math.isfinite(norm) or norm > reference_norm * (1 + NORM_LIMIT):
            raise InstabilityError(f"ground wavepacket norm {norm} at t={stack.time:.3f}")
        for name in ("psi1", "chi0", "chi2", "se"):
            if not np.all(np.isfinite(getattr(stack, name))):
                raise InstabilityError(f"{name} is no longer finite at t={stack.time:.3f}")


def propagate_step(stack: PerturbativeStack, propagator: PumpProbePropagator) -> PerturbativeStack:
    return propagator.propagate_step(stack)


def run_window(pump: GaussianPulse, probe: GaussianPulse, times) -> tuple[float, float]:
    """Start and end of the propagation: six widths before the first pulse and after the last."""
    t_p = pump.center_time
    start = min(t_p - 6 * pump.sigma, t_p + float(np.min(times)) - 6 * probe.sigma)
    end = t_p + float(np.max(times)) + 6 * probe.sigma
    return start, end


def pump_probe_signal(
    model: VibronicModel,
    pump: GaussianPulse,
    probe: GaussianPulse,
    times,
    initial_vib_state: int = 0,
    numerics: GridNumerics = GridNumerics(),
) -> PumpProbeTrace:
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        raise RangeError("no waiting times requested")
    if times.min() < 0 or times.max() > numerics.total_time:
        raise RangeError(
            f"waiting times must lie in [0, {numerics.total_time}], got [{times.min()}, {times.max()}]"
        )

    engine = PumpProbePropagator(model, pump, probe, times, numerics)
    ground = vibrational_eigenbasis(model.ground, numerics.grid, initial_vib_state + 1)
    psi0 = ground.vectors[:, initial_vib_state]

    start, end = run_window(pump, probe, times)
    dt = numerics.dt
    pump_steps = math.ceil((pump.center_time + 6 * pump.sigma - start) / dt)
    # the probe stage opens six probe widths before the earliest probe
    first_probe = pump.center_time + float(times.min()) - 6 * probe.sigma
    back = max(0, math.floor((start + pump_steps * dt - first_probe) / dt))
    probe_steps = math.ceil((end - start) / dt) - pump_steps + back

    stack = engine.initial_stack(psi0, start)
    reference = float(engine.ground.norm(stack.psi0)[0])
    logger.debug(
        f"grid run: {pump_steps} pump steps, {back} back, {probe_steps} probe steps of {dt} "
        f"for {len(times)} delays on {numerics.grid.points} points"
    )
    # the pump completes before any probe interaction, as in the sum-over-states signal
    for k in range(pump_steps):
        stack = engine.propagate_step(stack, probing=False)
        if k % CHECK_EVERY == 0:
            engine.check(stack, reference)
    stack = engine.rewind(stack, back)
    for k in range(probe_steps):
        stack = engine.propagate_step(stack, pumping=False)
        if k % CHECK_EVERY == 0:
            engine.check(stack, reference)
    engine.check(stack, reference)

    se = np.sum(np.abs(stack.se) ** 2, axis=(1, 2))
    gsb = -2 * np.sum(stack.chi0.conj() * stack.chi2, axis=(1, 2)).real
    esa = -np.sum(np.abs(stack.esa) ** 2, axis=(1, 2)) if stack.esa is not None else None
    total = se + gsb + (esa if esa is not None else 0)
    return PumpProbeTrace(times, total, se, esa, gsb, "grid")
