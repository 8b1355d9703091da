import numpy as np
import pytest

from cohwit import dynamics
from cohwit.dynamics import CapSpec, GridNumerics, Propagator
from cohwit.ensemble import Ensemble, OrientationScheme, ensemble_pump_probe
from cohwit.errors import InvalidParameter, RangeError, ResolutionError
from cohwit.model import GridSpec, build_dimer, build_monomer, vibrational_eigenbasis
from cohwit.pulse import GaussianPulse
from cohwit.sos import build_sos_basis, pump_probe_sos

GRID = GridSpec(64, 0.3)


def gaussian(grid, x0=1.0):
    psi = np.exp(-((grid.axis - x0) ** 2) / 2).astype(complex)
    return (psi / np.linalg.norm(psi))[None, None, :]


def test_cap_requires_absorption():
    with pytest.raises(InvalidParameter):
        CapSpec(amplitude=complex(-1.0, 1.0))
    with pytest.raises(InvalidParameter):
        CapSpec(width=0.0)


def test_cap_profile_vanishes_in_the_middle():
    profile = CapSpec(width=3.0).profile(GRID.axis)
    assert profile[len(profile) // 2] == 0
    assert profile[0].imag < 0


def test_norm_is_conserved_without_cap():
    surface = build_monomer(1.5, 0.02).sites[0]
    prop = Propagator.for_surface(surface, GRID, 0.01, CapSpec(enabled=False))
    psi = gaussian(GRID)
    for _ in range(300):
        nxt = prop.step(psi)
        assert abs(prop.norm(nxt)[0] - prop.norm(psi)[0]) < 1e-12
        psi = nxt


def test_cap_only_absorbs():
    surface = build_monomer(1.0, 0.0).sites[0]
    prop = Propagator.for_surface(surface, GRID, 0.01, CapSpec(width=2.0))
    psi = gaussian(GRID, x0=6.0)
    norms = [prop.norm(psi)[0]]
    for _ in range(200):
        psi = prop.step(psi)
        norms.append(prop.norm(psi)[0])
    assert np.all(np.diff(norms) <= 1e-14)
    assert norms[-1] < norms[0]


def test_energy_drift():
    surface = build_monomer(1.5, 0.02).sites[0]
    prop = Propagator.for_surface(surface, GridSpec(128, 0.25), 0.01, CapSpec(enabled=False))
    psi = gaussian(prop.grid, x0=0.8)
    start = prop.energy(psi)[0]
    for _ in range(1000):
        psi = prop.step(psi)
    assert abs(prop.energy(psi)[0] - start) < 1e-4


def test_eigenstate_is_stationary():
    surface = build_monomer(1.0, 0.0).ground
    prop = Propagator.for_surface(surface, GridSpec(128, 0.25), 0.01, CapSpec(enabled=False))
    basis = vibrational_eigenbasis(surface, prop.grid, 1)
    psi = basis.vectors[:, 0].astype(complex)[None, None, :]
    start = prop.position(psi)[0]
    for _ in range(200):
        psi = prop.step(psi)
    assert abs(prop.position(psi)[0] - start) < 1e-8


def test_wavepacket_oscillates_classically():
    surface = build_monomer(1.0, 0.0).ground
    prop = Propagator.for_surface(surface, GridSpec(128, 0.25), 0.01, CapSpec(enabled=False))
    psi = gaussian(prop.grid, x0=1.0)
    # half a period of a unit-frequency oscillator
    for _ in range(314):
        psi = prop.step(psi)
    assert prop.position(psi)[0] == pytest.approx(-1.0, abs=1e-2)


def test_waiting_times_outside_horizon():
    monomer = build_monomer(1.5, 0.02)
    p = GaussianPulse(1.5, 0.3)
    with pytest.raises(RangeError):
        dynamics.pump_probe_signal(monomer, p, p, [-1.0, 1.0])
    with pytest.raises(RangeError):
        dynamics.pump_probe_signal(monomer, p, p, [30.0], numerics=GridNumerics(total_time=25))


def test_mismatched_polarization():
    monomer = build_monomer(1.5, 0.02)
    with pytest.raises(InvalidParameter):
        dynamics.pump_probe_signal(
            monomer, GaussianPulse(1.5, 0.3), GaussianPulse(1.5, 0.3, polarization=(0, 1, 0)), [1.0]
        )


def test_run_window_covers_the_pulses():
    pump, probe = GaussianPulse(1.0, 0.3), GaussianPulse(1.0, 0.2)
    start, end = dynamics.run_window(pump, probe, [0.0, 5.0])
    assert start == pytest.approx(-1.8)
    assert end == pytest.approx(6.2)


def test_undisplaced_monomer_gives_flat_trace():
    monomer = build_monomer(1.0, 0.0, Omega_e=0.0)
    p = GaussianPulse(1.0, 0.3)
    # from the cutoff 3 (sigma + sigma) on
    times = np.linspace(1.8, 6.0, 22)
    trace = dynamics.pump_probe_signal(monomer, p, p, times)
    assert np.ptp(trace.total) < 1e-8 * np.max(np.abs(trace.total))
    assert trace.engine == "grid"
    assert trace.esa is None


@pytest.mark.slow
def test_grid_matches_sum_over_states():
    monomer = build_monomer(1.5, 0.02)
    p = GaussianPulse(1.5, 0.3)
    times = np.arange(1.8, 20.0 + 1e-9, 0.1)
    grid = dynamics.pump_probe_signal(monomer, p, p, times)
    sos = pump_probe_sos(build_sos_basis(monomer), p, p, times)
    rms = np.sqrt(np.mean((grid.total - sos.total) ** 2) / np.mean(sos.total**2))
    assert rms < 1e-3


@pytest.mark.slow
def test_grid_matches_sum_over_states_for_dimer():
    dimer = build_dimer()
    p = GaussianPulse(1.0, 0.3)
    times = np.arange(1.8, 8.0 + 1e-9, 0.2)
    grid = ensemble_pump_probe(dimer, p, p, times, Ensemble(orientation=OrientationScheme.fixed()), engine="grid")
    sos = ensemble_pump_probe(dimer, p, p, times, Ensemble(orientation=OrientationScheme.fixed()), engine="sos")
    for name in ("se", "esa", "gsb"):
        a, b = getattr(grid, name), getattr(sos, name)
        assert np.sqrt(np.mean((a - b) ** 2)) < 1e-3 * np.max(np.abs(sos.total))


def test_rewind_undoes_free_steps():
    monomer = build_monomer(1.5, 0.02)
    p = GaussianPulse(1.5, 0.3)
    numerics = GridNumerics(cap=CapSpec(enabled=False))
    engine = dynamics.PumpProbePropagator(monomer, p, p, [2.0], numerics)
    psi0 = vibrational_eigenbasis(monomer.ground, numerics.grid, 1).vectors[:, 0]
    stack = engine.initial_stack(psi0, -1.8)
    for _ in range(360):
        stack = engine.propagate_step(stack, probing=False)
    later = stack
    for _ in range(40):
        later = engine.propagate_step(later, pumping=False, probing=False)
    back = engine.rewind(later, 40)
    assert back.time == pytest.approx(stack.time)
    assert np.allclose(back.psi1, stack.psi1, atol=1e-10)
    assert np.allclose(back.psi2g, stack.psi2g, atol=1e-10)
    assert np.linalg.norm(stack.psi1) > 0.1


def test_thermal_grid_resolves_room_temperature_states():
    model = build_monomer(1.5, 0.02)
    count = Ensemble(temperature=294.0).thermal_quanta() + 2
    basis = vibrational_eigenbasis(model.ground, GridNumerics().thermal_grid, count)
    assert len(basis.energies) == count
    with pytest.raises(ResolutionError):
        vibrational_eigenbasis(model.ground, GridSpec(64, 0.5), count)
