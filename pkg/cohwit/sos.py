"""
cohwit.sos

Sum-over-states evaluation of linear and pump-probe spectra.

The singly-excited vibronic eigenstates phi are found by diagonalizing the
excitonic block in the product basis |i, nu_n> of site i and ground-surface
vibrational state n. The projections U[phi, i, n] = <phi|i, nu_n> then give
the absorption and Raman spectra, the closed-form pump-probe signal and its
expansion in the pulse durations.

Waiting times are measured from the pump center.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.special
from loguru import logger

from cohwit.ensemble import OrientationScheme, ThermalWeights
from cohwit.errors import EmptySpectrum, InvalidParameter, ResolutionError, TruncationError
from cohwit.model import GridSpec, VibronicModel, mode_eigenstates
from cohwit.pulse import GaussianPulse

WARN_DEFECT = 1e-4
MAX_DEFECT = 1e-3


@dataclass(frozen=True)
class BasisNumerics:
    grid: GridSpec = GridSpec(192, 0.2)
    thermal_grid: GridSpec = GridSpec(320, 0.15)
    truncation: int = 20
    tolerance: float = 1e-4

    @staticmethod
    def decode(data: dict) -> "BasisNumerics":
        return BasisNumerics(
            grid=GridSpec(int(data.get("points", 192)), float(data.get("spacing", 0.2))),
            thermal_grid=GridSpec(**data.get("thermal_grid", {"points": 320, "spacing": 0.15})),
            truncation=int(data.get("truncation", 20)),
            tolerance=float(data.get("tolerance", 1e-4)),
        )

    def encode(self) -> dict:
        return {
            "points": self.grid.points,
            "spacing": self.grid.spacing,
            "thermal_grid": {"points": self.thermal_grid.points, "spacing": self.thermal_grid.spacing},
            "truncation": self.truncation,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True, eq=False)
class SosBasis:
    """
    The singly-excited eigenstates in the ground product basis.

    `projections[phi, i, n]` is <phi|i, nu_n>; `f_vectors[n, m]` is
    <nu_n|m> for the doubly-excited eigenstates m, when the model has them.
    """

    model: VibronicModel
    grid: GridSpec
    truncation: int
    reserve: int
    counts: tuple[int, ...]
    ground_quanta: np.ndarray
    ground_energies: np.ndarray
    energies: np.ndarray
    projections: np.ndarray
    f_energies: np.ndarray | None = None
    f_vectors: np.ndarray | None = None
    defect: float = 0.0

    @property
    def n_ground(self) -> int:
        return len(self.ground_energies)

    @property
    def has_doubly(self) -> bool:
        return self.f_energies is not None and self.model.has_doubly

    @cached_property
    def f_projections(self) -> np.ndarray:
        """G[phi, i, m] = sum_n U[phi, i, n] F[n, m]."""
        return np.einsum("fin,nm->fim", self.projections, self.f_vectors)

    def index_of(self, quanta) -> int:
        matches = np.flatnonzero(np.all(self.ground_quanta == np.asarray(quanta), axis=1))
        if len(matches) == 0:
            raise ResolutionError(f"ground state {tuple(quanta)} is outside the basis")
        return int(matches[0])

    def transition_frequencies(self) -> np.ndarray:
        """omega_phi - E_n, shape (n_phi, n_ground)."""
        return self.energies[:, None] - self.ground_energies[None, :]


def _surface_matrix(surface, ground, factors, grid) -> np.ndarray:
    """(V_surface - V_ground) in the ground product basis."""
    eyes = [np.eye(v.shape[1]) for v in factors]
    total = None
    for k, v in enumerate(factors):
        dv = surface.mode_potential(k, grid.axis) - ground.mode_potential(k, grid.axis)
        w = v.T @ (dv[:, None] * v)
        parts = [w if j == k else eyes[j] for j in range(len(factors))]
        term = parts[0]
        for p in parts[1:]:
            term = np.kron(term, p)
        total = term if total is None else total + term
    return total + (surface.offset - ground.offset) * np.eye(total.shape[0])


def _diagonalize(
    model: VibronicModel, truncation: int, reserve: int, grid: GridSpec, beta: float = math.inf
) -> SosBasis:
    count = truncation + reserve
    counts = (count,) * model.n_modes
    factors, mode_energies = [], []
    for k in range(model.n_modes):
        e, v = mode_eigenstates(grid, model.ground.frequencies[k], model.ground.shifts[k], count)
        factors.append(v)
        mode_energies.append(e)

    quanta = np.array(list(itertools.product(*(range(c) for c in counts))))
    energies = model.ground.offset + sum(mode_energies[k][quanta[:, k]] for k in range(model.n_modes))
    n_ground = len(energies)

    blocks = [[None] * model.n_sites for _ in range(model.n_sites)]
    coupling = model.coupling_matrix
    for i, site in enumerate(model.sites):
        for j in range(model.n_sites):
            if i == j:
                blocks[i][j] = np.diag(energies) + _surface_matrix(site, model.ground, factors, grid)
            else:
                blocks[i][j] = coupling[i, j] * np.eye(n_ground)
    h = np.block(blocks)
    omega, vectors = scipy.linalg.eigh(h)
    projections = vectors.T.reshape(len(omega), model.n_sites, n_ground)

    f_energies = f_vectors = None
    if model.doubly is not None:
        hf = np.diag(energies) + _surface_matrix(model.doubly, model.ground, factors, grid)
        f_energies, f_vectors = scipy.linalg.eigh(hf)

    edge = np.any(quanta >= np.asarray(counts) - 2, axis=1)
    initial = np.all(quanta <= reserve, axis=1)
    edge_weight = (projections[:, :, edge] ** 2).sum(axis=(1, 2))
    overlap = (projections[:, :, initial] ** 2).sum(axis=1)
    leakage = edge_weight @ overlap
    if math.isinf(beta):
        defect = float(np.max(leakage))
    else:
        # leakage weighted by the Boltzmann population of each initial state
        boltzmann = np.exp(-beta * (energies[initial] - energies.min()))
        defect = float(leakage @ boltzmann / boltzmann.sum())

    logger.debug(
        f"sos basis: {count} states per mode, {len(omega)} vibronic states, defect {defect:.2e}"
    )
    return SosBasis(
        model, grid, truncation, reserve, counts, quanta, energies, omega, projections,
        f_energies, f_vectors, defect,
    )


def build_sos_basis(
    model: VibronicModel,
    truncation: int = 20,
    reserve: int = 0,
    grid: GridSpec = BasisNumerics.grid,
    tol: float = 1e-4,
    beta: float = math.inf,
) -> SosBasis:
    """
    Diagonalize with `truncation + reserve` ground states per mode, growing
    the truncation until the completeness defect is below `tol`.

    `reserve` is the highest initial quantum per mode. A finite `beta`
    weights the defect of each initial state by its Boltzmann population.
    """
    step = 10 + reserve
    basis = _diagonalize(model, truncation, reserve, grid, beta)
    for _ in range(3):
        if basis.defect <= tol:
            break
        logger.debug(f"truncation {basis.truncation} leaves defect {basis.defect:.2e}, growing")
        try:
            basis = _diagonalize(model, basis.truncation + step, reserve, grid, beta)
        except ResolutionError as e:
            logger.debug(f"cannot grow the basis further: {e}")
            break

    if basis.defect > MAX_DEFECT:
        raise TruncationError(
            f"completeness defect {basis.defect:.2e} exceeds {MAX_DEFECT:g} at truncation {basis.truncation}"
        )
    if basis.defect > WARN_DEFECT:
        logger.warning(f"sum-over-states basis only converged to {basis.defect:.2e}")
    return basis


@dataclass(frozen=True, eq=False)
class StickSpectrum:
    frequencies: np.ndarray
    weights: np.ndarray
    kind: str = "absorption"

    def __len__(self):
        return len(self.frequencies)

    def total(self) -> float:
        return float(np.sum(self.weights))

    def moments(self) -> tuple[float, float]:
        """Weight-normalized mean and central second moment."""
        total = self.total()
        if len(self) == 0 or not total > 0:
            raise EmptySpectrum(f"{self.kind} spectrum carries no weight")
        mean = float(np.sum(self.weights * self.frequencies) / total)
        variance = float(np.sum(self.weights * (self.frequencies - mean) ** 2) / total)
        return mean, variance

    def broadened(self, frequencies, width: float) -> np.ndarray:
        """A Gaussian-broadened curve, for plotting only."""
        f = np.asarray(frequencies, dtype=float)
        shape = np.exp(-((f[:, None] - self.frequencies[None, :]) ** 2) / (2 * width**2))
        return shape @ self.weights / (math.sqrt(2 * math.pi) * width)

    def shifted(self, c: float) -> "StickSpectrum":
        return StickSpectrum(self.frequencies + c, self.weights, self.kind)


def spectral_moments(s: StickSpectrum) -> tuple[float, float]:
    return s.moments()


def _populations(populations: ThermalWeights | None) -> list[tuple[int, float]]:
    if populations is None:
        return [(0, 1.0)]
    return [(int(n), float(p)) for n, p in populations.items()]


def _scheme(orientation: OrientationScheme | None, polarization) -> OrientationScheme:
    if orientation is None:
        return OrientationScheme.fixed(polarization)
    return orientation


def absorption_spectrum(
    basis: SosBasis,
    populations: ThermalWeights | None = None,
    orientation: OrientationScheme | None = None,
    polarization=(1.0, 0.0, 0.0),
) -> StickSpectrum:
    scheme = _scheme(orientation, polarization)
    dip = basis.model.dipole_matrix
    w2 = scheme.rank2(dip, dip)
    u = basis.projections
    freqs, weights = [], []
    for n, p in _populations(populations):
        col = u[:, :, n]
        weights.append(p * np.einsum("ij,fi,fj->f", w2, col, col))
        freqs.append(basis.energies - basis.ground_energies[n])
    freqs, weights = np.concatenate(freqs), np.concatenate(weights)
    total = weights.sum()
    keep = np.abs(weights) > 1e-15 * abs(total) if total != 0 else np.zeros(len(weights), bool)
    order = np.argsort(freqs[keep], kind="stable")
    return StickSpectrum(freqs[keep][order], np.clip(weights[keep][order], 0, None), "absorption")


@dataclass(frozen=True, eq=False)
class RamanSpectrum(StickSpectrum):
    profile_frequencies: np.ndarray = field(default_factory=lambda: np.zeros(0))
    profile: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma: float = 0.01

    @property
    def raman_mean(self) -> float:
        norm = scipy.integrate.trapezoid(self.profile, self.profile_frequencies)
        if not norm > 0:
            raise EmptySpectrum("raman profile carries no weight")
        return float(
            scipy.integrate.trapezoid(self.profile * self.profile_frequencies, self.profile_frequencies)
            / norm
        )


def resonance_raman_spectrum(
    basis: SosBasis,
    populations: ThermalWeights | None = None,
    gamma: float = 0.01,
    orientation: OrientationScheme | None = None,
    polarization=(1.0, 0.0, 0.0),
) -> RamanSpectrum:
    """
    The emitted-frequency Raman spectrum with the incident frequency
    integrated out, as the modulus of the Kramers-Heisenberg amplitude

        R_nn'(w) = sum_phi <n'|mu|phi><phi|mu|n> / (w - w_phi + E_n' + i gamma)

    summed over final states n'.
    """
    if not gamma > 0:
        raise InvalidParameter(f"raman linewidth gamma must be positive, got {gamma}")
    scheme = _scheme(orientation, polarization)
    dip = basis.model.dipole_matrix
    w4 = scheme.rank4(dip, dip, dip, dip)
    u = basis.projections
    pops = _populations(populations)

    # stick weights: the diagonal phi = phi' terms, at w_phi - E_n'
    pairs = []
    for n, p in pops:
        diag = p * np.einsum("iqpj,fim,fq,fjm,fp->fm", w4, u, u[:, :, n], u, u[:, :, n], optimize=True)
        pairs.append((n, p, diag))
    peak = max(np.abs(d).max() for _, _, d in pairs)

    freqs, weights, terms = [], [], []
    for n, p, diag in pairs:
        for m in np.flatnonzero(np.abs(diag).sum(axis=0) > 1e-10 * peak):
            freqs.append(basis.energies - basis.ground_energies[m])
            weights.append(diag[:, m])
            terms.append((n, p, m))
    freqs, weights = np.concatenate(freqs), np.concatenate(weights)
    keep = weights > 1e-10 * peak
    grid = np.arange(freqs[keep].min() - 5 * gamma, freqs[keep].max() + 5 * gamma + gamma / 10, gamma / 5)

    profile = np.zeros(len(grid))
    for n, p, m in terms:
        # amplitudes per (i, q) dipole pair
        coeff = np.einsum("fi,fq->iqf", u[:, :, m], u[:, :, n])
        poles = basis.energies - basis.ground_energies[m]
        active = np.abs(coeff).max(axis=(0, 1)) > 1e-12
        denom = 1.0 / (grid[:, None] - poles[None, active] + 1j * gamma)
        r = np.einsum("iqf,wf->iqw", coeff[:, :, active], denom)
        profile += p * np.einsum("iqpj,iqw,jpw->w", w4, r, r.conj()).real

    order = np.argsort(freqs[keep], kind="stable")
    return RamanSpectrum(
        freqs[keep][order], weights[keep][order], "raman",
        profile_frequencies=grid, profile=profile, gamma=gamma,
    )


def raman_mean(spectrum: RamanSpectrum) -> float:
    return spectrum.raman_mean


@dataclass(frozen=True)
class _Field:
    omega: float
    sigma: float
    eta: float

    @staticmethod
    def of(pulse: GaussianPulse) -> "_Field":
        return _Field(pulse.center_freq, pulse.sigma, pulse.eta)

    def amp(self, x):
        return self.eta * np.exp(-(self.sigma**2) * (np.asarray(x) - self.omega) ** 2 / 2)


@dataclass(frozen=True, eq=False)
class PumpProbeTrace:
    times: np.ndarray
    total: np.ndarray
    se: np.ndarray | None
    esa: np.ndarray | None
    gsb: np.ndarray | None
    engine: str = "sos"

    def scaled(self, c: float) -> "PumpProbeTrace":
        def s(x):
            return None if x is None else c * x

        return PumpProbeTrace(self.times, c * self.total, s(self.se), s(self.esa), s(self.gsb), self.engine)

    @staticmethod
    def combine(traces: list["PumpProbeTrace"], factors) -> "PumpProbeTrace":
        """The weighted sum of traces sampled on the same waiting times."""

        def add(name):
            parts = [getattr(t, name) for t in traces]
            if any(p is None for p in parts):
                return None
            return sum(f * p for f, p in zip(factors, parts))

        first = traces[0]
        return PumpProbeTrace(
            first.times, add("total"), add("se"), add("esa"), add("gsb"), first.engine
        )


def _check_pulses(pump: GaussianPulse, probe: GaussianPulse):
    if not np.allclose(pump.polarization, probe.polarization):
        raise InvalidParameter("pump and probe must share one polarization")


def _phase(basis: SosBasis, times) -> np.ndarray:
    return np.exp(-1j * np.outer(times, basis.energies))


def _stimulated(basis, n, times, pump_factor, probe_factor):
    """C[i, q, t, n'] = sum_phi phase U[phi,q,n] pump[phi] U[phi,i,n'] probe[phi,n']."""
    u = basis.projections
    left = _phase(basis, times)[None, :, :] * (u[:, :, n] * pump_factor[:, None]).T[:, None, :]
    right = u * probe_factor[:, None, :]
    return np.einsum("qtf,fim->iqtm", left, right, optimize=True)


def _excited_absorption(basis, n, times, pump_factor, probe_factor):
    """D[i, q, t, m] with the probe lifting phi to the doubly-excited state m."""
    u = basis.projections
    left = _phase(basis, times)[None, :, :] * (u[:, :, n] * pump_factor[:, None]).T[:, None, :]
    right = basis.f_projections * probe_factor[:, None, :]
    return np.einsum("qtf,fim->iqtm", left, right, optimize=True)


def _weights(basis: SosBasis, scheme: OrientationScheme):
    dip = basis.model.dipole_matrix
    w = scheme.pathway_weights(dip, dip, dip, dip)
    wf = None
    if basis.has_doubly:
        fdip = basis.model.doubly_dipole_matrix
        wf = scheme.pathway_weights(fdip, dip, dip, fdip)
    return w, wf


def _se_sum(w, c):
    return np.einsum("iqpj,iqtm,jptm->t", w, c, c.conj(), optimize=True).real


def _se(basis, pump: _Field, probe: _Field, times, pops, w):
    out = np.zeros(len(times))
    wphi = basis.transition_frequencies()
    for n, p in pops:
        c = _stimulated(basis, n, times, pump.amp(wphi[:, n]), probe.amp(wphi))
        out += p * _se_sum(w, c)
    return out


def _esa(basis, pump: _Field, probe: _Field, times, pops, wf):
    out = np.zeros(len(times))
    wphi = basis.transition_frequencies()
    up = basis.f_energies[None, :] - basis.energies[:, None]
    for n, p in pops:
        d = _excited_absorption(basis, n, times, pump.amp(wphi[:, n]), probe.amp(up))
        out -= p * _se_sum(wf, d)
    return out


def _gsb_kernel(pump: _Field, a, b):
    """Time-ordered double interaction with one pulse, including the Dawson term."""
    s = pump.sigma
    return pump.eta**2 * (
        np.exp(-(s**2) * (a**2 + b**2) / 2)
        - 1j * (2 / math.sqrt(math.pi)) * scipy.special.dawsn(s * (a + b) / 2) * np.exp(-(s**2) * (a - b) ** 2 / 4)
    )


def _gsb_from(basis, times, pops, w, probe_factor, kernel):
    """Re sum_n' exp(-i (E_n' - E_n) T) M[n'] for the given probe and pump factors."""
    u = basis.projections
    out = np.zeros(len(times))
    for n, p in pops:
        pf = probe_factor(n)
        a = np.einsum("fi,fqm->iqm", u[:, :, n] * pf[:, n][:, None], u * pf[:, None, :])
        b = np.einsum("fpm,fj,fm->pjm", u, u[:, :, n], kernel(n))
        m = np.einsum("iqpj,iqm,pjm->m", w, a, b)
        phase = np.exp(-1j * np.outer(times, basis.ground_energies - basis.ground_energies[n]))
        out += p * (phase @ m).real
    return out


def _gsb(basis, pump: _Field, probe: _Field, times, pops, w):
    wphi = basis.transition_frequencies()

    def kernel(n):
        return _gsb_kernel(pump, wphi - pump.omega, (wphi[:, n] - pump.omega)[:, None])

    return _gsb_from(basis, times, pops, w, lambda n: probe.amp(wphi), kernel)


def pump_probe_sos(
    basis: SosBasis,
    pump: GaussianPulse,
    probe: GaussianPulse,
    times,
    populations: ThermalWeights | None = None,
    orientation: OrientationScheme | None = None,
) -> PumpProbeTrace:
    _check_pulses(pump, probe)
    times = np.asarray(times, dtype=float)
    scheme = _scheme(orientation, pump.polarization)
    w, wf = _weights(basis, scheme)
    pops = _populations(populations)
    fp, fq = _Field.of(pump), _Field.of(probe)

    se = _se(basis, fp, fq, times, pops, w)
    gsb = _gsb(basis, fp, fq, times, pops, w)
    esa = _esa(basis, fp, fq, times, pops, wf) if basis.has_doubly else None
    total = se + gsb + (esa if esa is not None else 0)
    return PumpProbeTrace(times, total, se, esa, gsb, "sos")


@dataclass(frozen=True, eq=False)
class ExpansionTerms:
    """Terms of the pump-probe signal ordered by powers of the pulse durations."""

    times: np.ndarray
    se0: np.ndarray
    esa0: np.ndarray
    gsb0: np.ndarray
    se1: np.ndarray
    esa1: np.ndarray
    gsb1: np.ndarray
    gsb2: np.ndarray
    se2_vo: np.ndarray
    esa2_vo: np.ndarray
    se2_pump: np.ndarray
    esa2_pump: np.ndarray
    se2_vo_t0: float
    se2_vo_t0_moment: float

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.se0 + self.esa0 + self.gsb0)))


def _contract(w, y, x):
    return np.einsum("iqpj,iqtm,jptm->t", w, y, x.conj(), optimize=True).real


def expansion_terms(
    basis: SosBasis,
    pump: GaussianPulse,
    probe: GaussianPulse,
    times,
    order: int = 2,
    populations: ThermalWeights | None = None,
    orientation: OrientationScheme | None = None,
) -> ExpansionTerms:
    """
    Expand the pump-probe signal in powers of sigma_P and sigma_P'.

    The first-order SE and ESA parts vanish identically: every field
    amplitude is even in the durations. The second-order SE and ESA
    terms are split into the probe part, which oscillates at vibrational
    frequencies, and the pump part.
    """
    if order not in (1, 2):
        raise InvalidParameter(f"expansion order must be 1 or 2, got {order}")
    _check_pulses(pump, probe)
    times = np.asarray(times, dtype=float)
    scheme = _scheme(orientation, pump.polarization)
    w, wf = _weights(basis, scheme)
    pops = _populations(populations)
    fp, fq = _Field.of(pump), _Field.of(probe)
    eta4 = fp.eta**2 * fq.eta**2
    zeros = np.zeros(len(times))
    wphi = basis.transition_frequencies()

    impulsive_p, impulsive_q = _Field(fp.omega, 0.0, fp.eta), _Field(fq.omega, 0.0, fq.eta)
    se0 = _se(basis, impulsive_p, impulsive_q, times, pops, w)
    gsb0 = _gsb(basis, impulsive_p, impulsive_q, times, pops, w)
    esa0 = _esa(basis, impulsive_p, impulsive_q, times, pops, wf) if basis.has_doubly else zeros

    # field amplitudes depend on the durations only through sigma^2
    se1, esa1 = zeros.copy(), zeros.copy()

    def flat_probe(n):
        return np.full_like(wphi, fq.eta)

    def flat_kernel(n):
        return np.full_like(wphi, fp.eta**2)

    def kernel1(n):
        a = wphi - fp.omega
        b = (wphi[:, n] - fp.omega)[:, None]
        return -1j * fp.sigma * fp.eta**2 * (a + b) / math.sqrt(math.pi)

    gsb1 = _gsb_from(basis, times, pops, w, flat_probe, kernel1)

    result = dict(se0=se0, esa0=esa0, gsb0=gsb0, se1=se1, esa1=esa1, gsb1=gsb1)
    if order == 1:
        result.update(
            gsb2=zeros, se2_vo=zeros, esa2_vo=zeros, se2_pump=zeros, esa2_pump=zeros,
            se2_vo_t0=0.0, se2_vo_t0_moment=0.0,
        )
        return ExpansionTerms(times, **result)

    def kernel2(n):
        a = wphi - fp.omega
        b = (wphi[:, n] - fp.omega)[:, None]
        return -(fp.sigma**2) * fp.eta**2 * (a**2 + b**2) / 2

    gsb2 = _gsb_from(basis, times, pops, w, flat_probe, kernel2)
    gsb2 = gsb2 + _gsb_probe2(basis, fq, times, pops, w, flat_kernel)

    se2_vo, se2_pump = zeros.copy(), zeros.copy()
    esa2_vo, esa2_pump = zeros.copy(), zeros.copy()
    ones_phi, ones = np.ones(len(basis.energies)), np.ones_like(wphi)
    for n, p in pops:
        x = _stimulated(basis, n, times, ones_phi, ones)
        y = _stimulated(basis, n, times, ones_phi, (wphi - fq.omega) ** 2)
        se2_vo -= p * eta4 * fq.sigma**2 * _contract(w, y, x)
        y = _stimulated(basis, n, times, (wphi[:, n] - fp.omega) ** 2, ones)
        se2_pump -= p * eta4 * fp.sigma**2 * _contract(w, y, x)
        if basis.has_doubly:
            up = basis.f_energies[None, :] - basis.energies[:, None]
            xd = _excited_absorption(basis, n, times, ones_phi, np.ones_like(up))
            yd = _excited_absorption(basis, n, times, ones_phi, (up - fq.omega) ** 2)
            esa2_vo += p * eta4 * fq.sigma**2 * _contract(wf, yd, xd)
            yd = _excited_absorption(basis, n, times, (wphi[:, n] - fp.omega) ** 2, np.ones_like(up))
            esa2_pump += p * eta4 * fp.sigma**2 * _contract(wf, yd, xd)

    # the probe part at T = 0, directly and as a moment of the absorption spectrum
    se2_vo_t0 = 0.0
    at_zero = np.zeros(1)
    for n, p in pops:
        x = _stimulated(basis, n, at_zero, ones_phi, ones)
        y = _stimulated(basis, n, at_zero, ones_phi, (wphi - fq.omega) ** 2)
        se2_vo_t0 += p * eta4 * fq.sigma**2 * float(_contract(w, y, x)[0])
    spectrum = absorption_spectrum(basis, populations, scheme)
    moment = float(np.sum(spectrum.weights * (spectrum.frequencies - fq.omega) ** 2))
    se2_vo_t0_moment = eta4 * fq.sigma**2 * spectrum.total() * moment

    result.update(
        gsb2=gsb2, se2_vo=se2_vo, esa2_vo=esa2_vo, se2_pump=se2_pump, esa2_pump=esa2_pump,
        se2_vo_t0=se2_vo_t0, se2_vo_t0_moment=se2_vo_t0_moment,
    )
    return ExpansionTerms(times, **result)


def _gsb_probe2(basis, fq: _Field, times, pops, w, kernel):
    """The GSB part quadratic in the probe duration."""
    u = basis.projections
    wphi = basis.transition_frequencies()
    y = (wphi - fq.omega) ** 2
    scale = -(fq.eta**2) * fq.sigma**2 / 2
    out = np.zeros(len(times))
    for n, p in pops:
        a = scale * (
            np.einsum("fi,fqm->iqm", u[:, :, n] * y[:, n][:, None], u)
            + np.einsum("fi,fqm->iqm", u[:, :, n], u * y[:, None, :])
        )
        b = np.einsum("fpm,fj,fm->pjm", u, u[:, :, n], kernel(n))
        m = np.einsum("iqpj,iqm,pjm->m", w, a, b)
        phase = np.exp(-1j * np.outer(times, basis.ground_energies - basis.ground_energies[n]))
        out += p * (phase @ m).real
    return out
