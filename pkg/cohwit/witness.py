"""
cohwit.witness

The pulse-duration witness: measure how strongly a pump-probe trace
oscillates after the pulses have separated, repeat for a ladder of pulse
durations, and read off whether the oscillations grow or shrink as the
pulses get shorter.

Shrinking oscillations mean a vibrational origin. Oscillations that grow
toward the impulsive limit can only come from electronic coherence.
"""

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
from loguru import logger

from cohwit.dynamics import GridNumerics
from cohwit.ensemble import Ensemble, ensemble_pump_probe, prepare
from cohwit.errors import InvalidParameter, RangeError, SamplingError, WindowError
from cohwit.model import VibronicModel
from cohwit.pulse import GaussianPulse, fwhm_of_sigma
from cohwit.sos import BasisNumerics, absorption_spectrum, resonance_raman_spectrum
from cohwit.units import PhysicalUnits


class Centering(enum.StrEnum):
    ABSORPTION_MEAN = "absorption_mean"
    RAMAN_MEAN = "raman_mean"
    MIDPOINT = "midpoint"
    MANUAL = "manual"


class Coherence(enum.StrEnum):
    VIBRATIONAL = "vibrational"
    ELECTRONIC_PRESENT = "electronic_present"
    INCONCLUSIVE = "inconclusive"


def default_ladder() -> tuple[float, ...]:
    return tuple(float(s) for s in np.geomspace(0.05, 1.5, 12))


@dataclass(frozen=True)
class WitnessNumerics:
    time_step: float = 0.05
    t_final: float = 25.0
    slope_tol: float = 1e-3
    raman_gamma: float = 0.01
    refine_peak: bool = False
    basis: BasisNumerics = BasisNumerics()
    grid: GridNumerics = GridNumerics()

    def __post_init__(self):
        if not self.time_step > 0:
            raise InvalidParameter(f"time_step must be positive, got {self.time_step}")


def cutoff_time(sigma_pump_max: float, sigma_probe_max: float) -> float:
    """The first waiting time at which the pulses no longer overlap."""
    return 3 * (sigma_pump_max + sigma_probe_max)


def _uniform(times: np.ndarray):
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-12):
        raise WindowError("waiting times are not uniformly sampled")
    return float(steps[0])


def _window(times, signal, t_min: float, t_final: float):
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    mask = (times >= t_min - 1e-9) & (times <= t_final + 1e-9)
    if mask.sum() < 2:
        raise WindowError(f"fewer than two samples in the window [{t_min:.3g}, {t_final:.3g}]")
    t, s = times[mask], signal[mask]
    _uniform(t)
    return t, s


def oscillation_strength(
    times,
    signal,
    sigma_pump_max: float,
    sigma_probe_max: float,
    t_final: float,
) -> float:
    t, s = _window(times, signal, cutoff_time(sigma_pump_max, sigma_probe_max), t_final)
    length = t[-1] - t[0]
    mean = scipy.integrate.trapezoid(s, t) / length
    return float(scipy.integrate.trapezoid((s - mean) ** 2, t))


def fourier_peak_amplitude(times, trace, window: tuple[float, float]) -> float:
    """
    The amplitude of the mean-subtracted trace's discrete transform summed
    over the bins of the angular frequency window. A pure A cos(w T) sampled
    over whole periods gives A for any window around w.
    """
    times = np.asarray(times, dtype=float)
    trace = np.asarray(trace, dtype=float)
    if len(times) < 2:
        raise WindowError("need at least two samples")
    dt = _uniform(times)
    lo, hi = window
    nyquist = math.pi / dt
    if lo < 0 or hi > nyquist or lo > hi:
        raise RangeError(f"frequency window [{lo}, {hi}] is outside [0, {nyquist:.4g}]")
    n = len(trace)
    spectrum = np.fft.rfft(trace - trace.mean())
    freqs = 2 * np.pi * np.fft.rfftfreq(n, d=dt)
    amplitude = 2 * np.abs(spectrum) / n
    inside = (freqs >= lo) & (freqs <= hi)
    if not inside.any():
        raise RangeError(f"no frequency bin of spacing {freqs[1]:.4g} lies in [{lo}, {hi}]")
    return float(amplitude[inside].sum())


@dataclass(frozen=True, eq=False)
class WitnessCurve:
    sigmas: tuple[float, ...]
    gammas: tuple[float, ...]
    t_min: float
    t_final: float
    centering: Centering
    center_freq: float
    signal_scale: float = 0.0
    frequency_window: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.sigmas) != len(self.gammas):
            raise InvalidParameter("one gamma per sigma expected")
        if np.any(np.diff(self.sigmas) <= 0):
            raise InvalidParameter("witness sigmas must be strictly increasing")
        if any(g < 0 for g in self.gammas):
            raise InvalidParameter("oscillation strengths must be nonnegative")

    def __len__(self):
        return len(self.sigmas)

    @property
    def fwhms(self) -> tuple[float, ...]:
        return tuple(fwhm_of_sigma(s) for s in self.sigmas)

    def scaled(self, c: float) -> "WitnessCurve":
        """The curve of a trace scaled by c."""
        return WitnessCurve(
            self.sigmas, tuple(c * c * g for g in self.gammas), self.t_min, self.t_final,
            self.centering, self.center_freq, c * c * self.signal_scale, self.frequency_window,
        )


@dataclass(frozen=True)
class WitnessTime:
    sigma: float
    unbounded: bool = False

    @property
    def fwhm(self) -> float:
        return fwhm_of_sigma(self.sigma)

    def in_fs(self, units: PhysicalUnits) -> float:
        """The FWHM witness time in femtoseconds."""
        return units.to_fs(self.fwhm)


def _slope_signs(curve: WitnessCurve, slope_tol: float) -> np.ndarray:
    sigmas = np.asarray(curve.sigmas)
    gammas = np.asarray(curve.gammas)
    slopes = np.diff(gammas) / np.diff(sigmas)
    tau = slope_tol * gammas.max() / (sigmas[-1] - sigmas[0])
    return np.where(slopes > tau, 1, np.where(slopes < -tau, -1, 0))


def estimate_witness_time(
    curve: WitnessCurve, slope_tol: float = 1e-3, refine_peak: bool = False
) -> WitnessTime | None:
    if len(curve) < 4:
        raise SamplingError(f"need at least 4 ladder points, got {len(curve)}")
    signs = _slope_signs(curve, slope_tol)

    end = 0
    while end < len(signs) and signs[end] >= 0:
        end += 1
    if not np.any(signs[:end] > 0):
        return None
    if end == len(signs):
        return WitnessTime(curve.sigmas[-1], unbounded=True)

    sigma = curve.sigmas[end]
    if refine_peak:
        # vertex of the parabola through the peak and its neighbours
        xs = np.asarray(curve.sigmas[end - 1 : end + 2])
        ys = np.asarray(curve.gammas[end - 1 : end + 2])
        a, b, _ = np.polyfit(xs, ys, 2)
        if a < 0:
            vertex = -b / (2 * a)
            if xs[0] <= vertex <= xs[-1]:
                sigma = float(vertex)
    return WitnessTime(float(sigma))


def classify_coherence(curve: WitnessCurve, slope_tol: float = 1e-3) -> Coherence:
    peak = max(curve.gammas) if len(curve) else 0.0
    if peak <= 1e-10 * curve.signal_scale or peak == 0:
        return Coherence.INCONCLUSIVE
    signs = _slope_signs(curve, slope_tol)
    for s in signs:
        if s > 0:
            return Coherence.VIBRATIONAL
        if s < 0:
            return Coherence.ELECTRONIC_PRESENT
    return Coherence.INCONCLUSIVE


@dataclass(frozen=True)
class Recommendation:
    center_frequency: float
    sigma_max: float
    fwhm_max: float
    absorption_mean: float
    absorption_variance: float
    raman_mean: float
    advisory: str | None = None

    def encode(self) -> dict:
        return {
            "center_frequency": self.center_frequency,
            "sigma_max": self.sigma_max,
            "fwhm_max": self.fwhm_max,
            "absorption_mean": self.absorption_mean,
            "absorption_variance": self.absorption_variance,
            "raman_mean": self.raman_mean,
            "advisory": self.advisory,
        }


def recommend_parameters(
    model: VibronicModel,
    temperature: float = 0.0,
    centering: Centering | str = Centering.ABSORPTION_MEAN,
    ensemble: Ensemble | None = None,
    numerics: WitnessNumerics = WitnessNumerics(),
    manual_freq: float | None = None,
    prepared=None,
) -> Recommendation:
    centering = Centering(centering)
    ensemble = ensemble or Ensemble(temperature=temperature)
    basis, weights = prepared or prepare(model, ensemble, numerics.basis)
    scheme = ensemble.orientation

    spectrum = absorption_spectrum(basis, weights, scheme)
    mean, variance = spectrum.moments()
    raman = resonance_raman_spectrum(basis, weights, numerics.raman_gamma, scheme)
    r_mean = raman.raman_mean

    match centering:
        case Centering.ABSORPTION_MEAN:
            center = mean
        case Centering.RAMAN_MEAN:
            center = r_mean
        case Centering.MIDPOINT:
            center = (mean + r_mean) / 2
        case Centering.MANUAL:
            if manual_freq is None:
                raise InvalidParameter("manual centering needs a center frequency")
            center = manual_freq

    advisory = None
    width = math.sqrt(max(variance, 0.0))
    if width < 1e-12:
        advisory = "no vibronic structure"
        logger.warning(f"absorption variance vanishes: {advisory}, any pulse duration is admissible")
        sigma_max = fwhm_max = math.inf
    else:
        sigma_max = 1 / (10 * width)
        fwhm_max = fwhm_of_sigma(sigma_max)
    return Recommendation(center, sigma_max, fwhm_max, mean, variance, r_mean, advisory)


def witness_curve(
    model: VibronicModel,
    sigma_ladder=None,
    centering: Centering | str = Centering.ABSORPTION_MEAN,
    ensemble: Ensemble = Ensemble(),
    engine: str = "sos",
    numerics: WitnessNumerics = WitnessNumerics(),
    jobs: int = 1,
    manual_freq: float | None = None,
    frequency_window: tuple[float, float] | None = None,
    polarization=(1.0, 0.0, 0.0),
    prepared=None,
) -> WitnessCurve:
    """
    Gamma for every pulse duration in the ladder, with sigma_P = sigma_P'.

    All points share one waiting-time window, starting at the pulse-overlap
    cutoff of the longest pulse, and one center frequency.
    """
    ladder = tuple(float(s) for s in (sigma_ladder or default_ladder()))
    if len(ladder) == 0:
        raise InvalidParameter("the sigma ladder is empty")
    if np.any(np.diff(ladder) <= 0):
        raise InvalidParameter("the sigma ladder must be strictly increasing")
    centering = Centering(centering)

    needs_basis = engine == "sos" or centering != Centering.MANUAL
    if prepared is None and needs_basis:
        prepared = prepare(model, ensemble, numerics.basis)
    if centering == Centering.MANUAL:
        if manual_freq is None:
            raise InvalidParameter("manual centering needs a center frequency")
        center = manual_freq
    else:
        center = recommend_parameters(
            model, centering=centering, ensemble=ensemble, numerics=numerics, prepared=prepared
        ).center_frequency

    s_max = ladder[-1]
    t_min = cutoff_time(s_max, s_max)
    t_final = numerics.t_final
    if t_min >= t_final:
        raise WindowError(f"pulse overlap cutoff {t_min:.3g} leaves no window before {t_final}")
    count = int(math.floor((t_final - t_min) / numerics.time_step + 1e-9)) + 1
    times = t_min + numerics.time_step * np.arange(count)
    logger.info(
        f"witness ladder of {len(ladder)} durations, centered at {center:.4f}, window [{t_min:.3g}, {times[-1]:.3g}]"
    )

    def point(sigma):
        pump = GaussianPulse(center, sigma, polarization=tuple(polarization))
        probe = GaussianPulse(center, sigma, polarization=tuple(polarization))
        trace = ensemble_pump_probe(
            model, pump, probe, times, ensemble, engine=engine,
            numerics=numerics.grid if engine == "grid" else numerics.basis,
            prepared=prepared if engine == "sos" else None,
        )
        if frequency_window is not None:
            _, s = _window(times, trace.total, t_min, t_final)
            gamma = fourier_peak_amplitude(times, s, frequency_window) ** 2
        else:
            gamma = oscillation_strength(times, trace.total, s_max, s_max, t_final)
        mean = scipy.integrate.trapezoid(trace.total, times) / (times[-1] - times[0])
        logger.debug(f"sigma={sigma:.4f}: gamma={gamma:.4e}")
        return sigma, gamma, mean**2 * (times[-1] - times[0])

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = sorted(pool.map(point, ladder))

    return WitnessCurve(
        sigmas=tuple(r[0] for r in results),
        gammas=tuple(r[1] for r in results),
        t_min=t_min,
        t_final=float(times[-1]),
        centering=centering,
        center_freq=center,
        signal_scale=max(r[2] for r in results),
        frequency_window=frequency_window,
    )
