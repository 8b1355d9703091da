"""
cohwit.runner

This module runs the computations behind the command line: it keys each
computation by a hash of the config subtree it depends on, reuses cached
results, runs parameter sweeps on a worker pool and writes plot-ready
CSV and JSON files.

Emitted files never contain timestamps, so the same config and version
always produce byte-identical output.
"""

import json
import math
import os
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
from loguru import logger

from cohwit import __version__
from cohwit.config import RunConfig, canonical_hash
from cohwit.ensemble import ensemble_pump_probe, prepare
from cohwit.errors import EmptySpectrum, InvalidParameter
from cohwit.logger import summary64, sweep_point
from cohwit.pulse import GaussianPulse, fwhm_of_sigma
from cohwit.sos import absorption_spectrum, resonance_raman_spectrum
from cohwit.witness import (
    Centering,
    classify_coherence,
    estimate_witness_time,
    recommend_parameters,
    witness_curve,
)

ENGINES = ("grid", "sos")
SWEEP_CENTERINGS = (Centering.ABSORPTION_MEAN, Centering.RAMAN_MEAN, Centering.MIDPOINT)
FLOAT_FORMAT = "%.12g"
BROADENING = 0.05
CURVE_POINTS = 400


def _plain(value: Any) -> Any:
    """Convert numpy values into the JSON data model."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass(frozen=True)
class ResultRecord:
    key: str
    kind: str
    payload: dict
    version: str = __version__
    timestamp: str = ""

    @staticmethod
    def decode(data: dict) -> "ResultRecord":
        return ResultRecord(data["key"], data["kind"], data["payload"], data["version"], data["timestamp"])

    def encode(self) -> dict:
        return {
            "key": self.key,
            "kind": self.kind,
            "payload": self.payload,
            "version": self.version,
            "timestamp": self.timestamp,
        }


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class Cache:
    """
    A content-addressed result store, one instance per directory.

    Records live in `<dir>/<key[:2]>/<key>.json`; `<dir>/index.json` maps keys
    to their kind and is rewritten atomically under a lock.
    """

    _instances = dict()
    _lock = threading.Lock()

    def __new__(cls, directory: Path):
        directory = Path(directory).resolve()
        if directory not in cls._instances:
            cls._instances[directory] = super().__new__(cls)
        return cls._instances[directory]

    def __init__(self, directory: Path):
        self.directory = Path(directory).resolve()
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> ResultRecord | None:
        path = self.path(key)
        if not path.exists():
            with self._lock:
                self.misses += 1
            return None
        record = ResultRecord.decode(json.loads(path.read_text()))
        with self._lock:
            self.hits += 1
        return record

    def put(self, record: ResultRecord):
        _atomic_write(self.path(record.key), json.dumps(record.encode(), sort_keys=True))
        with self._lock:
            index_path = self.directory / "index.json"
            index = json.loads(index_path.read_text()) if index_path.exists() else {}
            index[record.key] = {"kind": record.kind, "version": record.version}
            _atomic_write(index_path, json.dumps(index, indent=2, sort_keys=True))


def computation_key(kind: str, subtree: dict, engine: str | None = None) -> str:
    return canonical_hash({"kind": kind, "config": subtree, "engine": engine, "version": __version__})


def _subtree(config: RunConfig, kind: str) -> dict:
    encoded = config.encode()
    numerics = encoded["numerics"]
    if kind in ("absorption", "raman"):
        tree = {
            "system": encoded["system"],
            "ensemble": encoded["ensemble"],
            "basis": numerics["basis"],
            "polarization": encoded["pulses"]["polarization"],
        }
        if kind == "raman":
            tree["raman_gamma"] = numerics["raman_gamma"]
        return tree
    return {k: encoded[k] for k in ("system", "pulses", "ensemble", "numerics")}


class Runner:
    """Computes one config, optionally through a cache."""

    def __init__(self, config: RunConfig, cache: Cache | None = None, jobs: int = 1):
        self.config = config
        self.cache = cache
        self.jobs = max(1, jobs)
        self._prepared = None

    @property
    def model(self):
        return self.config.build_model()

    @property
    def ensemble(self):
        return self.config.build_ensemble()

    def prepared(self):
        if self._prepared is None:
            self._prepared = prepare(self.model, self.ensemble, self.config.numerics.basis)
        return self._prepared

    def _cached(self, kind: str, compute: Callable[[], dict], engine: str | None = None) -> dict:
        key = computation_key(kind, _subtree(self.config, kind), engine)
        if self.cache is not None and (record := self.cache.get(key)) is not None:
            logger.debug(f"cache hit for {kind} {summary64(key)}")
            return record.payload
        payload = _plain(compute())
        # the payload is always the JSON view, cached or not
        payload = json.loads(json.dumps(payload))
        if self.cache is not None:
            stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
            self.cache.put(ResultRecord(key, kind, payload, __version__, stamp))
        return payload

    def center_frequency(self) -> float:
        pulses = self.config.pulses
        if pulses.centering == Centering.MANUAL:
            return pulses.center_freq
        return self.recommend()["center_frequency"]

    def absorption(self) -> dict:
        def compute():
            basis, weights = self.prepared()
            spectrum = absorption_spectrum(basis, weights, self.ensemble.orientation)
            mean, variance = spectrum.moments()
            advisory = None
            if variance < 1e-24:
                advisory = "no vibronic structure"
                logger.warning(f"absorption spectrum is a single line: {advisory}")
            return {
                "frequencies": spectrum.frequencies,
                "weights": spectrum.weights,
                "mean": mean,
                "variance": variance,
                "advisory": advisory,
            }

        return self._cached("absorption", compute)

    def raman(self) -> dict:
        def compute():
            basis, weights = self.prepared()
            spectrum = resonance_raman_spectrum(
                basis, weights, self.config.numerics.raman_gamma, self.ensemble.orientation
            )
            return {
                "frequencies": spectrum.frequencies,
                "weights": spectrum.weights,
                "profile_frequencies": spectrum.profile_frequencies,
                "profile": spectrum.profile,
                "gamma": spectrum.gamma,
                "mean": spectrum.raman_mean,
            }

        return self._cached("raman", compute)

    def recommend(self) -> dict:
        def compute():
            pulses = self.config.pulses
            recommendation = recommend_parameters(
                self.model,
                centering=pulses.centering,
                ensemble=self.ensemble,
                numerics=self.config.numerics.witness(),
                manual_freq=pulses.center_freq,
                prepared=self.prepared(),
            )
            return recommendation.encode()

        return self._cached("recommend", compute)

    def pumpprobe(self, engine: str = "sos") -> dict:
        if engine not in ENGINES:
            raise InvalidParameter(f"unknown engine {engine!r}, expected one of {ENGINES}")

        def compute():
            pulses = self.config.pulses
            numerics = self.config.numerics
            center = self.center_frequency()
            times = numerics.times()
            traces = []
            for sigma in pulses.sigmas:
                pulse = GaussianPulse(center, sigma, eta=pulses.eta, polarization=pulses.polarization)
                logger.info(f"{engine} pump-probe trace at sigma={sigma:.4g}")
                trace = ensemble_pump_probe(
                    self.model,
                    pulse,
                    pulse,
                    times,
                    self.ensemble,
                    engine=engine,
                    numerics=numerics.grid if engine == "grid" else numerics.basis,
                    prepared=self.prepared() if engine == "sos" else None,
                )
                traces.append(
                    {
                        "sigma": sigma,
                        "times": trace.times,
                        "total": trace.total,
                        "se": trace.se,
                        "esa": trace.esa,
                        "gsb": trace.gsb,
                    }
                )
            return {"engine": engine, "center_freq": center, "traces": traces}

        return self._cached("pumpprobe", compute, engine)

    def witness(self, engine: str = "sos") -> dict:
        if engine not in ENGINES:
            raise InvalidParameter(f"unknown engine {engine!r}, expected one of {ENGINES}")

        def compute():
            pulses = self.config.pulses
            numerics = self.config.numerics.witness()
            curve = witness_curve(
                self.model,
                pulses.sigmas,
                pulses.centering,
                self.ensemble,
                engine=engine,
                numerics=numerics,
                jobs=self.jobs,
                manual_freq=pulses.center_freq,
                polarization=pulses.polarization,
                prepared=self.prepared() if engine == "sos" or pulses.centering != Centering.MANUAL else None,
            )
            witness = estimate_witness_time(curve, numerics.slope_tol, numerics.refine_peak)
            classification = classify_coherence(curve, numerics.slope_tol)
            units = self.config.units()
            payload = {
                "sigmas": curve.sigmas,
                "fwhms": curve.fwhms,
                "gammas": curve.gammas,
                "t_min": curve.t_min,
                "t_final": curve.t_final,
                "centering": str(curve.centering),
                "center_freq": curve.center_freq,
                "witness_sigma": witness.sigma if witness else None,
                "witness_fwhm": witness.fwhm if witness else None,
                "witness_fs": witness.in_fs(units) if witness and units else None,
                "unbounded": witness.unbounded if witness else False,
                "classification": str(classification),
                "recommendation": self.recommend(),
            }
            logger.info(f"witness time {payload['witness_sigma']}, classification {classification}")
            return payload

        return self._cached("witness", compute, engine)

    def sweep_points(self) -> list[tuple[Any, Centering, RunConfig]]:
        sweep = self.config.sweep
        if sweep is None:
            raise InvalidParameter("the config has no sweep block")
        points = []
        if sweep.axis == "centering":
            for centering in sweep.values:
                pulses = replace(self.config.pulses, centering=centering)
                points.append((str(centering), centering, replace(self.config, pulses=pulses, sweep=None)))
            return points
        for value in sweep.values:
            system = self.config.system.with_value(sweep.axis, value)
            for centering in SWEEP_CENTERINGS:
                pulses = replace(self.config.pulses, centering=centering)
                points.append((value, centering, replace(self.config, system=system, pulses=pulses, sweep=None)))
        return points

    def sweep(self, engine: str, out: Path) -> pd.DataFrame:
        """Run every sweep point; the completed rows are written even on interrupt."""
        points = self.sweep_points()
        axis = self.config.sweep.axis

        def run(point):
            value, centering, config = point
            key = computation_key("witness", _subtree(config, "witness"), engine)
            with sweep_point(key, axis, value, centering):
                result = Runner(config, self.cache).witness(engine)
            return {
                axis: value,
                "centering": str(centering),
                "T_W_sigma": result["witness_sigma"],
                "T_W_fwhm": result["witness_fwhm"],
                "T_A": result["recommendation"]["sigma_max"],
                "center_freq": result["center_freq"],
                "absorption_mean": result["recommendation"]["absorption_mean"],
                "raman_mean": result["recommendation"]["raman_mean"],
                "classification": result["classification"],
            }

        rows: dict[int, dict] = {}
        pool = ThreadPoolExecutor(max_workers=self.jobs)
        try:
            futures = {pool.submit(run, p): i for i, p in enumerate(points)}
            for future in as_completed(futures):
                rows[futures[future]] = future.result()
                logger.info(f"sweep point {len(rows)}/{len(points)} done")
        except KeyboardInterrupt:
            logger.warning(f"interrupted, writing {len(rows)} of {len(points)} sweep points")
            pool.shutdown(wait=False, cancel_futures=True)
            write_sweep(out, _table(rows, axis), partial=True)
            raise
        pool.shutdown()
        table = _table(rows, axis)
        write_sweep(out, table)
        return table


def _table(rows: dict[int, dict], axis: str) -> pd.DataFrame:
    columns = [axis] + [
        c for c in ("centering", "T_W_sigma", "T_W_fwhm", "T_A", "center_freq",
                    "absorption_mean", "raman_mean", "classification")
        if c != axis
    ]
    frame = pd.DataFrame([rows[i] for i in sorted(rows)], columns=columns)
    for column in ("T_W_sigma", "T_W_fwhm", "T_A", "center_freq", "absorption_mean", "raman_mean"):
        frame[column] = pd.to_numeric(frame[column])
    if axis != "centering":
        frame[axis] = pd.to_numeric(frame[axis])
    return frame


def _footer(footer: dict) -> str:
    lines = []
    for key, value in footer.items():
        if value is None:
            value = "none"
        elif isinstance(value, float):
            value = FLOAT_FORMAT % value
        lines.append(f"# {key}: {value}\n")
    return "".join(lines)


def write_csv(path: Path, frame: pd.DataFrame, footer: dict | None = None):
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    _atomic_write(path, text + _footer(footer or {}))
    logger.debug(f"wrote {path}")


def write_json(path: Path, data: dict):
    _atomic_write(path, json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
    logger.debug(f"wrote {path}")


def read_footer(path: Path) -> dict[str, str]:
    footer = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("# ") and ": " in line:
            key, value = line[2:].split(": ", 1)
            footer[key] = value
    return footer


def _record(config: RunConfig, kind: str, payload: dict, engine: str | None = None) -> dict:
    return {"kind": kind, "engine": engine, "version": __version__, "config": config.encode(), "payload": payload}


def _curve(payload: dict) -> tuple[np.ndarray, np.ndarray]:
    freqs = np.asarray(payload["frequencies"])
    weights = np.asarray(payload["weights"])
    lo, hi = freqs.min() - 5 * BROADENING, freqs.max() + 5 * BROADENING
    grid = np.linspace(lo, hi, CURVE_POINTS)
    shape = np.exp(-((grid[:, None] - freqs[None, :]) ** 2) / (2 * BROADENING**2))
    return grid, shape @ weights / (math.sqrt(2 * math.pi) * BROADENING)


def write_spectrum(out: Path, config: RunConfig, kind: str, payload: dict):
    formats = config.output.formats
    if len(payload["frequencies"]) == 0:
        raise EmptySpectrum(f"{kind} spectrum carries no weight")
    footer = {"mean": payload["mean"]}
    if kind == "absorption":
        footer |= {"variance": payload["variance"], "advisory": payload["advisory"]}
    else:
        footer |= {"gamma": payload["gamma"]}
    if "csv" in formats:
        sticks = pd.DataFrame({"frequency": payload["frequencies"], "weight": payload["weights"]})
        write_csv(out / f"{kind}_sticks.csv", sticks, footer)
        if kind == "absorption":
            grid, curve = _curve(payload)
        else:
            grid, curve = payload["profile_frequencies"], payload["profile"]
        write_csv(out / f"{kind}_curve.csv", pd.DataFrame({"frequency": grid, "intensity": curve}), footer)
    if "json" in formats:
        write_json(out / f"{kind}.json", _record(config, kind, payload))


def trace_frame(trace: dict, units=None) -> pd.DataFrame:
    columns = {"T": trace["times"]}
    if units is not None:
        columns["T_fs"] = [units.to_fs(t) for t in trace["times"]]
    columns["S_PP"] = trace["total"]
    for name in ("se", "esa", "gsb"):
        columns[name.upper()] = trace[name] if trace[name] is not None else [np.nan] * len(trace["times"])
    return pd.DataFrame(columns)


def max_relative_deviation(grid: dict, sos: dict) -> float:
    worst = 0.0
    for a, b in zip(grid["traces"], sos["traces"]):
        ref = np.max(np.abs(b["total"]))
        if ref > 0:
            worst = max(worst, float(np.max(np.abs(np.subtract(a["total"], b["total"]))) / ref))
    return worst


def write_traces(out: Path, config: RunConfig, payloads: dict[str, dict]):
    units = config.units()
    footer_extra = {}
    if len(payloads) == 2:
        footer_extra["max_rel_dev"] = max_relative_deviation(payloads["grid"], payloads["sos"])
        logger.info(f"maximum relative deviation between engines: {footer_extra['max_rel_dev']:.3e}")
    for engine, payload in payloads.items():
        if "csv" in config.output.formats:
            for i, trace in enumerate(payload["traces"]):
                footer = {
                    "engine": engine,
                    "sigma": trace["sigma"],
                    "fwhm": fwhm_of_sigma(trace["sigma"]),
                    "center_freq": payload["center_freq"],
                } | footer_extra
                write_csv(out / f"pumpprobe_{engine}_{i:02d}.csv", trace_frame(trace, units), footer)
        if "json" in config.output.formats:
            write_json(out / f"pumpprobe_{engine}.json", _record(config, "pumpprobe", payload, engine) | footer_extra)
    return footer_extra.get("max_rel_dev")


def write_witness(out: Path, config: RunConfig, payload: dict, engine: str):
    if "csv" in config.output.formats:
        frame = pd.DataFrame({"sigma": payload["sigmas"], "fwhm": payload["fwhms"], "gamma": payload["gammas"]})
        footer = {
            "T_W_sigma": payload["witness_sigma"],
            "T_W_fwhm": payload["witness_fwhm"],
            "T_W_fs": payload["witness_fs"],
            "unbounded": str(payload["unbounded"]).lower(),
            "classification": payload["classification"],
            "T_A": payload["recommendation"]["sigma_max"],
            "center_freq": payload["center_freq"],
            "centering": payload["centering"],
            "t_min": payload["t_min"],
            "t_final": payload["t_final"],
        }
        write_csv(out / "witness.csv", frame, footer)
    if "json" in config.output.formats:
        write_json(out / "witness.json", _record(config, "witness", payload, engine))


def write_recommendation(out: Path, config: RunConfig, payload: dict):
    write_json(out / "recommendation.json", _record(config, "recommend", payload))


def write_sweep(out: Path, table: pd.DataFrame, partial: bool = False):
    write_csv(out / "sweep.csv", table, {"partial": "true"} if partial else None)
