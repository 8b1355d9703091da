"""
cohwit.config

This module reads run configurations: one YAML document with the blocks
`system`, `pulses`, `ensemble`, `numerics`, `output` and optionally `sweep`.

Every block is a frozen dataclass with a `decode`/`encode` pair. Decoding
rejects unknown keys and reports the dotted path and line of the offending
node. Encoding writes every default back out, so an encoded config fully
describes a computation.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from cohwit.dynamics import CapSpec, GridNumerics
from cohwit.ensemble import Ensemble, OrientationMode, OrientationScheme
from cohwit.errors import CohwitError, ConfigError
from cohwit.model import DimerParameters, GridSpec, VibronicModel, build_dimer, build_monomer
from cohwit.pulse import sigma_of_fwhm
from cohwit.sos import BasisNumerics
from cohwit.units import PhysicalUnits
from cohwit.witness import Centering, WitnessNumerics, default_ladder


class _Located(dict):
    """A mapping that remembers the line of itself and of each key."""

    line: int | None = None
    lines: dict


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_located(loader: _LineLoader, node: yaml.MappingNode) -> _Located:
    loader.flatten_mapping(node)
    data = _Located(loader.construct_mapping(node, deep=True))
    data.line = node.start_mark.line + 1
    data.lines = {loader.construct_object(k): k.start_mark.line + 1 for k, _ in node.value}
    return data


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_located)


class _Fields:
    """Typed access to one config block, tracking which keys were read."""

    def __init__(self, data: Any, path: str, allowed: set[str]):
        if data is None:
            data = _Located()
        if not isinstance(data, dict):
            raise ConfigError(path, "expected a mapping", getattr(data, "line", None))
        self.data = data
        self.path = path
        for key in data:
            if key not in allowed:
                raise ConfigError(self._at(key), "unknown key", self.line(key))

    def _at(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else str(key)

    def line(self, key: str | None = None) -> int | None:
        lines = getattr(self.data, "lines", {})
        if key is not None and key in lines:
            return lines[key]
        return getattr(self.data, "line", None)

    def __contains__(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, default: Any, convert: Callable[[Any], Any] = lambda x: x) -> Any:
        if key not in self.data:
            return default
        try:
            return convert(self.data[key])
        except ConfigError:
            raise
        except (CohwitError, TypeError, ValueError) as e:
            raise ConfigError(self._at(key), str(e), self.line(key)) from None

    def require(self, key: str, convert: Callable[[Any], Any] = lambda x: x) -> Any:
        if key not in self.data:
            raise ConfigError(self._at(key), "missing required key", self.line())
        return self.get(key, None, convert)

    def sub(self, key: str, allowed: set[str]) -> "_Fields":
        return _Fields(self.data.get(key), self._at(key), allowed)

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(self._at(key), message, self.line(key))


def _number(x) -> float:
    if isinstance(x, str):
        # YAML 1.1 reads 1e-3 as a string
        return float(x)
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"expected a number, got {x!r}")
    return float(x)


def _optional_number(x) -> float | None:
    return None if x is None else _number(x)


def _integer(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ValueError(f"expected an integer, got {x!r}")
    return x


def _flag(x) -> bool:
    if not isinstance(x, bool):
        raise ValueError(f"expected true or false, got {x!r}")
    return x


def _numbers(x) -> tuple[float, ...]:
    if not isinstance(x, list) or not x:
        raise ValueError("expected a nonempty list of numbers")
    return tuple(_number(v) for v in x)


def _grid(fields: _Fields, default: GridSpec) -> GridSpec:
    return GridSpec(
        fields.get("points", default.points, _integer),
        fields.get("spacing", default.spacing, _number),
    )


def _grid_block(parent: _Fields, key: str, default: GridSpec) -> GridSpec:
    fields = parent.sub(key, {"points", "spacing"})
    try:
        return _grid(fields, default)
    except ConfigError:
        raise
    except CohwitError as e:
        raise parent.error(key, str(e)) from None


MONOMER_KEYS = {"omega_e", "huang_rhys", "omega_0", "Omega_e"}
DIMER_KEYS = set(DimerParameters.__dataclass_fields__)


@dataclass(frozen=True)
class SystemConfig:
    kind: str = "monomer"
    omega_e: float = 1.5
    huang_rhys: float = 0.02
    omega_0: float = 1.0
    Omega_e: float = 0.0
    dimer: DimerParameters = DimerParameters()
    omega0_cm: float | None = None

    @staticmethod
    def decode(fields: _Fields) -> "SystemConfig":
        system = SystemConfig._decode(fields)
        try:
            system.build_model()
        except CohwitError as e:
            raise ConfigError(fields.path, str(e), fields.line()) from None
        return system

    @staticmethod
    def _decode(fields: _Fields) -> "SystemConfig":
        kind = fields.get("kind", "monomer", str)
        extra = {"kind", "omega0_cm"}
        match kind:
            case "monomer":
                fields = _Fields(fields.data, fields.path, MONOMER_KEYS | extra)
                return SystemConfig(
                    kind,
                    omega_e=fields.require("omega_e", _number),
                    huang_rhys=fields.require("huang_rhys", _number),
                    omega_0=fields.get("omega_0", 1.0, _number),
                    Omega_e=fields.get("Omega_e", 0.0, _number),
                    omega0_cm=fields.get("omega0_cm", None, _number),
                )
            case "dimer":
                fields = _Fields(fields.data, fields.path, DIMER_KEYS | extra)
                defaults = DimerParameters()
                params = DimerParameters.decode(
                    {k: fields.get(k, getattr(defaults, k), _number) for k in DIMER_KEYS}
                )
                return SystemConfig(kind, dimer=params, omega0_cm=fields.get("omega0_cm", None, _number))
            case _:
                raise fields.error("kind", f"expected monomer or dimer, got {kind!r}")

    def encode(self) -> dict:
        if self.kind == "monomer":
            out = {
                "kind": "monomer",
                "omega_e": self.omega_e,
                "huang_rhys": self.huang_rhys,
                "omega_0": self.omega_0,
                "Omega_e": self.Omega_e,
            }
        else:
            out = {"kind": "dimer"} | self.dimer.encode()
        if self.omega0_cm is not None:
            out["omega0_cm"] = self.omega0_cm
        return out

    def build_model(self) -> VibronicModel:
        if self.kind == "monomer":
            return build_monomer(self.omega_e, self.huang_rhys, self.omega_0, self.Omega_e)
        return build_dimer(self.dimer)

    def with_value(self, axis: str, value: float) -> "SystemConfig":
        """The system with one sweep axis set; a dimer sweeps its first site."""
        if self.kind == "monomer":
            return replace(self, **{axis: value})
        return replace(self, dimer=replace(self.dimer, **{f"{axis}1": value}))


@dataclass(frozen=True)
class PulseConfig:
    centering: Centering = Centering.ABSORPTION_MEAN
    center_freq: float | None = None
    sigmas: tuple[float, ...] = field(default_factory=default_ladder)
    eta: float = 1.0
    polarization: tuple[float, float, float] = (1.0, 0.0, 0.0)

    @staticmethod
    def decode(fields: _Fields) -> "PulseConfig":
        centering = fields.get("centering", Centering.ABSORPTION_MEAN, Centering)
        center_freq = fields.get("center_freq", None, _optional_number)
        if centering == Centering.MANUAL and center_freq is None:
            raise ConfigError(fields._at("center_freq"), "manual centering needs center_freq", fields.line())

        given = [k for k in ("sigmas", "fwhms", "ladder") if k in fields]
        if len(given) > 1:
            raise fields.error(given[1], f"give only one of sigmas, fwhms or ladder, found {given}")
        if "sigmas" in fields:
            sigmas = fields.get("sigmas", None, _numbers)
        elif "fwhms" in fields:
            sigmas = tuple(fields.get("fwhms", None, lambda x: [sigma_of_fwhm(f) for f in _numbers(x)]))
        elif "ladder" in fields:
            ladder = fields.sub("ladder", {"min", "max", "count"})
            lo, hi = ladder.require("min", _number), ladder.require("max", _number)
            count = ladder.require("count", _integer)
            if not 0 < lo < hi or count < 1:
                raise fields.error("ladder", "expected 0 < min < max and count >= 1")
            sigmas = tuple(float(s) for s in np.geomspace(lo, hi, count))
        else:
            sigmas = default_ladder()
        if any(s <= 0 for s in sigmas):
            raise fields.error(given[0], "pulse durations must be positive")
        if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
            raise fields.error(given[0], "pulse durations must be strictly increasing")

        polarization = fields.get("polarization", (1.0, 0.0, 0.0), _numbers)
        if len(polarization) != 3 or not any(polarization):
            raise fields.error("polarization", "expected a nonzero 3-vector")
        return PulseConfig(centering, center_freq, sigmas, fields.get("eta", 1.0, _number), polarization)

    def encode(self) -> dict:
        return {
            "centering": str(self.centering),
            "center_freq": self.center_freq,
            "sigmas": list(self.sigmas),
            "eta": self.eta,
            "polarization": list(self.polarization),
        }


@dataclass(frozen=True)
class EnsembleConfig:
    temperature: float = 0.0
    orientation: OrientationMode = OrientationMode.ANALYTIC
    quadrature_order: int = 8
    initial_state: int = 0

    @staticmethod
    def decode(fields: _Fields) -> "EnsembleConfig":
        temperature = fields.get("temperature", 0.0, _number)
        if temperature < 0:
            raise fields.error("temperature", "temperature must be >= 0")
        initial_state = fields.get("initial_state", 0, _integer)
        if initial_state < 0:
            raise fields.error("initial_state", "initial state must be >= 0")
        return EnsembleConfig(
            temperature,
            fields.get("orientation", OrientationMode.ANALYTIC, OrientationMode),
            fields.get("quadrature_order", 8, _integer),
            initial_state,
        )

    def encode(self) -> dict:
        return {
            "temperature": self.temperature,
            "orientation": str(self.orientation),
            "quadrature_order": self.quadrature_order,
            "initial_state": self.initial_state,
        }

    def build(self, omega0_cm: float | None, polarization=(1.0, 0.0, 0.0)) -> Ensemble:
        return Ensemble(
            temperature=self.temperature,
            orientation=OrientationScheme(self.orientation, self.quadrature_order, tuple(polarization)),
            initial_state=self.initial_state,
            omega0_cm=omega0_cm or 100.0,
        )


@dataclass(frozen=True)
class NumericsConfig:
    grid: GridNumerics = GridNumerics()
    basis: BasisNumerics = BasisNumerics()
    time_step: float = 0.05
    t_final: float = 25.0
    raman_gamma: float = 0.01
    slope_tol: float = 1e-3
    refine_peak: bool = False

    @staticmethod
    def decode(fields: _Fields) -> "NumericsConfig":
        d = GridNumerics()
        cap = fields.sub("cap", {"width", "amplitude", "enabled"})
        amplitude = cap.get("amplitude", d.cap.amplitude, lambda x: complex(*_numbers(x)))
        try:
            cap_spec = CapSpec(
                cap.get("width", d.cap.width, _number), amplitude, cap.get("enabled", d.cap.enabled, _flag)
            )
            grid = GridNumerics(
                grid=_grid_block(fields, "grid", d.grid),
                thermal_grid=_grid_block(fields, "thermal_grid", d.thermal_grid),
                dt=fields.get("dt", d.dt, _number),
                total_time=fields.get("total_time", d.total_time, _number),
                cap=cap_spec,
            )
        except ConfigError:
            raise
        except CohwitError as e:
            raise ConfigError(fields.path, str(e), fields.line()) from None

        b = BasisNumerics()
        basis_fields = fields.sub("basis", {"points", "spacing", "thermal_grid", "truncation", "tolerance"})
        try:
            basis_grid = _grid(basis_fields, b.grid)
        except ConfigError:
            raise
        except CohwitError as e:
            raise fields.error("basis", str(e)) from None
        basis = BasisNumerics(
            grid=basis_grid,
            thermal_grid=_grid_block(basis_fields, "thermal_grid", b.thermal_grid),
            truncation=basis_fields.get("truncation", b.truncation, _integer),
            tolerance=basis_fields.get("tolerance", b.tolerance, _number),
        )

        numerics = NumericsConfig(
            grid,
            basis,
            fields.get("time_step", 0.05, _number),
            fields.get("t_final", grid.total_time, _number),
            fields.get("raman_gamma", 0.01, _number),
            fields.get("slope_tol", 1e-3, _number),
            fields.get("refine_peak", False, _flag),
        )
        for key in ("time_step", "t_final", "raman_gamma", "slope_tol"):
            if not getattr(numerics, key) > 0:
                raise fields.error(key, "must be positive")
        return numerics

    def encode(self) -> dict:
        g = self.grid
        return {
            "grid": {"points": g.grid.points, "spacing": g.grid.spacing},
            "thermal_grid": {"points": g.thermal_grid.points, "spacing": g.thermal_grid.spacing},
            "dt": g.dt,
            "total_time": g.total_time,
            "cap": {
                "width": g.cap.width,
                "amplitude": [g.cap.amplitude.real, g.cap.amplitude.imag],
                "enabled": g.cap.enabled,
            },
            "basis": self.basis.encode(),
            "time_step": self.time_step,
            "t_final": self.t_final,
            "raman_gamma": self.raman_gamma,
            "slope_tol": self.slope_tol,
            "refine_peak": self.refine_peak,
        }

    def witness(self) -> WitnessNumerics:
        return WitnessNumerics(
            time_step=self.time_step,
            t_final=self.t_final,
            slope_tol=self.slope_tol,
            raman_gamma=self.raman_gamma,
            refine_peak=self.refine_peak,
            basis=self.basis,
            grid=self.grid,
        )

    def times(self) -> np.ndarray:
        """Waiting times from the pump center up to t_final."""
        count = int(np.floor(self.t_final / self.time_step + 1e-9)) + 1
        return self.time_step * np.arange(count)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple[str, ...] = ("csv", "json")

    @staticmethod
    def decode(fields: _Fields) -> "OutputConfig":
        formats = fields.get("formats", ["csv", "json"], lambda x: x if isinstance(x, list) else [x])
        for f in formats:
            if f not in ("csv", "json"):
                raise fields.error("formats", f"unknown format {f!r}, expected csv or json")
        return OutputConfig(fields.get("directory", "out", str), tuple(formats))

    def encode(self) -> dict:
        return {"directory": self.directory, "formats": list(self.formats)}


SWEEP_AXES = ("omega_e", "huang_rhys", "centering")


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple

    @staticmethod
    def decode(fields: _Fields) -> "SweepConfig":
        axis = fields.require("axis", str)
        if axis not in SWEEP_AXES:
            raise fields.error("axis", f"expected one of {list(SWEEP_AXES)}, got {axis!r}")
        convert = (lambda x: tuple(Centering(v) for v in x)) if axis == "centering" else _numbers
        values = fields.require("values", convert)
        if not values:
            raise fields.error("values", "the sweep needs at least one value")
        return SweepConfig(axis, tuple(values))

    def encode(self) -> dict:
        return {"axis": self.axis, "values": [str(v) if self.axis == "centering" else v for v in self.values]}


BLOCKS = {"system", "pulses", "ensemble", "numerics", "output", "sweep"}


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    pulses: PulseConfig = PulseConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    numerics: NumericsConfig = NumericsConfig()
    output: OutputConfig = OutputConfig()
    sweep: SweepConfig | None = None

    @staticmethod
    def decode(data: Any) -> "RunConfig":
        root = _Fields(data, "", BLOCKS)
        if "system" not in root:
            raise ConfigError("system", "missing required block", root.line())
        system = SystemConfig.decode(root.sub("system", DIMER_KEYS | MONOMER_KEYS | {"kind", "omega0_cm"}))
        pulses = PulseConfig.decode(
            root.sub("pulses", {"centering", "center_freq", "sigmas", "fwhms", "ladder", "eta", "polarization"})
        )
        ensemble_fields = root.sub("ensemble", {"temperature", "orientation", "quadrature_order", "initial_state"})
        ensemble = EnsembleConfig.decode(ensemble_fields)
        if ensemble.temperature > 0 and system.omega0_cm is None:
            raise ensemble_fields.error("temperature", "a temperature in kelvin needs system.omega0_cm")
        numerics = NumericsConfig.decode(
            root.sub(
                "numerics",
                {
                    "grid", "thermal_grid", "dt", "total_time", "cap", "basis",
                    "time_step", "t_final", "raman_gamma", "slope_tol", "refine_peak",
                },
            )
        )
        output = OutputConfig.decode(root.sub("output", {"directory", "formats"}))
        sweep = None
        if "sweep" in root:
            sweep = SweepConfig.decode(root.sub("sweep", {"axis", "values"}))
        return RunConfig(system, pulses, ensemble, numerics, output, sweep)

    @staticmethod
    def loads(text: str) -> "RunConfig":
        try:
            data = yaml.load(text, Loader=_LineLoader)
        except yaml.MarkedYAMLError as e:
            line = e.problem_mark.line + 1 if e.problem_mark else None
            raise ConfigError("<document>", str(e.problem), line) from None
        return RunConfig.decode(data)

    @staticmethod
    def load(path: Path | str) -> "RunConfig":
        return RunConfig.loads(Path(path).read_text())

    def encode(self) -> dict:
        out = {
            "system": self.system.encode(),
            "pulses": self.pulses.encode(),
            "ensemble": self.ensemble.encode(),
            "numerics": self.numerics.encode(),
            "output": self.output.encode(),
        }
        if self.sweep is not None:
            out["sweep"] = self.sweep.encode()
        return out

    def build_model(self) -> VibronicModel:
        return self.system.build_model()

    def build_ensemble(self) -> Ensemble:
        return self.ensemble.build(self.system.omega0_cm, self.pulses.polarization)

    def units(self) -> PhysicalUnits | None:
        if self.system.omega0_cm is None:
            return None
        return PhysicalUnits(self.system.omega0_cm)


def canonical_hash(data: dict) -> str:
    """sha256 of the canonical JSON rendering of a config subtree."""
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
