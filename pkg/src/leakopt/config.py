"""Experiment configuration: JSON schema, defaults and unit conversion.

Files use laboratory units (MHz, us, ns, GS/s). Everything is converted to
rad/ns and ns once, by the accessors of :class:`ExperimentConfig`.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .clifford import CostConfig, SimulationSettings
from .cost import PulseContext
from .optimizer import StageSettings
from .quantum import DeviceConfig, NoiseModel, mhz_to_rad_per_ns
from .rb import DEFAULT_LENGTHS


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "device": {
        "d": 4,
        "anharmonicity_mhz": -315.28,
        "qubit_freq_mhz": 5117.22,
        "sample_rate_gsps": 2.4,
        "ssb_freq_mhz": 100.0,
    },
    "noise": {"t1_us": 105.0, "t2_us": 39.0, "dephasing_k": 0.0},
    "cost": {"m": 120, "K": 20, "shots": 1000, "seed": 0, "objective": "rb"},
    "drag": {"n_samples": 10, "sigma_fraction": 0.25, "initial_amplitude": None, "initial_beta": -1.0},
    "cmaes": {
        "lambda": None,
        "sigma0": {"amplitude": 0.05, "beta": 0.3, "ssb_mhz": 3.0, "correction_mhz": 1.6},
        "bounds": {"amplitude": 0.5, "beta": 5.0, "ssb_mhz": 30.0, "correction": 0.3},
        "max_iter": 60,
        "pwc_max_iter": 300,
        "target": None,
    },
    "rb": {"lengths": list(DEFAULT_LENGTHS), "K": 20, "shots": 1000},
    "filter": {"rise_time_ns": 0.3, "oversample": 4},
    "profile": {"lambdas": [4, 8, 16, 32], "setup_latency_ms": 250.0},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}


def _obj(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


SCHEMA: dict = _obj(
    {
        "device": _obj(
            {
                "d": {"type": "integer", "minimum": 2},
                "anharmonicity_mhz": _num,
                "qubit_freq_mhz": _pos,
                "sample_rate_gsps": _pos,
                "ssb_freq_mhz": _num,
            }
        ),
        "noise": _obj(
            {
                "t1_us": {"anyOf": [_pos, {"type": "null"}]},
                "t2_us": {"anyOf": [_pos, {"type": "null"}]},
                "dephasing_k": {"type": "number", "minimum": 0},
            }
        ),
        "cost": _obj(
            {
                "m": _posint,
                "K": _posint,
                "shots": {"anyOf": [_posint, {"type": "null"}]},
                "seed": {"type": "integer", "minimum": 0},
                "objective": {"enum": ["rb", "fidelity"]},
            }
        ),
        "drag": _obj(
            {
                "n_samples": {"type": "integer", "minimum": 2},
                "sigma_fraction": _pos,
                "initial_amplitude": {"anyOf": [_pos, {"type": "null"}]},
                "initial_beta": _num,
            }
        ),
        "cmaes": _obj(
            {
                "lambda": {"anyOf": [{"type": "integer", "minimum": 4}, {"type": "null"}]},
                "sigma0": _obj({"amplitude": _pos, "beta": _pos, "ssb_mhz": _pos, "correction_mhz": _pos}),
                "bounds": _obj({"amplitude": _pos, "beta": _pos, "ssb_mhz": _pos, "correction": _pos}),
                "max_iter": _posint,
                "pwc_max_iter": _posint,
                "target": {"anyOf": [_num, {"type": "null"}]},
            }
        ),
        "rb": _obj(
            {
                "lengths": {"type": "array", "items": _posint, "minItems": 3},
                "K": _posint,
                "shots": _posint,
            }
        ),
        "filter": _obj(
            {
                "rise_time_ns": {"anyOf": [_pos, {"type": "null"}]},
                "oversample": _posint,
            }
        ),
        "profile": _obj(
            {
                "lambdas": {"type": "array", "items": {"type": "integer", "minimum": 4}, "minItems": 1},
                "setup_latency_ms": {"type": "number", "minimum": 0},
            }
        ),
    }
)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _us_to_ns(value):
    return math.inf if value is None else value * 1e3


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with all defaults filled in."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict | None = None) -> "ExperimentConfig":
        raw = raw or {}
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config {where}: {exc.message}") from None
        data = _merge(DEFAULTS, raw)
        lengths = data["rb"]["lengths"]
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ConfigError("config rb/lengths: must be strictly increasing")
        return cls(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(raw)

    def with_overrides(self, **sections) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_merge(self.data, sections))

    def snapshot(self) -> dict:
        return copy.deepcopy(self.data)

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    # -- internal objects ----------------------------------------------------
    @property
    def dt(self) -> float:
        return 1.0 / self["device"]["sample_rate_gsps"]

    @property
    def ssb_frequency(self) -> float:
        return mhz_to_rad_per_ns(self["device"]["ssb_freq_mhz"])

    def device(self) -> DeviceConfig:
        dev = self["device"]
        try:
            return DeviceConfig(dim=dev["d"], anharmonicity=mhz_to_rad_per_ns(dev["anharmonicity_mhz"]), dt=self.dt)
        except ValueError as exc:
            raise ConfigError(f"config device: {exc}") from None

    def noise(self) -> NoiseModel:
        n = self["noise"]
        try:
            return NoiseModel(t1=_us_to_ns(n["t1_us"]), t2=_us_to_ns(n["t2_us"]), dephasing_k=n["dephasing_k"])
        except ValueError as exc:
            raise ConfigError(f"config noise: {exc}") from None

    def cost(self) -> CostConfig:
        c = self["cost"]
        return CostConfig(m=c["m"], n_sequences=c["K"], n_shots=c["shots"], seed=c["seed"])

    def simulation(self) -> SimulationSettings:
        f = self["filter"]
        return SimulationSettings(rise_time=f["rise_time_ns"], oversample=f["oversample"])

    def context(self) -> PulseContext:
        d = self["drag"]
        return PulseContext(
            device=self.device(),
            noise=self.noise(),
            n_samples=d["n_samples"],
            ssb_nominal=self.ssb_frequency,
            sigma_fraction=d["sigma_fraction"],
            settings=self.simulation(),
        )

    def stage_settings(self, pwc: bool = False) -> StageSettings:
        c = self["cmaes"]
        s0, b = c["sigma0"], c["bounds"]
        return StageSettings(
            popsize=c["lambda"],
            max_iterations=c["pwc_max_iter"] if pwc else c["max_iter"],
            target_cost=c["target"],
            amplitude_step=s0["amplitude"],
            beta_step=s0["beta"],
            ssb_step=mhz_to_rad_per_ns(s0["ssb_mhz"]),
            correction_step=mhz_to_rad_per_ns(s0["correction_mhz"]),
            amplitude_range=b["amplitude"],
            beta_bound=b["beta"],
            ssb_range=mhz_to_rad_per_ns(b["ssb_mhz"]),
            correction_bound=b["correction"],
            seed=self["cost"]["seed"] + (1 if pwc else 0),
        )
