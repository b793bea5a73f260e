"""Decoding optimizer vectors into pulses and scoring them with the
fixed-length RB cost."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .clifford import (
    CliffordSet,
    CliffordTable,
    CostConfig,
    CostResult,
    SimulationSettings,
    build_clifford_table,
    rb_cost,
    sequence_set,
)
from .pulses import DragParams, PwcCorrections, SampledPulse, apply_corrections, drag_pulse
from .quantum import DeviceConfig, NoiseModel


class Stage(str, Enum):
    DRAG = "DRAG"
    PWC = "PWC"


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """``(A, beta, w_ssb)`` for DRAG, plus ``(a_1, b_1, ..., a_N, b_N)`` for PWC.

    ``w_ssb`` is the absolute sideband frequency in rad/ns.
    """

    stage: Stage
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "stage", Stage(self.stage))
        if self.stage is Stage.DRAG and v.size != 3:
            raise ValueError(f"DRAG parameter set has 3 entries, got {v.size}")
        if self.stage is Stage.PWC and (v.size < 5 or (v.size - 3) % 2):
            raise ValueError(f"PWC parameter set needs 3 + 2N entries, got {v.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.stage is other.stage and np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def amplitude(self) -> float:
        return float(self.values[0])

    @property
    def beta(self) -> float:
        return float(self.values[1])

    @property
    def ssb_frequency(self) -> float:
        return float(self.values[2])

    @property
    def corrections(self) -> PwcCorrections | None:
        if self.stage is Stage.DRAG:
            return None
        ab = self.values[3:].reshape(-1, 2)
        return PwcCorrections(ab[:, 0], ab[:, 1])

    def extend(self, n_samples: int) -> "ParameterSet":
        """PWC parameter set starting from this DRAG set with zero corrections."""
        if self.stage is not Stage.DRAG:
            raise ValueError("only a DRAG set can be extended")
        return ParameterSet(Stage.PWC, np.concatenate([self.values, np.zeros(2 * n_samples)]))

    def to_dict(self) -> dict:
        out = {
            "stage": self.stage.value,
            "amplitude": self.amplitude,
            "beta": self.beta,
            "ssb_frequency": self.ssb_frequency,
        }
        if self.corrections is not None:
            out["a"] = self.corrections.a.tolist()
            out["b"] = self.corrections.b.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSet":
        values = [d["amplitude"], d["beta"], d["ssb_frequency"]]
        if Stage(d["stage"]) is Stage.PWC:
            values += [x for ab in zip(d["a"], d["b"]) for x in ab]
        return cls(d["stage"], values)


@dataclass(frozen=True, eq=False)
class PulseContext:
    """Everything needed to turn a parameter vector into Clifford channels."""

    device: DeviceConfig
    noise: NoiseModel
    n_samples: int
    ssb_nominal: float  # rad/ns
    sigma_fraction: float = 0.25
    settings: SimulationSettings = SimulationSettings()
    table: CliffordTable = field(default_factory=build_clifford_table)

    def drag_params(self, params: ParameterSet) -> DragParams:
        return DragParams(
            amplitude=params.amplitude,
            beta=params.beta,
            anharmonicity=self.device.anharmonicity,
            n_samples=self.n_samples,
            sigma_fraction=self.sigma_fraction,
        )

    def base_pulse(self, params: ParameterSet) -> SampledPulse:
        return drag_pulse(self.drag_params(params), self.device.dt)

    def pulse(self, params: ParameterSet) -> SampledPulse:
        if not np.all(np.isfinite(params.values)):
            raise ValueError("non-finite parameters")
        base = self.base_pulse(params)
        corr = params.corrections
        if corr is None:
            return base
        return apply_corrections(base, corr)

    def device_for(self, params: ParameterSet) -> DeviceConfig:
        return self.device.with_detuning(params.ssb_frequency - self.ssb_nominal)

    def cliffords(self, params: ParameterSet) -> CliffordSet:
        return CliffordSet.simulate(
            self.pulse(params), self.device_for(params), self.noise, self.settings, self.table
        )

    def initial_amplitude(self) -> float:
        """Peak amplitude giving a pi/2 rotation for the beta = 0 shape."""
        unit = drag_pulse(
            DragParams(1.0, 0.0, self.device.anharmonicity, self.n_samples, sigma_fraction=self.sigma_fraction),
            self.device.dt,
        )
        return (math.pi / 2) / (unit.dt * float(np.sum(unit.samples.real)))


def evaluate_cost(
    params: ParameterSet,
    config: CostConfig,
    context: PulseContext,
    stream: tuple[int, ...] = (0, 0),
    sequences=None,
) -> CostResult:
    """Mean ground-state fraction after ``config.n_sequences`` random Clifford
    sequences of length ``config.m`` (plus recovery).

    The sequences depend only on ``config.seed``; shot noise is drawn from
    ``(config.seed, *stream, sequence)``. Undecodable parameters give cost 0
    with ``valid=False``.
    """
    t0 = time.perf_counter()
    try:
        pulse = context.pulse(params)
        device = context.device_for(params)
    except ValueError as exc:
        return CostResult(0.0, False, str(exc), {"sequence_construction": time.perf_counter() - t0})
    if sequences is None:
        sequences = sequence_set(config.m, config.n_sequences, context.table, config.seed)
    t1 = time.perf_counter()
    try:
        cliffords = CliffordSet.simulate(pulse, device, context.noise, context.settings, context.table)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return CostResult(0.0, False, str(exc), {"sequence_construction": t1 - t0, "setup": time.perf_counter() - t1})
    t2 = time.perf_counter()
    value = rb_cost(cliffords, sequences, config.n_shots, config.seed, stream)
    t3 = time.perf_counter()
    timings = {"sequence_construction": t1 - t0, "setup": t2 - t1, "evaluation": t3 - t2}
    if not math.isfinite(value):
        return CostResult(0.0, False, "non-finite cost", timings)
    return CostResult(value, True, None, timings)


def evaluate_fidelity(params: ParameterSet, context: PulseContext) -> CostResult:
    """Simulated average Clifford gate fidelity of ``params``.

    This is the model-based objective used for open-loop calibration; it has
    no sampling noise.
    """
    t0 = time.perf_counter()
    try:
        pulse = context.pulse(params)
        device = context.device_for(params)
    except ValueError as exc:
        return CostResult(0.0, False, str(exc), {"sequence_construction": time.perf_counter() - t0})
    t1 = time.perf_counter()
    try:
        cliffords = CliffordSet.simulate(pulse, device, context.noise, context.settings, context.table)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return CostResult(0.0, False, str(exc), {"sequence_construction": t1 - t0, "setup": time.perf_counter() - t1})
    t2 = time.perf_counter()
    value = cliffords.average_fidelity()
    timings = {"sequence_construction": t1 - t0, "setup": t2 - t1, "evaluation": time.perf_counter() - t2}
    if not math.isfinite(value):
        return CostResult(0.0, False, "non-finite cost", timings)
    return CostResult(value, True, None, timings)
