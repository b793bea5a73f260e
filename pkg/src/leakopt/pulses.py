"""Sampled complex pulse envelopes: DRAG construction, piecewise-constant
corrections, bandwidth filtering, phase rotation and AWG export.

Times are in ns and amplitudes in rad/ns throughout. Sample ``n`` of a pulse
sits at the midpoint ``t_n = (n + 1/2) * dt``.
"""
from __future__ import annotations

import json
import math
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: 10-90 % rise time of a Gaussian step response in units of its std.
RISE_TIME_PER_SIGMA = 2.563


@dataclass(frozen=True, eq=False)
class SampledPulse:
    """Complex control envelope ``Omega_n = Omega_x + i Omega_y``."""

    samples: np.ndarray
    dt: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex).reshape(-1)
        if samples.size < 1:
            raise ValueError("pulse needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("pulse samples must be finite")
        if not self.dt > 0:
            raise ValueError(f"sample period must be positive, got {self.dt}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self)) + 0.5) * self.dt

    def scaled(self, factor: complex) -> "SampledPulse":
        return SampledPulse(self.samples * factor, self.dt)

    def __eq__(self, other):
        if not isinstance(other, SampledPulse):
            return NotImplemented
        return self.dt == other.dt and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True)
class DragParams:
    """Parameters of a first-order DRAG pulse.

    ``sigma=None`` selects the default width ``sigma_fraction * duration``.
    With ``pedestal=True`` the Gaussian is shifted and rescaled so that it
    vanishes at the pulse edges and peaks at ``amplitude``.
    """

    amplitude: float
    beta: float
    anharmonicity: float
    n_samples: int
    sigma: float | None = None
    sigma_fraction: float = 0.25
    pedestal: bool = True

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("DRAG pulse needs at least 2 samples")
        if self.anharmonicity == 0:
            raise ValueError("anharmonicity must be non-zero")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.sigma is None and not self.sigma_fraction > 0:
            raise ValueError("sigma_fraction must be positive")

    def width(self, dt: float) -> float:
        if self.sigma is not None:
            return self.sigma
        return self.sigma_fraction * self.n_samples * dt


@dataclass(frozen=True)
class PwcCorrections:
    """Per-sample corrections ``a_n + i b_n`` added to a base pulse."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.shape != b.shape:
            raise ValueError(f"a and b differ in length: {a.size} != {b.size}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def zeros(cls, n: int) -> "PwcCorrections":
        return cls(np.zeros(n), np.zeros(n))

    @property
    def as_complex(self) -> np.ndarray:
        return self.a + 1j * self.b


@dataclass(frozen=True)
class CarrierConfig:
    ssb_frequency: float  # rad/ns
    phase: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.ssb_frequency) and math.isfinite(self.phase)):
            raise ValueError("carrier frequency and phase must be finite")


def gaussian_envelope(t, amplitude, center, sigma, edge=None):
    """Gaussian ``amplitude * g(t)`` and its time derivative.

    If ``edge`` is given, the value of ``g`` at time ``edge`` is subtracted
    and the result rescaled so the peak stays at ``amplitude``.
    """
    t = np.asarray(t, dtype=float)
    g = np.exp(-((t - center) ** 2) / (2 * sigma**2))
    dg = -(t - center) / sigma**2 * g
    if edge is not None:
        g_edge = math.exp(-((edge - center) ** 2) / (2 * sigma**2))
        g = (g - g_edge) / (1 - g_edge)
        dg = dg / (1 - g_edge)
    return amplitude * g, amplitude * dg


def drag_pulse(params: DragParams, dt: float) -> SampledPulse:
    """Sample ``Omega_x(t) + i (beta / Delta) dOmega_x/dt`` on the AWG grid."""
    duration = params.n_samples * dt
    center = duration / 2
    t = (np.arange(params.n_samples) + 0.5) * dt
    edge = 0.0 if params.pedestal else None
    omega_x, d_omega_x = gaussian_envelope(
        t, params.amplitude, center, params.width(dt), edge=edge
    )
    return SampledPulse(omega_x + 1j * (params.beta / params.anharmonicity) * d_omega_x, dt)


def apply_corrections(base: SampledPulse, corr: PwcCorrections) -> SampledPulse:
    if corr.a.size != len(base):
        raise ValueError(
            f"corrections have {corr.a.size} samples, pulse has {len(base)}"
        )
    return SampledPulse(base.samples + corr.as_complex, base.dt)


def remove_corrections(pulse: SampledPulse, corr: PwcCorrections) -> SampledPulse:
    if corr.a.size != len(pulse):
        raise ValueError(
            f"corrections have {corr.a.size} samples, pulse has {len(pulse)}"
        )
    return SampledPulse(pulse.samples - corr.as_complex, pulse.dt)


def rotation_angle(pulse: SampledPulse) -> float:
    """Rotation angle about the drive axis: total in-phase area."""
    return float(pulse.dt * np.sum(pulse.samples.real))


def complex_area(pulse: SampledPulse) -> complex:
    return complex(pulse.dt * np.sum(pulse.samples))


def filter_kernel(rise_time: float, dt: float) -> np.ndarray:
    """Unit-area sampled Gaussian whose step response rises 10-90 % in
    ``rise_time``."""
    if not rise_time > 0:
        raise ValueError("rise_time must be positive")
    sigma = rise_time / RISE_TIME_PER_SIGMA
    half = math.ceil(3 * sigma / dt)
    k = np.arange(-half, half + 1) * dt
    w = np.exp(-(k**2) / (2 * sigma**2))
    return w / w.sum()


def bandwidth_filter(
    pulse: SampledPulse, rise_time: float, oversample: int = 1
) -> SampledPulse:
    """Emulate the finite AWG bandwidth by Gaussian smoothing.

    With ``oversample > 1`` the pulse is first held (zero-order) on a grid
    ``oversample`` times finer, so the smoothed edges are resolved in time.
    The output is padded by the kernel half-width on both sides, which keeps
    the complex area unchanged.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    samples = np.repeat(pulse.samples, oversample)
    dt = pulse.dt / oversample
    kernel = filter_kernel(rise_time, dt)
    return SampledPulse(np.convolve(samples, kernel, mode="full"), dt)


def atomic_pulse(shape: SampledPulse, phase: float) -> SampledPulse:
    """Rotate the drive axis by ``phase`` (0, pi/2, pi, 3pi/2 give +X, +Y,
    -X, -Y rotations for a real envelope)."""
    if not math.isfinite(phase):
        raise ValueError("phase must be finite")
    return SampledPulse(shape.samples * _phasor(phase), shape.dt)


def _phasor(phase: float) -> complex:
    # exact for multiples of pi/2 so that e.g. +Y/2 is purely imaginary
    quarter = phase / (math.pi / 2)
    if abs(quarter - round(quarter)) < 1e-12:
        return (1, 1j, -1, -1j)[round(quarter) % 4]
    return complex(math.cos(phase), math.sin(phase))


def export_awg(pulse: SampledPulse, carrier: CarrierConfig) -> tuple[np.ndarray, np.ndarray]:
    """I/Q samples of the envelope modulated at the sideband frequency."""
    signal = pulse.samples * np.exp(1j * (carrier.ssb_frequency * pulse.times + carrier.phase))
    return signal.real.copy(), signal.imag.copy()


def demodulate(i, q, carrier: CarrierConfig, dt: float) -> SampledPulse:
    i = np.asarray(i, dtype=float)
    q = np.asarray(q, dtype=float)
    t = (np.arange(i.size) + 0.5) * dt
    return SampledPulse((i + 1j * q) * np.exp(-1j * (carrier.ssb_frequency * t + carrier.phase)), dt)


# -- files -------------------------------------------------------------------

class PulseFileError(ValueError):
    """Malformed pulse CSV or sidecar."""


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_pulse(path, pulse: SampledPulse, description: str = "") -> None:
    """Write ``index,re,im`` CSV plus a JSON sidecar next to it."""
    path = Path(path)
    lines = ["index,re,im"]
    lines += [f"{n},{float(z.real)!r},{float(z.imag)!r}" for n, z in enumerate(pulse.samples)]
    _atomic_write(path, "\n".join(lines) + "\n")
    meta = {"dt_ns": pulse.dt, "n_samples": len(pulse), "description": description}
    _atomic_write(_sidecar(path), json.dumps(meta, indent=2) + "\n")


def read_pulse(path, dt: float | None = None) -> SampledPulse:
    """Read a pulse CSV. The sample period comes from the sidecar unless
    ``dt`` is given."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PulseFileError(f"{path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip() for c in rows[0]] != ["index", "re", "im"]:
        raise PulseFileError(f"{path}: header must be 'index,re,im'")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise PulseFileError(f"{path}: row {lineno} has {len(row)} columns, expected 3")
        try:
            idx, re_, im_ = int(row[0]), float(row[1]), float(row[2])
        except ValueError as exc:
            raise PulseFileError(f"{path}: row {lineno}: {exc}") from exc
        if idx != len(values):
            raise PulseFileError(f"{path}: row {lineno} has index {idx}, expected {len(values)}")
        if not (math.isfinite(re_) and math.isfinite(im_)):
            raise PulseFileError(f"{path}: row {lineno} is not finite")
        values.append(complex(re_, im_))
    if not values:
        raise PulseFileError(f"{path}: no samples")

    sidecar = _sidecar(path)
    if dt is None:
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
            dt = float(meta["dt_ns"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise PulseFileError(f"{sidecar}: cannot read dt_ns ({exc})") from exc
        if meta.get("n_samples", len(values)) != len(values):
            raise PulseFileError(
                f"{sidecar}: n_samples={meta['n_samples']} but CSV has {len(values)} rows"
            )
    return SampledPulse(np.array(values), dt)


def write_awg(path, i, q) -> None:
    lines = ["index,i,q"] + [f"{n},{float(a)!r},{float(b)!r}" for n, (a, b) in enumerate(zip(i, q))]
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
