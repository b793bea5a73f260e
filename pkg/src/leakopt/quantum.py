"""Driven anharmonic-oscillator model of a transmon.

Density matrices are vectorized by stacking columns, so the superoperator of
``rho -> A rho B`` is ``kron(B.T, A)`` and unitary conjugation by ``U`` is
``kron(U.conj(), U)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .pulses import SampledPulse

TWO_PI = 2 * math.pi


def mhz_to_rad_per_ns(f_mhz: float) -> float:
    return TWO_PI * f_mhz * 1e-3


@dataclass(frozen=True)
class DeviceConfig:
    """Transmon truncated to ``dim`` levels, in the frame of the drive.

    ``anharmonicity`` and ``detuning`` are angular frequencies in rad/ns;
    ``detuning`` is the drive frequency minus the calibrated qubit frequency.
    """

    dim: int = 4
    anharmonicity: float = mhz_to_rad_per_ns(-315.28)
    detuning: float = 0.0
    dt: float = 1 / 2.4

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"need at least 2 levels, got {self.dim}")
        if not self.dt > 0:
            raise ValueError("sample period must be positive")

    def with_detuning(self, detuning: float) -> "DeviceConfig":
        return replace(self, detuning=detuning)


@dataclass(frozen=True)
class NoiseModel:
    """Relaxation (T1), total dephasing (T2) and drive-dependent dephasing.

    Times in ns; ``math.inf`` switches a channel off, as does its flag. An
    infinite T2 means no pure dephasing beyond the T1 contribution.
    """

    t1: float = math.inf
    t2: float = math.inf
    dephasing_k: float = 0.0
    use_t1: bool = True
    use_t2: bool = True

    def __post_init__(self):
        if self.use_t1 and not self.t1 > 0:
            raise ValueError(f"t1 must be positive, got {self.t1}")
        if self.use_t2 and not self.t2 > 0:
            raise ValueError(f"t2 must be positive, got {self.t2}")
        if not self.dephasing_k >= 0:
            raise ValueError("dephasing_k must be non-negative")
        if self.pure_dephasing_rate < -1e-15:
            raise ValueError(f"t2={self.t2} exceeds 2*t1={2 * self.t1}")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls()

    @property
    def relaxation_rate(self) -> float:
        return 1 / self.t1 if self.use_t1 else 0.0

    @property
    def pure_dephasing_rate(self) -> float:
        if not self.use_t2 or math.isinf(self.t2):
            return 0.0
        return 1 / self.t2 - self.relaxation_rate / 2

    @property
    def is_noiseless(self) -> bool:
        return (
            self.relaxation_rate == 0
            and self.pure_dephasing_rate <= 0
            and self.dephasing_k == 0
        )


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """Linear map on column-stacked ``dim x dim`` density matrices.

    ``b @ a`` is the channel that applies ``a`` first, then ``b``.
    """

    superop: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        s = np.array(self.superop, dtype=complex)
        d = math.isqrt(s.shape[0])
        if s.ndim != 2 or s.shape[0] != s.shape[1] or d * d != s.shape[0]:
            raise ValueError(f"superoperator must be d^2 x d^2, got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "superop", s)
        object.__setattr__(self, "dim", d)

    @classmethod
    def identity(cls, dim: int) -> "QuantumChannel":
        return cls(np.eye(dim * dim))

    @classmethod
    def from_unitary(cls, u) -> "QuantumChannel":
        u = np.asarray(u)
        return cls(np.kron(u.conj(), u))

    @classmethod
    def from_kraus(cls, kraus) -> "QuantumChannel":
        return cls(sum(np.kron(k.conj(), k) for k in kraus))

    def __matmul__(self, other: "QuantumChannel") -> "QuantumChannel":
        if not isinstance(other, QuantumChannel):
            return NotImplemented
        return QuantumChannel(self.superop @ other.superop)

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho)
        out = self.superop @ rho.reshape(-1, order="F")
        return out.reshape(self.dim, self.dim, order="F")

    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ij |i><j| (x) Lambda(|i><j|)`` (input index first)."""
        d = self.dim
        # superop[(a,b),(i,j)] with column-stacking index a + d*b
        s = self.superop.reshape(d, d, d, d, order="F")  # s[a, b, i, j]
        return s.transpose(2, 0, 3, 1).reshape(d * d, d * d)

    def trace_defect(self) -> float:
        """Max deviation of ``Tr(Lambda(rho))`` from ``Tr(rho)`` over basis inputs."""
        d = self.dim
        trace_row = np.eye(d).reshape(-1, order="F")
        return float(np.max(np.abs(trace_row @ self.superop - trace_row)))

    def min_choi_eigenvalue(self) -> float:
        c = self.choi()
        return float(np.linalg.eigvalsh((c + c.conj().T) / 2).min())

    def is_cptp(self, tp_tol: float = 1e-8, cp_tol: float = 1e-6) -> bool:
        return self.trace_defect() <= tp_tol and self.min_choi_eigenvalue() >= -cp_tol


# -- operators ---------------------------------------------------------------

def drift_hamiltonian(cfg: DeviceConfig) -> np.ndarray:
    j = np.arange(cfg.dim)
    return np.diag(j * cfg.detuning + cfg.anharmonicity * j * (j - 1) / 2).astype(complex)


def lowering_operator(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)


def number_operator(d: int) -> np.ndarray:
    return np.diag(np.arange(d)).astype(complex)


def control_operators(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Ladder couplings ``sigma_x = a + a^dag`` and ``sigma_y = i(a^dag - a)``."""
    if d < 2:
        raise ValueError("need d >= 2")
    a = lowering_operator(d)
    ad = a.conj().T
    return a + ad, 1j * (ad - a)


def control_hamiltonians(pulse: SampledPulse, cfg: DeviceConfig) -> np.ndarray:
    """Stack of ``H_n = H_drift + Re(Omega_n)/2 sigma_x + Im(Omega_n)/2 sigma_y``."""
    sx, sy = control_operators(cfg.dim)
    omega = pulse.samples
    return (
        drift_hamiltonian(cfg)[None]
        + (omega.real / 2)[:, None, None] * sx[None]
        + (omega.imag / 2)[:, None, None] * sy[None]
    )


def _check_pulse(pulse: SampledPulse) -> None:
    if not np.all(np.isfinite(pulse.samples)):
        raise ValueError("pulse samples must be finite")


def propagate_unitary(pulse: SampledPulse, cfg: DeviceConfig) -> np.ndarray:
    """Time-ordered product of ``exp(-i H_n dt)`` over the pulse samples.

    Steps use the pulse's own sample period, which may be finer than the AWG
    period after oversampled filtering.
    """
    _check_pulse(pulse)
    hs = control_hamiltonians(pulse, cfg)
    w, v = np.linalg.eigh(hs)
    steps = (v * np.exp(-1j * w * pulse.dt)[:, None, :]) @ v.conj().transpose(0, 2, 1)
    u = np.eye(cfg.dim, dtype=complex)
    for step in steps:
        u = step @ u
    return u


def collapse_operators(noise: NoiseModel, d: int) -> list[np.ndarray]:
    """Amplitude damping ``sqrt(1/T1) a`` and pure dephasing ``sqrt(2 g) n``."""
    ops = []
    gamma1 = noise.relaxation_rate
    if gamma1 > 0:
        ops.append(math.sqrt(gamma1) * lowering_operator(d))
    gamma_pd = noise.pure_dephasing_rate
    if gamma_pd < -1e-15:
        raise ValueError(f"negative pure-dephasing rate {gamma_pd}")
    if gamma_pd > 0:
        ops.append(math.sqrt(2 * gamma_pd) * number_operator(d))
    return ops


def lindblad_generator(h: np.ndarray, c_ops) -> np.ndarray:
    """Superoperator of ``-i[H, rho] + sum_k D[c_k] rho`` (column stacking).

    Accepts a stack of Hamiltonians with shape ``(..., d, d)``.
    """
    h = np.asarray(h)
    d = h.shape[-1]
    eye = np.eye(d)
    gen = -1j * (_kron_batch(eye, h) - _kron_batch(np.swapaxes(h, -1, -2), eye))
    for c in c_ops:
        cdc = c.conj().T @ c
        gen = gen + np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return gen


def _kron_batch(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 2 and b.ndim == 2:
        return np.kron(a, b)
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    shape = out.shape
    return out.reshape(*shape[:-4], shape[-4] * shape[-3], shape[-2] * shape[-1])


def propagate_open(
    pulse: SampledPulse, cfg: DeviceConfig, noise: NoiseModel
) -> QuantumChannel:
    """Time-ordered product of ``exp(L_n dt)`` for the Lindblad generators."""
    _check_pulse(pulse)
    gens = lindblad_generator(control_hamiltonians(pulse, cfg), collapse_operators(noise, cfg.dim))
    steps = scipy.linalg.expm(gens * pulse.dt)
    s = np.eye(cfg.dim**2, dtype=complex)
    for step in steps:
        s = step @ s
    return QuantumChannel(s)


def qubit_z(d: int) -> np.ndarray:
    """Pauli Z on the computational levels, identity on the rest."""
    z = np.ones(d)
    z[1] = -1
    return np.diag(z).astype(complex)


def dephasing_channel(gamma_phi: float, d: int = 2) -> QuantumChannel:
    """``(1 - g) rho + g Z rho Z`` with Z acting on levels 0 and 1."""
    if not 0 <= gamma_phi <= 1:
        raise ValueError(f"gamma_phi must lie in [0, 1], got {gamma_phi}")
    z = qubit_z(d)
    return QuantumChannel(
        (1 - gamma_phi) * np.eye(d * d) + gamma_phi * np.kron(z.conj(), z)
    )


def depolarizing_channel(p: float, d: int = 2) -> QuantumChannel:
    """``(1 - p) rho + p Tr(P rho) P / 2`` on the computational block.

    Population outside the qubit levels is left in place.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    paulis = _paulis_embedded(d)
    kraus = [math.sqrt(1 - 3 * p / 4) * paulis[0]]
    kraus += [math.sqrt(p / 4) * pk for pk in paulis[1:]]
    # paulis[0] is the full identity, so levels >= 2 keep their weight
    s = sum(np.kron(k.conj(), k) for k in kraus)
    if d > 2:
        # the X/Y/Z Kraus terms annihilate levels >= 2; restore trace there
        q = np.zeros((d, d), dtype=complex)
        q[2:, 2:] = np.eye(d - 2)
        s = s + (p * 3 / 4) * np.kron(q, q)
    return QuantumChannel(s)


def _paulis_embedded(d: int) -> list[np.ndarray]:
    out = []
    for p in PAULIS:
        m = np.zeros((d, d), dtype=complex)
        m[:2, :2] = p
        out.append(m)
    out[0] = np.eye(d, dtype=complex)
    return out


PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


# -- fidelity ----------------------------------------------------------------

def project_to_qubit(channel: QuantumChannel) -> QuantumChannel:
    """Restrict a channel to inputs and outputs on levels 0 and 1."""
    d = channel.dim
    idx = [i + d * j for j in range(2) for i in range(2)]
    return QuantumChannel(channel.superop[np.ix_(idx, idx)])


def chi_matrix(channel: QuantumChannel) -> np.ndarray:
    """Process matrix of a qubit channel in the normalized Pauli basis.

    Normalized so that the identity channel has ``chi[0, 0] == 1``.
    """
    if channel.dim != 2:
        raise ValueError("chi_matrix expects a qubit channel")
    # choi = sum_mn chi_mn |P_m>><<P_n| with |P>> = vec(P)
    choi = channel.choi()
    basis = np.array([p.reshape(-1, order="F") for p in PAULIS]).T / 2
    return basis.conj().T @ choi @ basis


def gate_fidelity(implemented: QuantumChannel, ideal) -> float:
    """Average gate fidelity ``(2 chi_00 + 1) / 3`` of the qubit block.

    ``chi_00`` is the identity element of the process matrix of
    ``ideal^dag o implemented``. Leaked population reduces ``chi_00``.
    """
    if not implemented.is_cptp():
        warnings.warn("channel is not CPTP within tolerance", RuntimeWarning, stacklevel=2)
    qubit = project_to_qubit(implemented) if implemented.dim > 2 else implemented
    u = np.asarray(ideal)
    error = QuantumChannel.from_unitary(u.conj().T) @ qubit
    x00 = chi_matrix(error)[0, 0].real
    return float((2 * x00 + 1) / 3)


def leakage(channel: QuantumChannel) -> float:
    """Population leaving levels {0, 1} for a maximally mixed qubit input."""
    d = channel.dim
    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = rho[1, 1] = 0.5
    p = populations(channel.apply(rho))
    return float(1 - p[0] - p[1])


# -- states ------------------------------------------------------------------

def basis_state(j: int, d: int) -> np.ndarray:
    psi = np.zeros(d, dtype=complex)
    psi[j] = 1
    return psi


def ground_state(d: int) -> np.ndarray:
    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = 1
    return rho


def populations(rho) -> np.ndarray:
    return np.real(np.diagonal(np.asarray(rho))).copy()


def fold_populations(p) -> np.ndarray:
    """``(p0, p1, p2+)``: levels above 2 are counted as level 2."""
    p = np.asarray(p, dtype=float)
    return np.array([p[0], p[1], p[2:].sum()])


def is_density_matrix(rho, tol: float = 1e-8) -> bool:
    rho = np.asarray(rho)
    herm = np.max(np.abs(rho - rho.conj().T)) <= tol
    trace = abs(np.trace(rho) - 1) <= tol
    eig = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -max(tol, 1e-8)
    return bool(herm and trace and eig)
