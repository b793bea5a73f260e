"""Single-qubit Clifford group from +-X/2, +-Y/2 pulses, randomized
benchmarking sequences and the fixed-length RB cost function."""
from __future__ import annotations

import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .pulses import SampledPulse, atomic_pulse, bandwidth_filter
from .quantum import (
    DeviceConfig,
    NoiseModel,
    QuantumChannel,
    dephasing_channel,
    fold_populations,
    ground_state,
    populations,
    propagate_open,
)

PHASE_TOL = 1e-9


@dataclass(frozen=True)
class AtomicGate:
    label: str
    phase: float

    @property
    def unitary(self) -> np.ndarray:
        # exp(-i pi/4 (cos(phi) X + sin(phi) Y))
        c, s = _axis(self.phase)
        n = np.array([[0, c - 1j * s], [c + 1j * s, 0]])
        return (np.eye(2) - 1j * n) / math.sqrt(2)


def _axis(phase):
    quarter = round(phase / (math.pi / 2)) % 4
    return [(1, 0), (0, 1), (-1, 0), (0, -1)][quarter]


ATOMICS = (
    AtomicGate("+X/2", 0.0),
    AtomicGate("-X/2", math.pi),
    AtomicGate("+Y/2", math.pi / 2),
    AtomicGate("-Y/2", 3 * math.pi / 2),
)
ATOMIC_BY_LABEL = {g.label: g for g in ATOMICS}


def same_up_to_phase(u, v, tol: float = PHASE_TOL) -> bool:
    return abs(np.trace(np.asarray(u).conj().T @ v)) / 2 > 1 - tol


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Fix the global phase: first sizable entry real and positive."""
    flat = u.reshape(-1)
    k = int(np.argmax(np.abs(flat) > 1e-6))
    return u * (abs(flat[k]) / flat[k])


@dataclass(frozen=True)
class CliffordEntry:
    index: int
    unitary: np.ndarray
    decomposition: tuple[str, ...]  # atomic labels in time order

    def compose(self) -> np.ndarray:
        u = np.eye(2, dtype=complex)
        for label in self.decomposition:
            u = ATOMIC_BY_LABEL[label].unitary @ u
        return u


@dataclass(frozen=True, eq=False)
class CliffordTable:
    entries: tuple[CliffordEntry, ...]
    products: np.ndarray = field(repr=False)  # products[i, j]: index of U_i U_j
    inverses: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> CliffordEntry:
        return self.entries[i]

    def lookup(self, u) -> int:
        for e in self.entries:
            if same_up_to_phase(e.unitary, u):
                return e.index
        raise KeyError("unitary is not a Clifford")

    def mean_length(self) -> float:
        return float(np.mean([len(e.decomposition) for e in self.entries]))


@lru_cache(maxsize=1)
def build_clifford_table() -> CliffordTable:
    """Breadth-first closure of the four atomic gates.

    The first word reaching a phase class is kept, so every decomposition is
    one of the shortest.
    """
    found: list[tuple[np.ndarray, tuple[str, ...]]] = [(np.eye(2, dtype=complex), ())]
    queue = deque(found)
    while queue:
        u, word = queue.popleft()
        for g in ATOMICS:
            v = g.unitary @ u
            if any(same_up_to_phase(v, w) for w, _ in found):
                continue
            item = (v, word + (g.label,))
            found.append(item)
            queue.append(item)
    if len(found) != 24:
        raise RuntimeError(f"Clifford closure produced {len(found)} elements, expected 24")

    entries = tuple(
        CliffordEntry(i, canonical_phase(u), word) for i, (u, word) in enumerate(found)
    )
    n = len(entries)

    def find(u):
        for e in entries:
            if same_up_to_phase(e.unitary, u):
                return e.index
        raise RuntimeError("Clifford table is not closed under products")

    products = np.array(
        [[find(a.unitary @ b.unitary) for b in entries] for a in entries], dtype=int
    )
    inverses = np.array([int(np.flatnonzero(products[i] == 0)[0]) for i in range(n)])
    for arr in (products, inverses):
        arr.setflags(write=False)
    return CliffordTable(entries, products, inverses)


# -- sequences ---------------------------------------------------------------

@dataclass(frozen=True)
class RbSequence:
    clifford_indices: tuple[int, ...]
    recovery_index: int
    seed: int = 0

    @property
    def m(self) -> int:
        return len(self.clifford_indices)

    def all_indices(self) -> tuple[int, ...]:
        return self.clifford_indices + (self.recovery_index,)

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "seed": self.seed,
                "indices": list(self.clifford_indices),
                "recovery": self.recovery_index,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "RbSequence":
        d = json.loads(text)
        if len(d["indices"]) != d["m"]:
            raise ValueError("sequence length does not match m")
        return cls(tuple(int(i) for i in d["indices"]), int(d["recovery"]), int(d["seed"]))


def recovery_for(indices: Sequence[int], table: CliffordTable) -> int:
    """Index of the inverse of ``C_m ... C_1``."""
    net = 0
    for i in indices:
        net = table.products[i, net]
    return int(table.inverses[net])


def rng_for(*key: int) -> np.random.Generator:
    """Independent Philox stream for an integer key such as
    ``(seed, iteration, candidate, sequence)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def random_sequence(m: int, table: CliffordTable, seed: int, stream: int = 0) -> RbSequence:
    if m < 0:
        raise ValueError("m must be non-negative")
    rng = rng_for(seed, stream)
    idx = tuple(int(i) for i in rng.integers(0, len(table), size=m))
    return RbSequence(idx, recovery_for(idx, table), seed)


def sequence_set(m: int, k: int, table: CliffordTable, seed: int) -> list[RbSequence]:
    return [random_sequence(m, table, seed, stream=i) for i in range(k)]


# -- channels ----------------------------------------------------------------

@dataclass(frozen=True)
class SimulationSettings:
    """How atomic pulses are turned into channels."""

    rise_time: float | None = 0.3  # ns, None disables the bandwidth filter
    oversample: int = 4


def drive_dephasing(pulse: SampledPulse, noise: NoiseModel) -> float:
    """``k * mean|Omega| * t_gate`` for the drive-induced dephasing channel."""
    if noise.dephasing_k == 0:
        return 0.0
    gamma = noise.dephasing_k * float(np.mean(np.abs(pulse.samples))) * pulse.duration
    if gamma > 1:
        raise ValueError(f"drive dephasing probability {gamma:.3g} exceeds 1")
    return gamma


def atomic_channels(
    shape: SampledPulse,
    cfg: DeviceConfig,
    noise: NoiseModel,
    settings: SimulationSettings = SimulationSettings(),
) -> dict[str, QuantumChannel]:
    """Channel per atomic label: filtered pulse dynamics followed by the
    drive-dependent dephasing channel."""
    out = {}
    for g in ATOMICS:
        pulse = atomic_pulse(shape, g.phase)
        sim = pulse
        if settings.rise_time is not None:
            sim = bandwidth_filter(pulse, settings.rise_time, settings.oversample)
        ch = propagate_open(sim, cfg, noise)
        gamma = drive_dephasing(pulse, noise)
        if gamma > 0:
            ch = dephasing_channel(gamma, cfg.dim) @ ch
        out[g.label] = ch
    return out


def compose_clifford(entry: CliffordEntry, atomics: dict[str, QuantumChannel]) -> QuantumChannel:
    dim = next(iter(atomics.values())).dim
    ch = QuantumChannel.identity(dim)
    for label in entry.decomposition:
        ch = atomics[label] @ ch
    return ch


def clifford_channel(
    entry: CliffordEntry,
    shape: SampledPulse,
    cfg: DeviceConfig,
    noise: NoiseModel,
    settings: SimulationSettings = SimulationSettings(),
) -> QuantumChannel:
    return compose_clifford(entry, atomic_channels(shape, cfg, noise, settings))


@dataclass(frozen=True, eq=False)
class CliffordSet:
    """All 24 Clifford channels of one pulse shape, ready for sequences."""

    table: CliffordTable
    channels: tuple[QuantumChannel, ...]

    @property
    def dim(self) -> int:
        return self.channels[0].dim

    @classmethod
    def from_atomics(cls, atomics: dict[str, QuantumChannel], table: CliffordTable | None = None):
        table = table or build_clifford_table()
        return cls(table, tuple(compose_clifford(e, atomics) for e in table.entries))

    @classmethod
    def simulate(
        cls,
        shape: SampledPulse,
        cfg: DeviceConfig,
        noise: NoiseModel,
        settings: SimulationSettings = SimulationSettings(),
        table: CliffordTable | None = None,
    ) -> "CliffordSet":
        return cls.from_atomics(atomics=atomic_channels(shape, cfg, noise, settings), table=table)

    @classmethod
    def ideal(cls, dim: int = 2, table: CliffordTable | None = None, error=None) -> "CliffordSet":
        """Perfect Clifford unitaries embedded in ``dim`` levels, optionally
        followed by a fixed ``error`` channel."""
        table = table or build_clifford_table()
        chans = []
        for e in table.entries:
            u = np.eye(dim, dtype=complex)
            u[:2, :2] = e.unitary
            ch = QuantumChannel.from_unitary(u)
            if error is not None:
                ch = error @ ch
            chans.append(ch)
        return cls(table, tuple(chans))

    def average_fidelity(self) -> float:
        from .quantum import gate_fidelity

        return float(np.mean([gate_fidelity(c, e.unitary) for c, e in zip(self.channels, self.table.entries)]))


def final_state(seq: RbSequence, cliffords: CliffordSet) -> np.ndarray:
    d = cliffords.dim
    vec = ground_state(d).reshape(-1, order="F")
    for i in seq.all_indices():
        vec = cliffords.channels[i].superop @ vec
    return vec.reshape(d, d, order="F")


def sequence_populations(seq: RbSequence, cliffords: CliffordSet) -> np.ndarray:
    """Populations ``p_j`` of every level after the sequence and recovery."""
    p = populations(final_state(seq, cliffords))
    p = np.clip(p, 0, None)
    return p / p.sum()


def sequence_survival(
    seq: RbSequence,
    shape: SampledPulse,
    cfg: DeviceConfig,
    noise: NoiseModel,
    settings: SimulationSettings = SimulationSettings(),
) -> np.ndarray:
    return sequence_populations(seq, CliffordSet.simulate(shape, cfg, noise, settings))


def sample_counts(p, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial ``(n0, n1, n2+)`` counts for populations ``p``."""
    folded = np.clip(fold_populations(p), 0, None)
    return rng.multinomial(shots, folded / folded.sum())


# -- cost --------------------------------------------------------------------

@dataclass(frozen=True)
class CostConfig:
    m: int = 120
    n_sequences: int = 20
    n_shots: int | None = 1000  # None: exact expectation, no sampling
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n_sequences < 1:
            raise ValueError("m and n_sequences must be >= 1")
        if self.n_shots is not None and self.n_shots < 1:
            raise ValueError("n_shots must be >= 1")


@dataclass
class CostResult:
    value: float
    valid: bool = True
    error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)  # seconds


def rb_cost(
    cliffords: CliffordSet,
    sequences: Sequence[RbSequence],
    n_shots: int | None,
    seed: int,
    stream: tuple[int, ...] = (0, 0),
) -> float:
    """Mean ground-state fraction over the sequences.

    Shot noise for sequence ``k`` is drawn from the stream
    ``(seed, *stream, k)``, so the value does not depend on evaluation order.
    """
    fractions = []
    for k, seq in enumerate(sequences):
        p = sequence_populations(seq, cliffords)
        if n_shots is None:
            fractions.append(p[0])
        else:
            counts = sample_counts(p, n_shots, rng_for(seed, *stream, k))
            fractions.append(counts[0] / n_shots)
    return float(np.mean(fractions))
