"""Randomized-benchmarking curves, decay fits and leakage RB analysis."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .clifford import CliffordSet, rng_for, random_sequence, sample_counts, sequence_populations

DEFAULT_LENGTHS = (1, 5, 10, 20, 40, 60, 90, 120, 160, 200)


@dataclass
class RbDataset:
    """Shot counts ``(n0, n1, n2+)`` per (length, sequence)."""

    lengths: np.ndarray
    counts: np.ndarray  # shape (n_lengths, K, 3)
    shots: int
    seed: int

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=int)
        self.counts = np.asarray(self.counts, dtype=int)
        if np.any(np.diff(self.lengths) <= 0):
            raise ValueError("lengths must be strictly increasing")
        if self.counts.shape[0] != self.lengths.size or self.counts.shape[2] != 3:
            raise ValueError(f"counts shape {self.counts.shape} does not match lengths")
        if np.any(self.counts.sum(axis=2) != self.shots):
            raise ValueError("counts do not sum to the shot number")

    @property
    def n_sequences(self) -> int:
        return self.counts.shape[1]

    def fractions(self) -> np.ndarray:
        return self.counts / self.shots

    def mean(self, outcome: str = "p0") -> tuple[np.ndarray, np.ndarray]:
        """Mean over sequences of ``p0`` or ``p_chi1 = p0 + p1``, with its
        standard error.

        The error is the spread across sequences, floored by the binomial
        error of all shots pooled (with an add-half correction so all-zero
        or all-one data keep a finite weight).
        """
        f = self.fractions()
        if outcome == "p0":
            x = f[..., 0]
            hits = self.counts[..., 0].sum(axis=1)
        elif outcome == "chi1":
            x = f[..., 0] + f[..., 1]
            hits = self.counts[..., :2].sum(axis=(1, 2))
        else:
            raise ValueError(f"unknown outcome {outcome!r}")
        k = self.n_sequences
        mean = x.mean(axis=1)
        total = k * self.shots
        p = (hits + 0.5) / (total + 1)
        binom = np.sqrt(p * (1 - p) / total)
        spread = x.std(axis=1, ddof=1) / math.sqrt(k) if k > 1 else np.zeros_like(mean)
        return mean, np.maximum(spread, binom)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "seq_index", "shots", "n0", "n1", "n2"])
        for i, m in enumerate(self.lengths):
            for k in range(self.n_sequences):
                w.writerow([int(m), k, self.shots, *map(int, self.counts[i, k])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = 0) -> "RbDataset":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty dataset")
        lengths = sorted({int(r["m"]) for r in rows})
        k = 1 + max(int(r["seq_index"]) for r in rows)
        shots = {int(r["shots"]) for r in rows}
        if len(shots) != 1:
            raise ValueError("mixed shot numbers")
        counts = np.zeros((len(lengths), k, 3), dtype=int)
        pos = {m: i for i, m in enumerate(lengths)}
        for r in rows:
            counts[pos[int(r["m"])], int(r["seq_index"])] = [int(r["n0"]), int(r["n1"]), int(r["n2"])]
        return cls(np.array(lengths), counts, shots.pop(), seed)


def generate_rb_dataset(
    cliffords: CliffordSet,
    lengths=DEFAULT_LENGTHS,
    n_sequences: int = 20,
    shots: int = 1000,
    seed: int = 0,
) -> RbDataset:
    """Simulate ``n_sequences`` random sequences per length and sample shots.

    Each (length, sequence) cell has its own random streams, so cells can be
    computed in any order.
    """
    lengths = np.asarray(lengths, dtype=int)
    if lengths.size == 0:
        raise ValueError("need at least one length")
    counts = np.zeros((lengths.size, n_sequences, 3), dtype=int)
    for i, m in enumerate(lengths):
        for k in range(n_sequences):
            seq = random_sequence(int(m), cliffords.table, seed, stream=int(m) * 100_003 + k)
            p = sequence_populations(seq, cliffords)
            counts[i, k] = sample_counts(p, shots, rng_for(seed, 1, int(m), k))
    return RbDataset(lengths, counts, shots, seed)


def expected_populations(cliffords: CliffordSet, lengths, n_sequences: int, seed: int = 0) -> np.ndarray:
    """Noise-free ``(p0, p1, p2+)`` averaged over the same sequences that
    :func:`generate_rb_dataset` would draw."""
    from .quantum import fold_populations

    out = []
    for m in lengths:
        ps = [
            fold_populations(
                sequence_populations(
                    random_sequence(int(m), cliffords.table, seed, stream=int(m) * 100_003 + k), cliffords
                )
            )
            for k in range(n_sequences)
        ]
        out.append(np.mean(ps, axis=0))
    return np.array(out)


# -- fitting -----------------------------------------------------------------

@dataclass
class DecayFitResult:
    names: tuple[str, ...]
    params: np.ndarray
    cov: np.ndarray
    residual_norm: float
    converged: bool
    flags: list[str] = field(default_factory=list)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    @property
    def flagged(self) -> bool:
        return bool(self.flags)

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])

    def to_dict(self) -> dict:
        return {
            "params": dict(zip(self.names, map(float, self.params))),
            "stderr": dict(zip(self.names, map(float, self.stderr))),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "flags": list(self.flags),
        }


def _to_bounded(u, lo, hi):
    return lo + (hi - lo) / (1 + np.exp(-u))


def _to_free(x, lo, hi):
    z = np.clip((np.asarray(x, float) - lo) / (hi - lo), 1e-12, 1 - 1e-12)
    return np.log(z / (1 - z))


def _bounded_lm(model, jac, x0, lo, hi, n, y, sigma, names, max_nfev=2000) -> DecayFitResult:
    """Weighted Levenberg-Marquardt in logistic coordinates.

    The covariance is ``(J^T W J)^-1`` evaluated in the original parameters;
    without ``sigma`` it is scaled by the reduced chi-square.
    """
    w = 1 / sigma

    def resid(u):
        return (model(_to_bounded(u, lo, hi), n) - y) * w

    u0 = _to_free(x0, lo, hi)
    sol = least_squares(resid, u0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    x = _to_bounded(sol.x, lo, hi)
    r = (model(x, n) - y) * w
    flags = []
    if not sol.success:
        flags.append("not converged")
    j = jac(x, n) * w[:, None]
    jtj = j.T @ j
    try:
        cond = np.linalg.cond(jtj)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((len(x0), len(x0)), np.inf)
        flags.append("singular covariance")
    return DecayFitResult(tuple(names), x, cov, float(np.linalg.norm(r)), bool(sol.success), flags)


def _prepare(lengths, values, sigma):
    n = np.asarray(lengths, dtype=float)
    y = np.asarray(values, dtype=float)
    if n.shape != y.shape:
        raise ValueError("lengths and values differ in shape")
    if np.unique(n).size < 3:
        raise ValueError("need at least 3 distinct lengths")
    order = np.argsort(n, kind="stable")
    n, y = n[order], y[order]
    absolute = sigma is not None
    s = np.ones_like(y) if sigma is None else np.asarray(sigma, dtype=float)[order]
    if np.any(s <= 0):
        raise ValueError("sigma must be positive")
    return n, y, s, absolute


def _rescale(fit: DecayFitResult, n_points: int, absolute: bool) -> DecayFitResult:
    if not absolute and np.all(np.isfinite(fit.cov)):
        dof = n_points - len(fit.params)
        fit.cov = fit.cov * (fit.residual_norm**2 / dof if dof > 0 else 0.0)
    return fit


def _constant_fit(names, y, fixed_decay: float) -> DecayFitResult:
    params = np.zeros(len(names))
    params[0] = y.mean()
    params[-1] = fixed_decay
    cov = np.full((len(names), len(names)), np.inf)
    return DecayFitResult(tuple(names), params, cov, 0.0, True, ["no decay: decay rate unidentifiable"])


def fit_single_decay(lengths, values, sigma=None) -> DecayFitResult:
    """Fit ``A + B * lam**n`` with ``A in [0, 1]``, ``B in [-1, 1]``,
    ``lam in [0, 1]``.

    Data without any variation carry no decay information; the result then
    reports ``B = 0, lam = 1`` and is flagged.
    """
    n, y, s, absolute = _prepare(lengths, values, sigma)
    names = ("A", "B", "lambda1")
    if np.ptp(y) < 1e-12:
        return _constant_fit(names, y, 1.0)

    def model(x, n):
        return x[0] + x[1] * x[2] ** n

    def jac(x, n):
        return np.column_stack([np.ones_like(n), x[2] ** n, x[1] * n * x[2] ** (n - 1)])

    lo = np.array([0.0, -1.0, 0.0])
    hi = np.array([1.0, 1.0, 1.0])
    x0 = np.array([np.mean(y[-2:]), y[0] - y[-1], 0.99])
    x0 = np.clip(x0, lo + 1e-6, hi - 1e-6)
    fit = _bounded_lm(model, jac, x0, lo, hi, n, y, s, names)
    fit = _rescale(fit, n.size, absolute)
    _flag_unidentified(fit, "lambda1", "B")
    return fit


def fit_double_decay(lengths, values, b: float, lambda1: float, sigma=None) -> DecayFitResult:
    """Fit ``A0 + b * lambda1**n + C0 * lam2**n`` with ``b`` and ``lambda1``
    held fixed."""
    n, y, s, absolute = _prepare(lengths, values, sigma)
    names = ("A0", "C0", "lambda2")
    fixed = b * lambda1**n
    if np.ptp(y - fixed) < 1e-12:
        return _constant_fit(names, y - fixed, 1.0)

    def model(x, n):
        return x[0] + b * lambda1**n + x[1] * x[2] ** n

    def jac(x, n):
        return np.column_stack([np.ones_like(n), x[2] ** n, x[1] * n * x[2] ** (n - 1)])

    lo = np.array([0.0, -1.0, 0.0])
    hi = np.array([1.0, 1.0, 1.0])
    rest = y - fixed
    x0 = np.clip([np.mean(rest[-2:]), rest[0] - rest[-1], 0.99], lo + 1e-6, hi - 1e-6)
    fit = _bounded_lm(model, jac, x0, lo, hi, n, y, s, names)
    fit = _rescale(fit, n.size, absolute)
    _flag_unidentified(fit, "lambda2", "C0")
    return fit


def _flag_unidentified(fit: DecayFitResult, rate: str, amplitude: str) -> None:
    err = fit.error(rate)
    if not np.isfinite(err) or err > 1.0 or abs(fit[amplitude]) < 1e-9:
        fit.flags.append(f"{rate} poorly determined")


# -- leakage RB --------------------------------------------------------------

def leakage_per_clifford(a: float, lambda1: float) -> float:
    return (1 - a) * (1 - lambda1)


def average_fidelity(lambda2: float, l1: float) -> float:
    """Average Clifford fidelity from the computational decay and leakage."""
    return 0.5 * (lambda2 + 1 - l1)


@dataclass
class LeakageResult:
    l1: float
    lambda1: float
    lambda2: float
    f_avg: float
    stderr: dict[str, float]
    single: DecayFitResult
    double: DecayFitResult

    def to_dict(self) -> dict:
        return {
            "L1": self.l1,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "F_avg": self.f_avg,
            "stderr": dict(self.stderr),
            "fit_diagnostics": {"single": self.single.to_dict(), "double": self.double.to_dict()},
        }


class LeakageAnalysisError(RuntimeError):
    pass


def analyze_leakage(dataset: RbDataset) -> LeakageResult:
    """Single decay of ``p_chi1`` -> ``L1``; double decay of ``p0`` -> ``F``.

    Standard errors follow from the fit covariances to first order.
    """
    chi1, chi1_err = dataset.mean("chi1")
    p0, p0_err = dataset.mean("p0")
    try:
        single = fit_single_decay(dataset.lengths, chi1, chi1_err)
    except ValueError as exc:
        raise LeakageAnalysisError(f"single-decay fit: {exc}") from exc
    a, b, lam1 = single["A"], single["B"], single["lambda1"]
    l1 = leakage_per_clifford(a, lam1)
    try:
        double = fit_double_decay(dataset.lengths, p0, b, lam1, p0_err)
    except ValueError as exc:
        raise LeakageAnalysisError(f"double-decay fit: {exc}") from exc
    lam2 = double["lambda2"]
    f = average_fidelity(lam2, l1)

    grad = np.array([-(1 - lam1), 0.0, -(1 - a)])  # d L1 / d(A, B, lambda1)
    cov1 = single.cov
    l1_err = math.sqrt(grad @ cov1 @ grad) if np.all(np.isfinite(cov1)) else 0.0 if l1 == 0 else math.inf
    lam2_err = double.error("lambda2")
    if "no decay: decay rate unidentifiable" in double.flags:
        lam2_err = 0.0
    f_err = 0.5 * math.sqrt(lam2_err**2 + l1_err**2)
    stderr = {"L1": l1_err, "lambda1": single.error("lambda1"), "lambda2": lam2_err, "F_avg": f_err}
    return LeakageResult(l1, lam1, lam2, f, stderr, single, double)


def full_leakage_rb(
    cliffords: CliffordSet,
    lengths=DEFAULT_LENGTHS,
    n_sequences: int = 20,
    shots: int = 1000,
    seed: int = 0,
) -> tuple[LeakageResult, RbDataset]:
    dataset = generate_rb_dataset(cliffords, lengths, n_sequences, shots, seed)
    return analyze_leakage(dataset), dataset
