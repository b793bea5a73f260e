"""(mu/mu_w, lambda)-CMA-ES with rank-mu update and cumulative step-size
adaptation.

The search runs in coordinates scaled by the per-coordinate initial step
``sigma0``, so the strategy starts from ``sigma = 1`` and ``C = I`` there.
Costs are maximized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def default_popsize(n: int) -> int:
    return 4 + int(3 * math.log(n))


@dataclass
class CmaesConfig:
    popsize: int | None = None  # lambda; None -> 4 + floor(3 ln n)
    sigma0: float | np.ndarray = 1.0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    max_iterations: int = 100
    target_cost: float | None = None
    seed: int = 0
    max_resample: int = 100

    def __post_init__(self):
        if self.popsize is not None and self.popsize < 4:
            raise ValueError("popsize must be >= 4")
        if np.any(np.asarray(self.sigma0) <= 0):
            raise ValueError("sigma0 must be positive")


@dataclass
class CmaesState:
    mean: np.ndarray  # scaled coordinates
    sigma: float
    cov: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0
    eigvals: np.ndarray = field(default=None)
    eigvecs: np.ndarray = field(default=None)


class CMAES:
    """Ask/tell CMA-ES for maximization.

    >>> es = CMAES(np.zeros(3), CmaesConfig(sigma0=0.5, seed=1))
    >>> xs = es.ask()
    >>> es.tell(xs, [-np.sum(x**2) for x in xs])
    """

    def __init__(self, x0, config: CmaesConfig):
        self.x0 = np.array(x0, dtype=float).reshape(-1)
        n = self.n = self.x0.size
        self.config = config
        self.scale = np.broadcast_to(np.asarray(config.sigma0, dtype=float), (n,)).copy()
        self.lower = None if config.lower is None else np.broadcast_to(np.asarray(config.lower, float), (n,)).copy()
        self.upper = None if config.upper is None else np.broadcast_to(np.asarray(config.upper, float), (n,)).copy()
        if self.lower is not None and self.upper is not None and np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self.popsize = config.popsize or default_popsize(n)
        self.rng = np.random.default_rng(config.seed)

        lam = self.popsize
        self.mu = lam // 2
        w = math.log((lam + 1) / 2) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mu_eff = 1 / np.sum(self.weights**2)
        mu_eff = self.mu_eff
        self.c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
        self.d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + self.c_sigma
        self.c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
        self.c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
        self.c_mu = min(1 - self.c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))

        self.state = CmaesState(
            mean=np.zeros(n),
            sigma=1.0,
            cov=np.eye(n),
            p_sigma=np.zeros(n),
            p_c=np.zeros(n),
            eigvals=np.ones(n),
            eigvecs=np.eye(n),
        )

    # coordinates ------------------------------------------------------------
    def to_params(self, y):
        return self.x0 + self.scale * np.asarray(y)

    def to_scaled(self, x):
        return (np.asarray(x, dtype=float) - self.x0) / self.scale

    @property
    def mean(self) -> np.ndarray:
        return self.to_params(self.state.mean)

    @property
    def sigma(self) -> float:
        return self.state.sigma

    def _in_bounds(self, x) -> bool:
        if self.lower is not None and np.any(x < self.lower):
            return False
        if self.upper is not None and np.any(x > self.upper):
            return False
        return True

    def _clip(self, x):
        if self.lower is not None:
            x = np.maximum(x, self.lower)
        if self.upper is not None:
            x = np.minimum(x, self.upper)
        return x

    # ask / tell -------------------------------------------------------------
    def ask(self) -> list[np.ndarray]:
        """``popsize`` candidates from N(mean, sigma^2 C), kept inside bounds
        by resampling, then by projection."""
        s = self.state
        bd = s.eigvecs * np.sqrt(s.eigvals)
        out = []
        for _ in range(self.popsize):
            for _ in range(self.config.max_resample):
                x = self.to_params(s.mean + s.sigma * (bd @ self.rng.standard_normal(self.n)))
                if self._in_bounds(x):
                    break
            out.append(self._clip(x))
        return out

    def tell(self, candidates, costs) -> None:
        """Update mean, paths, step size and covariance; larger cost is better.

        A population without any cost differences carries no selection
        information and leaves the distribution unchanged.
        """
        xs = np.array(candidates, dtype=float)
        costs = np.asarray(costs, dtype=float)
        if xs.shape != (costs.size, self.n):
            raise ValueError(f"expected {costs.size} candidates of dimension {self.n}, got {xs.shape}")
        if costs.size < self.mu:
            raise ValueError("fewer candidates than parents")
        if not np.all(np.isfinite(costs)):
            raise ValueError("costs must be finite")
        s = self.state
        s.generation += 1
        if np.all(costs == costs[0]):
            return

        ys = self.to_scaled(xs)
        order = np.argsort(-costs, kind="stable")[: self.mu]
        steps = (ys[order] - s.mean) / s.sigma
        old_mean = s.mean
        s.mean = old_mean + s.sigma * (self.weights @ steps)
        y_w = (s.mean - old_mean) / s.sigma

        inv_sqrt_c = s.eigvecs @ np.diag(1 / np.sqrt(s.eigvals)) @ s.eigvecs.T
        s.p_sigma = (1 - self.c_sigma) * s.p_sigma + math.sqrt(
            self.c_sigma * (2 - self.c_sigma) * self.mu_eff
        ) * (inv_sqrt_c @ y_w)
        ps_norm = np.linalg.norm(s.p_sigma)
        h_sigma = ps_norm / math.sqrt(1 - (1 - self.c_sigma) ** (2 * s.generation)) < (
            1.4 + 2 / (self.n + 1)
        ) * self.chi_n
        s.p_c = (1 - self.c_c) * s.p_c + h_sigma * math.sqrt(
            self.c_c * (2 - self.c_c) * self.mu_eff
        ) * y_w

        rank_one = np.outer(s.p_c, s.p_c)
        rank_mu = (steps.T * self.weights) @ steps
        delta_h = (1 - h_sigma) * self.c_c * (2 - self.c_c)
        s.cov = (
            (1 - self.c_1 - self.c_mu + self.c_1 * delta_h) * s.cov
            + self.c_1 * rank_one
            + self.c_mu * rank_mu
        )
        s.sigma *= math.exp((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1))

        s.cov = (s.cov + s.cov.T) / 2
        vals, vecs = np.linalg.eigh(s.cov)
        s.eigvals = np.maximum(vals, 1e-20)
        s.eigvecs = vecs
