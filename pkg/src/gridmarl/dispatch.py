"""Economic dispatch for quadratic generation costs.

Costs are ``c_i(P) = a_i P^2 + beta_i P + gamma_i``. Without generation
limits the optimum has a closed form: every unit runs at the same
incremental cost ``lambda = 2 a_i P_i + beta_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostModel:
    a: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        n = a.size
        beta = np.zeros(n) if self.beta is None else np.atleast_1d(np.asarray(self.beta, dtype=float))
        gamma = np.zeros(n) if self.gamma is None else np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if beta.size != n or gamma.size != n:
            raise ValueError("cost coefficient arrays must share one length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))):
            raise ValueError("cost coefficients must be finite")
        if np.any(a <= 0):
            raise ValueError(f"quadratic cost coefficients must be positive, got {a}")
        for name, v in (("a", a), ("beta", beta), ("gamma", gamma)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def quadratic(cls, a, beta=None, gamma=None) -> "CostModel":
        return cls(a, beta, gamma)

    @property
    def n(self) -> int:
        return int(self.a.size)

    @property
    def curvature(self) -> np.ndarray:
        """Second derivatives d^2c_i/dP_i^2 = 2 a_i."""
        return 2.0 * self.a

    def marginal(self, p) -> np.ndarray:
        return 2.0 * self.a * np.asarray(p, dtype=float) + self.beta

    def permuted(self, order) -> "CostModel":
        order = list(order)
        return CostModel(self.a[order], self.beta[order], self.gamma[order])


@dataclass(frozen=True)
class DispatchResult:
    p_star: np.ndarray
    lam: float
    total_cost: float


def solve_dispatch(costs: CostModel, p_load: float, rho: float = 0.0) -> DispatchResult:
    """Minimise total cost subject to ``sum(P) = (1 + rho) * p_load``."""
    demand = (1.0 + rho) * p_load
    inv = 1.0 / (2.0 * costs.a)
    lam = (demand + np.sum(costs.beta * inv)) / np.sum(inv)
    p_star = (lam - costs.beta) * inv
    _, total = eval_cost(costs, p_star)
    return DispatchResult(p_star=p_star, lam=float(lam), total_cost=total)


def participation_deltas(costs: CostModel, d_lambda: float) -> np.ndarray:
    """Output changes that move every unit's incremental cost by ``d_lambda``."""
    return d_lambda / costs.curvature


def eval_cost(costs: CostModel, p) -> tuple[np.ndarray, float]:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != costs.n:
        raise ValueError(f"expected {costs.n} outputs, got shape {p.shape}")
    per_unit = costs.a * p**2 + costs.beta * p + costs.gamma
    return per_unit, float(np.sum(per_unit))
