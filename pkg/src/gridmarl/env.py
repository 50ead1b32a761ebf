"""The load frequency control MDP.

Each generator is an agent. Its observation is strictly local: the speed
deviation it measures (the area's for Model I, its own for Model II) and its
own secondary command ``z_i``. Actions are increments ``dz_i``, bounded by the
generation rate constraint. All agents share one scalar reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dispatch import CostModel, eval_cost
from .dynamics import (
    BAParams,
    GenParams,
    GenState,
    NetworkModel,
    WindParams,
    WindState,
    angles_for_outputs,
    kron_reduce,
)

REWARDS = ("secondary", "tertiary", "model2")


class ConfigError(ValueError):
    pass


class EpisodeDone(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Reward functions


def reward_secondary_model1(d_omega: float, eps1: float, d: float) -> float:
    return d if abs(d_omega) < eps1 else 0.0


def cost_path_deviation(z, curvature) -> float:
    """Pairwise spread of ``z_i * c_i''`` normalised by ``(n-1)!``."""
    w = np.asarray(z, dtype=float) * np.asarray(curvature, dtype=float)
    n = w.size
    if n < 2:
        raise ValueError("cost-path condition needs at least two agents")
    spread = np.abs(w[:, None] - w[None, :])
    return float(np.triu(spread, 1).sum() / math.factorial(n - 1))


def tertiary_conditions(d_omega, z, costs: CostModel, eps1, eps2, normalize_curvature=True) -> tuple[bool, bool]:
    curv = costs.curvature
    if normalize_curvature:
        curv = curv / curv.min()
    c1 = abs(d_omega) < eps1
    c2 = cost_path_deviation(z, curv) < eps2
    return c1, c2


def reward_tertiary(d_omega, z, costs: CostModel, eps1, eps2, d1, d2, normalize_curvature=True) -> float:
    """``d1`` when frequency and cost conditions both hold, ``d2`` when one does."""
    c1, c2 = tertiary_conditions(d_omega, z, costs, eps1, eps2, normalize_curvature)
    if c1 and c2:
        return d1
    if c1 or c2:
        return d2
    return 0.0


def reward_model2(d_omegas, eps: float, tiers) -> float:
    """Tiered reward: ``tiers[k-1]`` when ``k`` generators are within tolerance."""
    tiers = tuple(tiers)
    if any(b <= a for a, b in zip(tiers, tiers[1:])):
        raise ValueError("reward tiers must be strictly increasing")
    k = int(np.sum(np.abs(np.asarray(d_omegas, dtype=float)) < eps))
    if k == 0:
        return 0.0
    return float(tiers[min(k, len(tiers)) - 1])


def apply_grc(raw, dz_max: float):
    """Squash an unbounded actor output into ``(-dz_max, dz_max)``."""
    if not dz_max > 0:
        raise ValueError("dz_max must be positive")
    return dz_max * np.tanh(raw)


# --------------------------------------------------------------------------
# Configuration and results


@dataclass(frozen=True)
class EnvConfig:
    model: int = 1
    n_agents: int = 2
    ba: BAParams | None = None
    gens: GenParams | None = None
    network: NetworkModel | None = None
    costs: CostModel | None = None
    reward: str = "secondary"
    nominal_load: float = 3.0
    initial_z: tuple[float, ...] | None = None
    load_jitter: float = 0.5
    load_step: float | None = None
    episode_len: int = 100
    dt: float = 0.01
    substeps: int = 100
    eps1: float = 0.05
    eps2: float = 0.2
    d: float = 10.0
    d1: float = 200.0
    d2: float = 100.0
    tiers: tuple[float, ...] = (100.0, 200.0)
    dz_max: float = 0.1
    wind: WindParams | None = None
    churn: float | None = None
    normalize_curvature: bool = True

    def __post_init__(self):
        if self.initial_z is not None:
            object.__setattr__(self, "initial_z", tuple(float(v) for v in self.initial_z))
        object.__setattr__(self, "tiers", tuple(float(v) for v in self.tiers))
        self.validate()

    def validate(self) -> None:
        n = self.n_agents
        if self.model not in (1, 2):
            raise ConfigError(f"model must be 1 or 2, got {self.model}")
        if n < 1:
            raise ConfigError("n_agents must be >= 1")
        if self.reward not in REWARDS:
            raise ConfigError(f"reward must be one of {REWARDS}")
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ConfigError("reward tolerances must be positive")
        if self.dz_max <= 0:
            raise ConfigError("dz_max must be positive")
        if self.episode_len < 1 or self.substeps < 1 or self.dt <= 0:
            raise ConfigError("episode_len, substeps and dt must be positive")
        if self.load_jitter < 0:
            raise ConfigError("load_jitter must be non-negative")
        if not self.d2 < self.d1:
            raise ConfigError("tertiary reward needs d2 < d1")
        if any(b <= a for a, b in zip(self.tiers, self.tiers[1:])):
            raise ConfigError("Model II reward tiers must be strictly increasing")
        if self.initial_z is not None and len(self.initial_z) != n:
            raise ConfigError(f"initial_z needs {n} entries")
        if self.model == 1:
            if self.ba is None:
                raise ConfigError("Model I needs BA parameters")
            if self.reward == "model2":
                raise ConfigError("tiered per-generator reward needs Model II")
        else:
            if self.gens is None or self.network is None:
                raise ConfigError("Model II needs generator and network parameters")
            if self.gens.n != n or self.network.n_gen != n:
                raise ConfigError("generator count must match n_agents")
            if self.reward == "tertiary":
                raise ConfigError("tertiary reward is only defined for Model I")
            if self.wind is not None:
                raise ConfigError("wind disturbance is only wired into Model I")
            if len(self.tiers) != n:
                raise ConfigError(f"Model II reward needs {n} tiers")
        if self.reward == "tertiary":
            if self.costs is None:
                raise ConfigError("tertiary reward needs generator costs")
            if self.costs.n != n:
                raise ConfigError("cost model size must match n_agents")
            if n < 2:
                raise ConfigError("tertiary reward needs at least two agents")

    @property
    def control_dt(self) -> float:
        return self.dt * self.substeps

    @property
    def f_nom(self) -> float:
        return self.ba.f_nom if self.model == 1 else 50.0

    @property
    def omega_dim(self) -> int:
        return 1 if self.model == 1 else self.n_agents

    @property
    def state_dim(self) -> int:
        return self.omega_dim + self.n_agents

    def max_reward(self) -> float:
        return {"secondary": self.d, "tertiary": self.d1, "model2": max(self.tiers)}[self.reward]

    def start_z(self) -> np.ndarray:
        if self.initial_z is not None:
            return np.array(self.initial_z)
        total = self.nominal_load if self.model == 1 else float(self.network.effective_load().sum())
        return np.full(self.n_agents, total / self.n_agents)


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    info: dict[str, Any] = field(default_factory=dict)


# --------------------------------------------------------------------------
# Environment


class LFCEnv:
    """Multi-agent load frequency control environment (Model I or Model II)."""

    def __init__(self, cfg: EnvConfig):
        cfg.validate()
        self.cfg = cfg
        self._rng: np.random.Generator | None = None
        self.t_step = 0
        self.done = True

    # -- observation helpers -------------------------------------------------

    def observe(self) -> np.ndarray:
        """Per-agent local observations, shape ``(n_agents, 2)``: (speed deviation, z_i)."""
        w = np.broadcast_to(self.d_omega, (self.cfg.n_agents,))
        return np.column_stack([w, self.z])

    def global_state(self) -> np.ndarray:
        """``[speed deviation(s)..., z_1..z_n]`` as seen by centralised critics."""
        return np.concatenate([np.atleast_1d(self.d_omega), self.z])

    # -- lifecycle -------------------------------------------------------------

    def reset(self, seed=None) -> np.ndarray:
        cfg = self.cfg
        self._rng = np.random.default_rng(seed)
        n = cfg.n_agents
        z0 = cfg.start_z()
        self.z = z0.copy()
        self.t_step = 0
        self.done = False
        self.wind_state = WindState(0.0, 0.0) if cfg.wind is not None else None
        if cfg.model == 1:
            if cfg.load_step is not None:
                self.p_load = cfg.nominal_load + cfg.load_step
            else:
                self.p_load = cfg.nominal_load + self._rng.uniform(-cfg.load_jitter, cfg.load_jitter)
            self.d_omega = 0.0
            self.p_units = z0.copy()
        else:
            net = cfg.network
            base = net.load.copy()
            loaded = base > 0
            if cfg.load_step is not None:
                base[loaded] += cfg.load_step
            else:
                base[loaded] += self._rng.uniform(-cfg.load_jitter, cfg.load_jitter, size=int(loaded.sum()))
            self.bus_load = base
            delta0 = angles_for_outputs(net, z0)
            self.gen_state = GenState(delta=delta0, d_omega=np.zeros(n), p_sv=z0.copy(), z=z0.copy())
            self._reduced = kron_reduce(net.with_load(self.bus_load))
            self.d_omega = np.zeros(n)
            self.p_units = self._reduced[0] @ delta0 + self._reduced[1]
        return self.observe()

    @property
    def load(self) -> float:
        return float(self.p_load) if self.cfg.model == 1 else float(self.bus_load.sum())

    def step(self, actions) -> StepResult:
        if self.done:
            raise EpisodeDone("step() called on a finished episode; call reset()")
        cfg = self.cfg
        a = np.asarray(actions, dtype=float).reshape(-1)
        if a.size != cfg.n_agents:
            raise ValueError(f"expected {cfg.n_agents} actions, got {a.size}")
        if not np.all(np.isfinite(a)):
            raise ValueError("actions must be finite")
        clamped = bool(np.any(np.abs(a) > cfg.dz_max))
        a = np.clip(a, -cfg.dz_max, cfg.dz_max)
        self.z = self.z + a

        if cfg.churn is not None and self.t_step > 0:
            self._apply_churn()
        if cfg.model == 1:
            self._integrate_model1()
        else:
            self._integrate_model2()
        if not (np.all(np.isfinite(self.d_omega)) and np.all(np.isfinite(self.p_units))):
            raise FloatingPointError("plant state diverged")

        self.t_step += 1
        self.done = self.t_step >= cfg.episode_len
        reward, c1, c2 = self._reward()
        info = {
            "t": self.t_step * cfg.control_dt,
            "d_omega": np.array(self.d_omega, copy=True),
            "z": self.z.copy(),
            "p": np.array(self.p_units, copy=True),
            "p_load": self.load,
            "c1": c1,
            "c2": c2,
            "clamped": clamped,
            "dz": a,
        }
        if cfg.costs is not None:
            per_unit, total = eval_cost(cfg.costs, self.p_units)
            info["cost"] = per_unit
            info["total_cost"] = total
        if self.wind_state is not None:
            info["p_wind"] = float(self.wind_state.d_pw)
        return StepResult(self.observe(), reward, self.done, info)

    # -- internals -------------------------------------------------------------

    def _apply_churn(self) -> None:
        cfg = self.cfg
        if cfg.model == 1:
            self.p_load += self._rng.uniform(-cfg.churn, cfg.churn)
        else:
            loaded = self.bus_load > 0
            self.bus_load = self.bus_load.copy()
            self.bus_load[loaded] += self._rng.uniform(-cfg.churn, cfg.churn, size=int(loaded.sum()))
            self._reduced = kron_reduce(self.cfg.network.with_load(self.bus_load))

    def _integrate_model1(self) -> None:
        cfg = self.cfg
        p: BAParams = cfg.ba
        dt = cfg.dt
        # per-unit governors share T_SV and split the droop evenly: sum_i 1/R_Di = 1/R_D
        inv_r_unit = 1.0 / (p.R_D * cfg.n_agents)
        g = dt / p.T_SV
        z = [float(v) for v in self.z]
        units = [float(v) for v in self.p_units]
        w = float(self.d_omega)
        p_load = self.p_load
        p_g = (1.0 + p.rho) * p_load
        wind = cfg.wind
        if wind is not None:
            noise = self._rng.standard_normal(cfg.substeps) * math.sqrt(dt)
            pw, dv = self.wind_state.d_pw, self.wind_state.d_v
        for k in range(cfg.substeps):
            total = sum(units)
            if wind is None:
                dw = (total - p_g - p.D * w) / p.M
            else:
                dw = (total - (p_g - pw) - p.D * w) / p.M
                pw, dv = pw + (wind.alpha1 * pw + wind.alpha2 * dv) * dt, dv + wind.beta1 * dv * dt + wind.beta2 * noise[k]
            units = [u + (-u + zi - w * inv_r_unit) * g for u, zi in zip(units, z)]
            w += dw * dt
        self.d_omega = w
        self.p_units = np.array(units)
        if wind is not None:
            self.wind_state = WindState(pw, dv)

    def _integrate_model2(self) -> None:
        cfg = self.cfg
        p: GenParams = cfg.gens
        K, c = self._reduced
        dt = cfg.dt
        delta = self.gen_state.delta.copy()
        w = self.gen_state.d_omega.copy()
        psv = self.gen_state.p_sv.copy()
        z = self.z
        inv_m, inv_r, g = dt / p.M, 1.0 / p.R_D, dt / p.T_SV
        for _ in range(cfg.substeps):
            delta = delta + w * dt
            pe = K @ delta + c
            w, psv = w + (psv - pe - p.D * w) * inv_m, psv + (-psv + z - w * inv_r) * g
        self.gen_state = GenState(delta=delta, d_omega=w, p_sv=psv, z=z.copy())
        self.d_omega = w
        self.p_units = K @ delta + c

    def _reward(self) -> tuple[float, bool, bool | None]:
        cfg = self.cfg
        if cfg.reward == "secondary":
            c1 = abs(self.d_omega) < cfg.eps1
            return reward_secondary_model1(self.d_omega, cfg.eps1, cfg.d), c1, None
        if cfg.reward == "tertiary":
            c1, c2 = tertiary_conditions(self.d_omega, self.z, cfg.costs, cfg.eps1, cfg.eps2, cfg.normalize_curvature)
            r = reward_tertiary(self.d_omega, self.z, cfg.costs, cfg.eps1, cfg.eps2, cfg.d1, cfg.d2, cfg.normalize_curvature)
            return r, c1, c2
        c1 = bool(np.all(np.abs(self.d_omega) < cfg.eps1))
        return reward_model2(self.d_omega, cfg.eps1, cfg.tiers), c1, None
