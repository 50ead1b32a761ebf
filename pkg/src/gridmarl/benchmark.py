"""Consensus-based partial primal-dual controller used as the comparison baseline.

Each generator keeps a local estimate ``lam_i`` of the system incremental
cost. It integrates its share of the measured power imbalance, read off the
frequency deviation through the unit's damping-plus-droop stiffness, and
averages with its neighbours on a communication graph:

    d lam_i/dt = -k_lam * s_i * dw_i - k_c * sum_{j in N(i)} (lam_i - lam_j)
    z_i        = (lam_i - beta_i) / (2 a_i)

At rest ``dw = 0`` and all ``lam_i`` agree, so the commands sit on the
economic-dispatch optimum.

Closing the loop adds an integrator ``K = k_lam * sum_i s_i / (2 a_i)`` on the
swing/governor plant, which stays stable only while
``K < (T D + M)(D + 1/R) / (T M)`` (about 1.9 for the two-unit area), hence
the small default ``k_lam``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .dispatch import CostModel
from .env import EnvConfig, LFCEnv
from .maddpg import rollout
from .trace import EpisodeTrace, episode_metrics


class GraphError(ValueError):
    pass


def line_graph(n: int) -> np.ndarray:
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i + 1] = A[i + 1, i] = 1.0
    return A


def check_connected(adjacency) -> np.ndarray:
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphError("adjacency must be square")
    if not np.allclose(A, A.T) or np.any(A < 0) or np.any(np.diag(A) != 0):
        raise GraphError("adjacency must be symmetric, non-negative, with an empty diagonal")
    n = A.shape[0]
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(A[i])[0]:
            if j not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    if len(seen) != n:
        raise GraphError("communication graph is disconnected")
    return A


@dataclass(frozen=True)
class PrimalDualState:
    lam: np.ndarray
    z: np.ndarray
    adjacency: np.ndarray
    k_lambda: float = 0.1
    k_consensus: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "adjacency", check_connected(self.adjacency))
        if self.k_lambda <= 0 or self.k_consensus <= 0:
            raise ValueError("controller gains must be positive")
        if self.lam.shape != self.z.shape or self.lam.shape != (self.adjacency.shape[0],):
            raise ValueError("lam, z and the graph must agree on the generator count")

    @classmethod
    def from_commands(cls, z, costs: CostModel, adjacency=None, **gains) -> "PrimalDualState":
        z = np.asarray(z, dtype=float)
        adjacency = line_graph(z.size) if adjacency is None else adjacency
        return cls(lam=costs.marginal(z), z=z, adjacency=adjacency, **gains)


def pd_step(state: PrimalDualState, d_omega, stiffness, costs: CostModel, dt: float) -> PrimalDualState:
    """One Euler step of the price dynamics; ``d_omega`` is shared or per generator."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = np.broadcast_to(np.asarray(d_omega, dtype=float), state.lam.shape)
    A = state.adjacency
    consensus = A.sum(axis=1) * state.lam - A @ state.lam
    dlam = -state.k_lambda * np.asarray(stiffness) * w - state.k_consensus * consensus
    lam = state.lam + dt * dlam
    z = (lam - costs.beta) / (2.0 * costs.a)
    return replace(state, lam=lam, z=z)


def unit_stiffness(cfg: EnvConfig) -> np.ndarray:
    """Damping-plus-droop stiffness attributed to each generator."""
    if cfg.model == 1:
        return np.full(cfg.n_agents, cfg.ba.stiffness / cfg.n_agents)
    g = cfg.gens
    return g.D + 1.0 / g.R_D


def run_benchmark(env_cfg: EnvConfig, seed: int = 0, k_lambda: float = 0.1, k_consensus: float = 10.0,
                  adjacency=None) -> EpisodeTrace:
    """Close the loop at the plant's internal step and log at the control period."""
    if env_cfg.costs is None:
        raise ValueError("the primal-dual benchmark needs generator costs")
    costs = env_cfg.costs
    stiff = unit_stiffness(env_cfg)
    fine = replace(env_cfg, substeps=1, episode_len=env_cfg.episode_len * env_cfg.substeps, dz_max=1e6)
    holder: dict = {}

    def controller(env: LFCEnv) -> np.ndarray:
        if env.t_step == 0:
            holder["pd"] = PrimalDualState.from_commands(env.z, costs, adjacency, k_lambda=k_lambda,
                                                         k_consensus=k_consensus)
        pd = pd_step(holder["pd"], env.d_omega, stiff, costs, env_cfg.dt)
        dz = pd.z - env.z
        holder["pd"] = pd
        return dz

    dense = rollout(fine, controller, seed)
    coarse = EpisodeTrace(env_cfg.model, env_cfg.n_agents, env_cfg.control_dt, env_cfg.f_nom)
    k = env_cfg.substeps
    prev_z = None
    for idx in range(0, len(dense.rows), k):
        row = dict(dense.rows[idx])
        z = np.array([row[f"z_{i + 1}"] for i in range(env_cfg.n_agents)])
        dz = np.zeros_like(z) if prev_z is None else z - prev_z
        row.update({f"dz_{i + 1}": float(dz[i]) for i in range(env_cfg.n_agents)})
        prev_z = z
        coarse.rows.append(row)
    return coarse


# --------------------------------------------------------------------------
# Comparison


COMPARE_COLUMNS = [
    "controller",
    "settling_time",
    "settled",
    "rocof_max",
    "rocof_min",
    "rocof_mean",
    "steady_total_p",
    "steady_cost",
    "optimal_cost",
    "cost_gap",
    "final_abs_d_omega",
]


def compare(traces: dict[str, EpisodeTrace], eps1: float = 0.05, costs: CostModel | None = None) -> list[dict]:
    """Per-controller metric rows; all traces must share the same time grid."""
    if not traces:
        raise ValueError("nothing to compare")
    grids = [tuple(tr.column("t")) for tr in traces.values()]
    if any(g != grids[0] for g in grids[1:]):
        raise ValueError("traces cover different horizons or sampling grids")
    rows = []
    for name, tr in traces.items():
        m = episode_metrics(tr, eps1=eps1, costs=costs)
        rows.append(
            {
                "controller": name,
                "settling_time": m["settling_time"],
                "settled": m["settled"],
                "rocof_max": m["rocof_max"],
                "rocof_min": m["rocof_min"],
                "rocof_mean": m["rocof_mean"],
                "steady_total_p": m["steady_total_p"],
                "steady_cost": m.get("steady_cost"),
                "optimal_cost": m.get("optimal_cost"),
                "cost_gap": m.get("cost_gap"),
                "final_abs_d_omega": max(abs(v) for v in m["final_d_omega"]),
            }
        )
    return rows


def compare_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    for r in rows:
        out = []
        for c in COMPARE_COLUMNS:
            v = r.get(c)
            if v is None:
                out.append("horizon_exceeded" if c == "settling_time" else "")
            elif isinstance(v, bool):
                out.append("1" if v else "0")
            elif isinstance(v, str):
                out.append(v)
            else:
                out.append(repr(float(v)) if math.isfinite(v) else str(v))
        w.writerow(out)
    return buf.getvalue()
