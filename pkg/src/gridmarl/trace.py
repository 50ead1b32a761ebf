"""Episode traces, learning curves and the metrics computed from them."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dispatch import CostModel, eval_cost, solve_dispatch
from .dynamics import rocof


def trace_columns(model: int, n: int) -> list[str]:
    omega = ["d_omega"] if model == 1 else [f"d_omega_{i + 1}" for i in range(n)]
    per = lambda stem: [f"{stem}_{i + 1}" for i in range(n)]  # noqa: E731
    return ["t", *omega, *per("z"), *per("dz"), *per("p"), "p_load", "reward", *per("cost"), "total_cost", "c1", "c2"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float) and math.isnan(v):
        return ""
    return repr(float(v))


@dataclass
class EpisodeTrace:
    model: int
    n_agents: int
    control_dt: float
    f_nom: float = 50.0
    rows: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return trace_columns(self.model, self.n_agents)

    def record(self, t, d_omega, z, dz, p, p_load, reward, cost=None, c1=None, c2=None) -> None:
        n = self.n_agents
        row = {"t": float(t)}
        w = np.atleast_1d(np.asarray(d_omega, dtype=float))
        if self.model == 1:
            row["d_omega"] = float(w[0])
        else:
            row.update({f"d_omega_{i + 1}": float(w[i]) for i in range(n)})
        for stem, vals in (("z", z), ("dz", dz), ("p", p)):
            vals = np.asarray(vals, dtype=float)
            row.update({f"{stem}_{i + 1}": float(vals[i]) for i in range(n)})
        row["p_load"] = float(p_load)
        row["reward"] = float(reward)
        if cost is None:
            row.update({f"cost_{i + 1}": None for i in range(n)})
            row["total_cost"] = None
        else:
            cost = np.asarray(cost, dtype=float)
            row.update({f"cost_{i + 1}": float(cost[i]) for i in range(n)})
            row["total_cost"] = float(cost.sum())
        row["c1"] = None if c1 is None else bool(c1)
        row["c2"] = None if c2 is None else bool(c2)
        if self.rows and row["t"] <= self.rows[-1]["t"]:
            raise ValueError("trace time must be strictly increasing")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def matrix(self, stem: str) -> np.ndarray:
        """``(rows, n_agents)`` array of a per-agent column family, e.g. ``"p"``."""
        return np.column_stack([self.column(f"{stem}_{i + 1}") for i in range(self.n_agents)])

    def omega(self) -> np.ndarray:
        """Speed deviation series, shape ``(rows, omega_dim)``."""
        if self.model == 1:
            return self.column("d_omega")[:, None]
        return self.matrix("d_omega")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path, control_dt: float | None = None, f_nom: float = 50.0) -> "EpisodeTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = list(reader)
        n = sum(1 for c in header if c.startswith("z_"))
        model = 1 if "d_omega" in header else 2
        if header != trace_columns(model, n):
            raise ValueError(f"{path}: unexpected trace columns")
        tr = cls(model=model, n_agents=n, control_dt=control_dt or 0.0, f_nom=f_nom)
        for line in data:
            row = {}
            for c, v in zip(header, line):
                if v == "":
                    row[c] = None
                elif c in ("c1", "c2"):
                    row[c] = v == "1"
                else:
                    row[c] = float(v)
            tr.rows.append(row)
        if control_dt is None and len(tr.rows) > 1:
            tr.control_dt = tr.rows[1]["t"] - tr.rows[0]["t"]
        return tr


# --------------------------------------------------------------------------
# Metrics


def settling_time(trace: EpisodeTrace, eps: float) -> float:
    """Earliest time after which every generator stays within ``|d_omega| < eps``.

    Returns ``math.inf`` when the last sample is still outside the band.
    """
    inside = np.all(np.abs(trace.omega()) < eps, axis=1)
    t = trace.column("t")
    if not inside[-1]:
        return math.inf
    outside = np.nonzero(~inside)[0]
    return float(t[0]) if outside.size == 0 else float(t[outside[-1] + 1])


def steady_window(trace: EpisodeTrace, fraction: float = 0.2) -> slice:
    n = len(trace.rows)
    return slice(n - max(1, int(round(fraction * n))), n)


def episode_metrics(trace: EpisodeTrace, eps1: float = 0.05, costs: CostModel | None = None,
                    fraction: float = 0.2) -> dict:
    """Settling time, RoCoF statistics, steady-state outputs/cost and the dispatch gap."""
    win = steady_window(trace, fraction)
    omega = trace.omega()
    r_max, r_min, r_mean = rocof(omega.mean(axis=1), trace.control_dt, trace.f_nom)
    p = trace.matrix("p")[win].mean(axis=0)
    p_load = float(trace.column("p_load")[-1])
    ts = settling_time(trace, eps1)
    out = {
        "settling_time": None if math.isinf(ts) else ts,
        "settled": not math.isinf(ts),
        "rocof_max": r_max,
        "rocof_min": r_min,
        "rocof_mean": r_mean,
        "max_abs_d_omega_tail": float(np.max(np.abs(omega[win]))),
        "final_d_omega": [float(v) for v in omega[-1]],
        "steady_p": [float(v) for v in p],
        "steady_total_p": float(p.sum()),
        "final_load": p_load,
        "cumulative_reward": float(np.nansum(trace.column("reward"))),
    }
    if costs is not None:
        _, steady_cost = eval_cost(costs, p)
        opt = solve_dispatch(costs, p_load)
        out["steady_cost"] = steady_cost
        out["optimal_cost"] = opt.total_cost
        out["optimal_p"] = [float(v) for v in opt.p_star]
        out["cost_gap"] = (steady_cost - opt.total_cost) / opt.total_cost
    return out


def learning_curve_csv(rewards, window: int = 10) -> str:
    """Episode, cumulative reward, trailing-window mean and its 95% band."""
    r = np.asarray(rewards, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "cumulative_reward", "smoothed_reward", "band_low", "band_high"])
    for k in range(r.size):
        seg = r[max(0, k - window + 1) : k + 1]
        mean = seg.mean()
        half = 1.96 * seg.std(ddof=1) / math.sqrt(seg.size) if seg.size > 1 else 0.0
        w.writerow([k + 1, repr(float(r[k])), repr(float(mean)), repr(float(mean - half)), repr(float(mean + half))])
    return buf.getvalue()


def decile_ratio(rewards) -> tuple[float, float]:
    """Mean episode reward over the first and last tenth of training."""
    r = np.asarray(rewards, dtype=float)
    k = max(1, r.size // 10)
    return float(r[:k].mean()), float(r[-k:].mean())
