"""Plant models for load frequency control.

Model I lumps a balancing-authority (BA) area into one swing equation and one
first-order governor. Model II keeps a swing/governor pair per generator and
couples the machines through a lossless DC network. A mean-reverting wind
process can be superimposed on either model as a negative load.

All quantities are per unit unless noted; time is in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class NetworkError(ValueError):
    """Raised when the network equations cannot be solved (e.g. islanded buses)."""


def _require_finite(name: str, *values) -> None:
    for v in values:
        ok = math.isfinite(v) if isinstance(v, (float, int)) else np.all(np.isfinite(v))
        if not ok:
            raise ValueError(f"{name}: non-finite input {v!r}")


# --------------------------------------------------------------------------
# Model I: balancing-authority area


@dataclass(frozen=True)
class BAParams:
    M: float = 0.1
    D: float = 0.016
    R_D: float = 0.1
    T_SV: float = 30.0
    rho: float = 0.0
    f_nom: float = 50.0

    def __post_init__(self):
        _require_finite("BAParams", self.M, self.D, self.R_D, self.T_SV, self.rho, self.f_nom)
        if self.M <= 0 or self.T_SV <= 0 or self.R_D <= 0 or self.f_nom <= 0:
            raise ValueError(f"BAParams requires M, T_SV, R_D, f_nom > 0: {self}")
        if self.D < 0:
            raise ValueError(f"BAParams requires D >= 0: {self}")

    @property
    def stiffness(self) -> float:
        """Frequency response characteristic D + 1/R_D (pu power per pu speed)."""
        return self.D + 1.0 / self.R_D

    def steady_state_d_omega(self, z_g: float, p_load: float, p_wind: float = 0.0) -> float:
        """Closed-form equilibrium speed deviation for constant Z_G and load."""
        return (z_g - (1.0 + self.rho) * p_load + p_wind) / self.stiffness


@dataclass(frozen=True)
class BAState:
    d_omega: float = 0.0
    p_sv: float = 0.0
    z_g: float = 0.0


def ba_derivatives(s: BAState, p: BAParams, p_load: float, p_wind: float = 0.0):
    """Right-hand side of the BA swing and governor equations.

    Wind output is netted against the loss-adjusted load.

    Returns
    -------
    (d_omega_dt, d_psv_dt) : tuple of float
    """
    _require_finite("ba_derivatives", s.d_omega, s.p_sv, s.z_g, p_load, p_wind)
    p_g = (1.0 + p.rho) * p_load - p_wind
    d_omega_dt = (s.p_sv - p_g - p.D * s.d_omega) / p.M
    d_psv_dt = (-s.p_sv + s.z_g - s.d_omega / p.R_D) / p.T_SV
    return d_omega_dt, d_psv_dt


def ba_step(s: BAState, p: BAParams, p_load: float, dt: float, p_wind: float = 0.0) -> BAState:
    d_omega_dt, d_psv_dt = ba_derivatives(s, p, p_load, p_wind)
    d_omega, p_sv = euler_step((s.d_omega, s.p_sv), (d_omega_dt, d_psv_dt), dt)
    return BAState(d_omega=d_omega, p_sv=p_sv, z_g=s.z_g)


def simulate_ba(s: BAState, p: BAParams, p_load: float, dt: float, n_steps: int) -> BAState:
    """Integrate Model I with frozen Z_G and load for ``n_steps`` Euler steps."""
    for _ in range(n_steps):
        s = ba_step(s, p, p_load, dt)
    return s


# --------------------------------------------------------------------------
# Model II: individual synchronous generators


def _as_vec(x, n: int | None = None) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    if n is not None and a.size == 1 and n > 1:
        a = np.full(n, float(a[0]))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GenParams:
    """Per-generator machine constants, one entry per generator."""

    M: np.ndarray
    D: np.ndarray
    R_D: np.ndarray
    T_SV: np.ndarray

    def __post_init__(self):
        n = max(np.size(self.M), np.size(self.D), np.size(self.R_D), np.size(self.T_SV))
        for name in ("M", "D", "R_D", "T_SV"):
            object.__setattr__(self, name, _as_vec(getattr(self, name), n))
        if len({self.M.size, self.D.size, self.R_D.size, self.T_SV.size}) != 1:
            raise ValueError("GenParams arrays must share one length")
        _require_finite("GenParams", self.M, self.D, self.R_D, self.T_SV)
        if np.any(self.M <= 0) or np.any(self.R_D <= 0) or np.any(self.T_SV <= 0):
            raise ValueError("GenParams requires M, R_D, T_SV > 0")
        if np.any(self.D < 0):
            raise ValueError("GenParams requires D >= 0")

    @property
    def n(self) -> int:
        return int(self.M.size)

    def aggregate(self, rho: float = 0.0, f_nom: float = 50.0) -> BAParams:
        """Lump the machines into equivalent BA-area constants."""
        return BAParams(
            M=float(self.M.sum()),
            D=float(self.D.sum()),
            R_D=1.0 / float(np.sum(1.0 / self.R_D)),
            T_SV=float(self.T_SV.mean()),
            rho=rho,
            f_nom=f_nom,
        )


@dataclass(frozen=True)
class GenState:
    delta: np.ndarray
    d_omega: np.ndarray
    p_sv: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("delta", "d_omega", "p_sv", "z"):
            object.__setattr__(self, name, _as_vec(getattr(self, name)))


def gen_derivatives(s: GenState, p: GenParams, p_elec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rotor angle, speed and governor derivatives for every generator.

    ``p_elec`` is the electrical output of each machine, supplied by the
    network solution.
    """
    p_elec = np.asarray(p_elec, dtype=float)
    _require_finite("gen_derivatives", s.delta, s.d_omega, s.p_sv, s.z, p_elec)
    d_delta = s.d_omega.copy()
    d_omega = (s.p_sv - p_elec - p.D * s.d_omega) / p.M
    d_psv = (-s.p_sv + s.z - s.d_omega / p.R_D) / p.T_SV
    return d_delta, d_omega, d_psv


# --------------------------------------------------------------------------
# DC network


@dataclass(frozen=True)
class NetworkModel:
    """Lossless DC network with generators attached to a subset of buses.

    ``gen_bus[i]`` is the bus index of generator ``i``. Buses without a
    generator inject nothing, so their angles are eliminated (Kron reduction).
    """

    susceptance: np.ndarray
    gen_bus: tuple[int, ...]
    load: np.ndarray
    rho: np.ndarray | None = None
    sigma: np.ndarray | None = None

    def __post_init__(self):
        B = np.array(self.susceptance, dtype=float)
        n_bus = B.shape[0]
        if B.ndim != 2 or B.shape != (n_bus, n_bus):
            raise ValueError("susceptance must be a square matrix")
        if not np.allclose(B, B.T, rtol=0, atol=1e-12):
            raise ValueError("susceptance must be symmetric")
        if np.any(B < 0):
            raise ValueError("susceptances must be non-negative")
        if np.any(np.diag(B) != 0):
            raise ValueError("susceptance diagonal must be zero")
        B.setflags(write=False)
        object.__setattr__(self, "susceptance", B)
        gen_bus = tuple(int(b) for b in self.gen_bus)
        if len(set(gen_bus)) != len(gen_bus) or any(b < 0 or b >= n_bus for b in gen_bus):
            raise ValueError(f"invalid generator bus map {gen_bus}")
        object.__setattr__(self, "gen_bus", gen_bus)
        load = _as_vec(self.load)
        if load.size != n_bus:
            raise ValueError("load vector length must equal number of buses")
        object.__setattr__(self, "load", load)
        rho = _as_vec(np.zeros(n_bus) if self.rho is None else self.rho, n_bus)
        object.__setattr__(self, "rho", rho)
        if self.sigma is None:
            total = load.sum()
            sigma = load / total if total > 0 else np.full(n_bus, 1.0 / n_bus)
        else:
            sigma = self.sigma
        sigma = _as_vec(sigma, n_bus)
        if abs(sigma.sum() - 1.0) > 1e-9:
            raise ValueError(f"load participation factors must sum to 1, got {sigma.sum()}")
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_bus(self) -> int:
        return int(self.susceptance.shape[0])

    @property
    def n_gen(self) -> int:
        return len(self.gen_bus)

    @property
    def passive_buses(self) -> list[int]:
        gens = set(self.gen_bus)
        return [b for b in range(self.n_bus) if b not in gens]

    def laplacian(self) -> np.ndarray:
        B = self.susceptance
        return np.diag(B.sum(axis=1)) - B

    def effective_load(self) -> np.ndarray:
        return (1.0 + self.rho) * self.load

    def with_load(self, load) -> "NetworkModel":
        return NetworkModel(self.susceptance, self.gen_bus, load, self.rho, None)


def _check_connected(net: NetworkModel) -> None:
    if net.n_bus > 1 and np.linalg.matrix_rank(net.laplacian()) != net.n_bus - 1:
        raise NetworkError("network is not connected")


def dc_power_flow(delta, net: NetworkModel) -> np.ndarray:
    """Per-bus generator injections for given generator rotor angles.

    Generator angles are taken as bus angles (coherency). Angles of passive
    buses are solved from their zero-injection balance, then each generator
    bus balance ``P_i - (1+rho_i) P_Li = sum_k B_ik (theta_i - theta_k)``
    yields ``P_i``. Entries for buses without a generator are zero.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (net.n_gen,):
        raise ValueError(f"expected {net.n_gen} generator angles, got shape {delta.shape}")
    _require_finite("dc_power_flow", delta)
    _check_connected(net)
    L = net.laplacian()
    g = list(net.gen_bus)
    lo = net.passive_buses
    eff = net.effective_load()
    theta = np.zeros(net.n_bus)
    theta[g] = delta
    if lo:
        L_ll = L[np.ix_(lo, lo)]
        rhs = -eff[lo] - L[np.ix_(lo, g)] @ delta
        try:
            theta[lo] = np.linalg.solve(L_ll, rhs)
        except np.linalg.LinAlgError as exc:
            raise NetworkError("reduced susceptance matrix is singular") from exc
    p = np.zeros(net.n_bus)
    p[g] = eff[g] + L[g, :] @ theta
    return p


def kron_reduce(net: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(K, c)`` such that generator outputs are ``K @ delta + c``.

    Equivalent to :func:`dc_power_flow` restricted to generator buses, but
    precomputed once so the inner integration loop is a single mat-vec.
    """
    _check_connected(net)
    L = net.laplacian()
    g = list(net.gen_bus)
    lo = net.passive_buses
    eff = net.effective_load()
    K = L[np.ix_(g, g)].copy()
    c = eff[g].copy()
    if lo:
        L_ll = L[np.ix_(lo, lo)]
        try:
            X = np.linalg.solve(L_ll, np.column_stack([L[np.ix_(lo, g)], eff[lo]]))
        except np.linalg.LinAlgError as exc:
            raise NetworkError("reduced susceptance matrix is singular") from exc
        L_gl = L[np.ix_(g, lo)]
        K -= L_gl @ X[:, :-1]
        c -= L_gl @ X[:, -1]
    return K, c


def angles_for_outputs(net: NetworkModel, p_gen) -> np.ndarray:
    """Generator angles (generator 0 as reference) that produce outputs ``p_gen``.

    Requires ``sum(p_gen) == sum((1+rho) P_L)``; used to start Model II
    episodes at a consistent operating point.
    """
    p_gen = np.asarray(p_gen, dtype=float)
    K, c = kron_reduce(net)
    imbalance = p_gen.sum() - c.sum()
    if abs(imbalance) > 1e-9 * max(1.0, abs(c.sum())):
        raise ValueError(f"generator outputs do not balance the load (gap {imbalance:.3e})")
    delta = np.zeros(net.n_gen)
    if net.n_gen > 1:
        delta[1:] = np.linalg.solve(K[1:, 1:], (p_gen - c)[1:])
    return delta


def gen_step(s: GenState, p: GenParams, reduced: tuple[np.ndarray, np.ndarray], dt: float) -> GenState:
    """One Model II transition.

    Angles advance first with the old speeds; the network is then solved at
    the new angles and that electrical output drives the speed update, while
    speed and governor derivatives otherwise use the old state.
    """
    K, c = reduced
    delta = s.delta + s.d_omega * dt
    p_elec = K @ delta + c
    _, d_omega_dt, d_psv_dt = gen_derivatives(s, p, p_elec)
    d_omega, p_sv = euler_step((s.d_omega, s.p_sv), (d_omega_dt, d_psv_dt), dt)
    return GenState(delta=delta, d_omega=d_omega, p_sv=p_sv, z=s.z)


# --------------------------------------------------------------------------
# Integration


def euler_step(state, derivatives, dt: float):
    """Explicit Euler update ``x + dx/dt * dt``.

    ``state`` and ``derivatives`` may be scalars, arrays, or equal-length
    tuples of either.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if isinstance(state, tuple):
        if len(state) != len(derivatives):
            raise ValueError("state and derivative tuples differ in length")
        return tuple(x + dx * dt for x, dx in zip(state, derivatives))
    return state + derivatives * dt


# --------------------------------------------------------------------------
# Wind


@dataclass(frozen=True)
class WindParams:
    alpha1: float = -0.002
    alpha2: float = 0.01
    beta1: float = -0.5
    beta2: float = -0.4

    def __post_init__(self):
        _require_finite("WindParams", self.alpha1, self.alpha2, self.beta1, self.beta2)
        if self.beta1 >= 0 or self.alpha1 >= 0:
            raise ValueError("wind process needs alpha1 < 0 and beta1 < 0")

    @property
    def speed_variance(self) -> float:
        return self.beta2**2 / (2.0 * abs(self.beta1))


@dataclass(frozen=True)
class WindState:
    d_pw: float = 0.0
    d_v: float = 0.0


def wind_step(s: WindState, p: WindParams, dt: float, noise) -> WindState:
    """Euler-Maruyama step of the wind speed / wind power process.

    ``noise`` is a standard normal draw (scalar or array for ensembles).
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    d_v = s.d_v + p.beta1 * s.d_v * dt + p.beta2 * math.sqrt(dt) * noise
    d_pw = s.d_pw + (p.alpha1 * s.d_pw + p.alpha2 * s.d_v) * dt
    return WindState(d_pw=d_pw, d_v=d_v)


# --------------------------------------------------------------------------
# Metrics


def rocof(trace: Sequence[float], dt: float, f_nom: float = 50.0) -> tuple[float, float, float]:
    """Rate of change of frequency (Hz/s) of a per-unit speed-deviation series.

    Returns ``(max, min, mean)`` over the finite differences.
    """
    w = np.asarray(trace, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise ValueError("rocof needs at least two samples")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    r = np.diff(f_nom * w) / dt
    return float(r.max()), float(r.min()), float(r.mean())
