"""Preset test systems: the eight-unit BA area, the two-unit BA area, and the
two-generator / two-load network, plus the disturbance scenarios run on them."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .dispatch import CostModel
from .dynamics import BAParams, GenParams, NetworkModel, WindParams
from .env import EnvConfig

LOAD_STEP = 0.15


def two_gen_two_load_network(load=(1.5, 1.5), susceptance: float = 10.0) -> NetworkModel:
    """Buses 0/1 hold generators 1/2, buses 2/3 hold loads 1/2.

    Lines: G1-L1, L1-L2, L2-G2, all with the same susceptance.
    """
    B = np.zeros((4, 4))
    for i, k in ((0, 2), (2, 3), (3, 1)):
        B[i, k] = B[k, i] = susceptance
    return NetworkModel(B, gen_bus=(0, 1), load=[0.0, 0.0, load[0], load[1]])


def eight_unit_area(**overrides) -> EnvConfig:
    kw = dict(
        model=1,
        n_agents=8,
        ba=BAParams(M=0.1, D=0.016, R_D=0.1, T_SV=30.0, f_nom=50.0),
        nominal_load=3.0,
        initial_z=(0.375,) * 8,
        reward="secondary",
    )
    kw.update(overrides)
    return EnvConfig(**kw)


def two_unit_area(**overrides) -> EnvConfig:
    kw = dict(
        model=1,
        n_agents=2,
        ba=BAParams(M=0.1, D=0.016, R_D=0.1, T_SV=30.0, f_nom=50.0),
        nominal_load=3.0,
        initial_z=(1.5, 1.5),
        reward="secondary",
    )
    kw.update(overrides)
    return EnvConfig(**kw)


def tertiary_area(**overrides) -> EnvConfig:
    kw = dict(reward="tertiary", costs=CostModel.quadratic([2.0, 1.0]), eps1=0.05, eps2=0.2, d1=200.0, d2=100.0)
    kw.update(overrides)
    return two_unit_area(**kw)


def wind_area(**overrides) -> EnvConfig:
    kw = dict(wind=WindParams(alpha1=-0.002, alpha2=0.01, beta1=-0.5, beta2=-0.4))
    kw.update(overrides)
    return two_unit_area(**kw)


def two_gen_network(**overrides) -> EnvConfig:
    kw = dict(
        model=2,
        n_agents=2,
        gens=GenParams(M=[0.1, 0.15], D=[0.016, 0.018], R_D=[0.1, 0.08], T_SV=[30.0, 30.0]),
        network=two_gen_two_load_network(),
        initial_z=(1.5, 1.5),
        reward="model2",
        eps1=0.05,
        tiers=(100.0, 200.0),
    )
    kw.update(overrides)
    return EnvConfig(**kw)


PRESETS = {
    "secondary8": eight_unit_area,
    "secondary": two_unit_area,
    "tertiary": tertiary_area,
    "wind": wind_area,
    "model2": two_gen_network,
}


def preset(name: str, **overrides) -> EnvConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](**overrides)


def evaluation_config(cfg: EnvConfig, step: float = LOAD_STEP, churn: float | None = None) -> EnvConfig:
    """Operation-phase variant: fixed load step instead of random jitter."""
    return replace(cfg, load_step=step, churn=churn if churn is not None else cfg.churn)
