"""Scenario files: flat ``key = value`` sections (INI) or the same layout as JSON.

Sections::

    [env]       preset plus any EnvConfig scalar (episode_len, dz_max, ...)
    [ba]        M, D, R_D, T_SV, rho, f_nom                      (Model I)
    [gens]      M, D, R_D, T_SV as comma lists                   (Model II)
    [network]   susceptance, load (two-generator/two-load grid) or
                matrix (rows separated by ';'), gen_bus, bus_load
    [costs]     a, beta, gamma as comma lists
    [wind]      enabled, alpha1, alpha2, beta1, beta2
    [train]     any TrainConfig field
    [scenario]  name, load_step, churn, seeds, grc, eval_len

Anything not given falls back to the preset named in ``[env]``.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from .dispatch import CostModel
from .dynamics import BAParams, GenParams, NetworkModel, WindParams
from .env import ConfigError, EnvConfig
from .maddpg import TrainConfig
from .scenarios import LOAD_STEP, PRESETS, preset, two_gen_two_load_network

SECTIONS = ("env", "ba", "gens", "network", "costs", "wind", "train", "scenario")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    env: EnvConfig
    train: TrainConfig
    load_step: float = LOAD_STEP
    churn: float | None = None
    seeds: tuple[int, ...] = (0,)
    grc: tuple[float, ...] = (0.1, 0.05, 0.01)
    eval_len: int | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("scenario needs at least one seed")
        if any(b <= 0 for b in self.grc):
            raise ConfigError("GRC bounds must be positive")

    def eval_env(self, dz_max: float | None = None) -> EnvConfig:
        """Operation-phase environment: fixed step, optional churn and GRC override."""
        kw = dict(load_step=self.load_step, churn=self.churn)
        if dz_max is not None:
            kw["dz_max"] = dz_max
        if self.eval_len is not None:
            kw["episode_len"] = self.eval_len
        return replace(self.env, **kw)


# --------------------------------------------------------------------------
# Parsing helpers


def _floats(v) -> list[float]:
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(" ", "").split(",") if x]


def _ints(v) -> list[int]:
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).replace(" ", "").split(",") if x]


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _optional_float(v) -> float | None:
    if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none", "null")):
        return None
    return float(v)


def read_raw(path) -> dict[str, dict]:
    """Load a config file into ``{section: {key: value}}``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
            raise ConfigError(f"{path}: top level must map section names to objects")
    else:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        raw = {s: dict(parser[s]) for s in parser.sections()}
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return raw


_ENV_SCALARS = {
    "model": int,
    "n_agents": int,
    "reward": str,
    "nominal_load": float,
    "load_jitter": float,
    "episode_len": int,
    "dt": float,
    "substeps": int,
    "eps1": float,
    "eps2": float,
    "d": float,
    "d1": float,
    "d2": float,
    "dz_max": float,
    "normalize_curvature": _bool,
    "tiers": _floats,
    "initial_z": _floats,
    "churn": _optional_float,
    "load_step": _optional_float,
}


def _convert(section: str, values: dict, schema: dict) -> dict:
    out = {}
    for k, v in values.items():
        if k not in schema:
            raise ConfigError(f"[{section}] unknown key {k!r}")
        try:
            out[k] = schema[k](v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] bad value for {k}: {v!r}") from exc
    return out


def _train_schema() -> dict:
    conv = {"int": int, "float": float}
    schema = {}
    for f in fields(TrainConfig):
        if f.name == "dense":
            schema[f.name] = lambda v: tuple(_ints(v))
        elif f.name == "lstm":
            schema[f.name] = lambda v: None if str(v).lower() in ("none", "null", "") else int(v)
        elif f.name in ("grad_clip", "reward_scale"):
            schema[f.name] = _optional_float
        else:
            schema[f.name] = conv[str(f.type).split(" ")[0]]
    return schema


def build_spec(raw: dict[str, dict], overrides: dict | None = None) -> ScenarioSpec:
    """Assemble a :class:`ScenarioSpec` from parsed sections plus CLI overrides.

    ``overrides`` keys: seed, episodes, grc, wind, model, preset.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    env_raw = dict(raw.get("env", {}))
    name = env_raw.pop("preset", None)
    if "preset" in overrides:
        name = overrides["preset"]
    if name is None:
        name = "model2" if int(overrides.get("model", env_raw.get("model", 1))) == 2 else "secondary"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = preset(name)
    kw = _convert("env", env_raw, _ENV_SCALARS)
    if "model" in overrides and int(overrides["model"]) != base.model and "preset" not in overrides:
        raise ConfigError(f"--model {overrides['model']} conflicts with preset {name!r}")

    if "ba" in raw:
        cur = asdict(base.ba) if base.ba is not None else {}
        cur.update(_convert("ba", raw["ba"], {k: float for k in ("M", "D", "R_D", "T_SV", "rho", "f_nom")}))
        kw["ba"] = BAParams(**cur)
    if "gens" in raw:
        g = _convert("gens", raw["gens"], {k: _floats for k in ("M", "D", "R_D", "T_SV")})
        cur = {k: list(getattr(base.gens, k)) for k in ("M", "D", "R_D", "T_SV")} if base.gens else {}
        cur.update(g)
        kw["gens"] = GenParams(**cur)
    if "network" in raw:
        kw["network"] = _network(raw["network"])
    if "costs" in raw:
        c = _convert("costs", raw["costs"], {k: _floats for k in ("a", "beta", "gamma")})
        if "a" not in c:
            raise ConfigError("[costs] needs a")
        kw["costs"] = CostModel.quadratic(c["a"], c.get("beta"), c.get("gamma"))
    wind_on = overrides.get("wind")
    if "wind" in raw:
        w = dict(raw["wind"])
        enabled = _bool(w.pop("enabled", True))
        params = WindParams(**_convert("wind", w, {k: float for k in ("alpha1", "alpha2", "beta1", "beta2")}))
        if wind_on is None:
            wind_on = enabled
        kw["wind"] = params if wind_on else None
    elif wind_on:
        kw["wind"] = WindParams()
    if "grc" in overrides:
        kw["dz_max"] = float(overrides["grc"])
    try:
        env = replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    tr = _convert("train", raw.get("train", {}), _train_schema())
    if "seed" in overrides:
        tr["seed"] = int(overrides["seed"])
    if "episodes" in overrides:
        tr["episodes"] = int(overrides["episodes"])
    tr.setdefault("steps_per_episode", env.episode_len)
    try:
        train_cfg = TrainConfig(**tr)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    sc = _convert(
        "scenario",
        raw.get("scenario", {}),
        {
            "name": str,
            "load_step": float,
            "churn": _optional_float,
            "seeds": lambda v: tuple(_ints(v)),
            "grc": lambda v: tuple(_floats(v)),
            "eval_len": int,
        },
    )
    if "seed" in overrides and "seeds" not in sc:
        sc["seeds"] = (int(overrides["seed"]),)
    sc.setdefault("name", name)
    return ScenarioSpec(env=env, train=train_cfg, **sc)


def _network(sec: dict) -> NetworkModel:
    keys = {"susceptance", "load", "matrix", "gen_bus", "bus_load"}
    unknown = set(sec) - keys
    if unknown:
        raise ConfigError(f"[network] unknown keys {sorted(unknown)}")
    try:
        if "matrix" in sec:
            m = sec["matrix"]
            rows = m if isinstance(m, list) else [_floats(r) for r in str(m).split(";") if r.strip()]
            return NetworkModel(np.array(rows, dtype=float), gen_bus=tuple(_ints(sec["gen_bus"])),
                                load=_floats(sec["bus_load"]))
        load = tuple(_floats(sec.get("load", "1.5,1.5")))
        return two_gen_two_load_network(load=load, susceptance=float(sec.get("susceptance", 10.0)))
    except KeyError as exc:
        raise ConfigError(f"[network] missing {exc.args[0]}") from exc
    except ValueError as exc:
        raise ConfigError(f"[network] {exc}") from exc


def load_spec(path=None, overrides: dict | None = None) -> ScenarioSpec:
    raw = read_raw(path) if path is not None else {}
    return build_spec(raw, overrides)


# --------------------------------------------------------------------------
# Resolved-config echo


def _plain(v):
    if is_dataclass(v):
        return {f.name: _plain(getattr(v, f.name)) for f in fields(v)}
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def resolved(spec: ScenarioSpec) -> dict:
    """Every field of the scenario, environment and training config, defaults included."""
    return _plain(spec)


def resolved_json(spec: ScenarioSpec) -> str:
    return json.dumps(resolved(spec), indent=2, sort_keys=True)
