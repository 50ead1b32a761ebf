"""Multi-agent DDPG with recurrent actors and centralised critics.

Replay stores windows of the *global* state (``[speed deviation(s), z]``)
of length ``history``; each agent's local observation window is a column
slice of it, so locality is enforced by construction.

Critic input layout for agent ``i`` (recorded in checkpoints):

* LSTM sequence: global state window with columns reordered own-first, i.e.
  ``[w_i, w_others..., z_i, z_others...]`` (a single shared ``w`` for Model I);
* extra vector: joint action scaled by ``1/dz_max``, own action first, then
  the others in agent-index order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .dispatch import eval_cost
from .env import ConfigError, EnvConfig, LFCEnv
from .nn import Adam, Network, NetSpec, soft_update
from .trace import EpisodeTrace

CHECKPOINT_FORMAT = "gridmarl-maddpg"
CHECKPOINT_VERSION = 1
CRITIC_LAYOUT = "lstm[w_own,w_others,z_own,z_others]+extra[dz_own,dz_others]/dz_max"


class CheckpointError(ValueError):
    """Checkpoint does not match the environment it is evaluated on."""


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 300
    steps_per_episode: int = 100
    gamma: float = 0.95
    tau: float = 0.01
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    batch_size: int = 64
    buffer_size: int = 100_000
    noise_scale: float = 0.3
    noise_decay: float = 0.999
    history: int = 8
    lstm: int | None = 16
    dense: tuple[int, ...] = (64, 32, 16)
    train_every: int = 1
    omega_scale: float = 10.0
    action_reg: float = 1e-3
    grad_clip: float | None = 10.0
    reward_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dense", tuple(int(d) for d in self.dense))
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        if min(self.lr_actor, self.lr_critic) <= 0:
            raise ConfigError("learning rates must be positive")
        if self.episodes < 1 or self.steps_per_episode < 1 or self.history < 1 or self.train_every < 1:
            raise ConfigError("episodes, steps_per_episode, history and train_every must be >= 1")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= buffer_size")
        if self.noise_scale < 0 or not 0 < self.noise_decay <= 1:
            raise ConfigError("noise_scale must be >= 0 and noise_decay in (0, 1]")
        if self.omega_scale <= 0 or self.action_reg < 0:
            raise ConfigError("omega_scale must be positive and action_reg non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dense"] = list(self.dense)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# Replay


class ReplayBuffer:
    """Ring buffer of global-state windows, joint actions and shared rewards."""

    def __init__(self, capacity: int, history: int, state_dim: int, n_agents: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, history, state_dim))
        self.actions = np.zeros((capacity, n_agents))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, history, state_dim))
        self.dones = np.zeros(capacity)
        self.size = 0
        self._pos = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state_win, action, reward, next_state_win, done) -> None:
        k = self._pos
        self.states[k] = state_win
        self.actions[k] = action
        self.rewards[k] = reward
        self.next_states[k] = next_state_win
        self.dones[k] = float(done)
        self._pos = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch)

    def sample(self, batch: int, rng: np.random.Generator):
        if self.size < batch:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch}")
        idx = self.sample_indices(batch, rng)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx]


class History:
    """Sliding window of the last ``length`` global states, zero-padded at reset."""

    def __init__(self, length: int, state_dim: int):
        self.buf = np.zeros((length, state_dim))

    def reset(self, state) -> np.ndarray:
        self.buf[:] = 0.0
        self.buf[-1] = state
        return self.buf.copy()

    def push(self, state) -> np.ndarray:
        self.buf = np.roll(self.buf, -1, axis=0)
        self.buf[-1] = state
        return self.buf.copy()


# --------------------------------------------------------------------------
# Agents


def _layout(model: int, n: int, i: int) -> tuple[list[int], list[int], list[int]]:
    """Column indices (actor obs, critic state) and the action order for agent ``i``."""
    others = [j for j in range(n) if j != i]
    order = [i, *others]
    if model == 1:
        obs_cols = [0, 1 + i]
        critic_cols = [0, *(1 + j for j in order)]
    else:
        obs_cols = [i, n + i]
        critic_cols = [*order, *(n + j for j in order)]
    return obs_cols, critic_cols, order


@dataclass
class Agent:
    index: int
    actor: Network
    critic: Network
    actor_target: Network
    critic_target: Network
    actor_opt: Adam
    critic_opt: Adam
    obs_cols: list[int]
    critic_cols: list[int]
    action_order: list[int]
    noise: float = 0.0


class MADDPG:
    """A team of agents bound to one environment configuration."""

    def __init__(self, env_cfg: EnvConfig, cfg: TrainConfig, rng: np.random.Generator | None = None):
        self.env_cfg = env_cfg
        self.cfg = cfg
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        n = env_cfg.n_agents
        self.n = n
        self.dz_max = env_cfg.dz_max
        sd = env_cfg.state_dim
        self.state_scale = np.ones(sd)
        self.state_scale[: env_cfg.omega_dim] = cfg.omega_scale
        self.actor_spec = NetSpec(2, lstm=cfg.lstm, dense=cfg.dense, out=1)
        self.critic_spec = NetSpec(sd, lstm=cfg.lstm, dense=cfg.dense, out=1, extra_size=n)
        self.agents: list[Agent] = []
        for i in range(n):
            obs_cols, critic_cols, order = _layout(env_cfg.model, n, i)
            actor = Network(self.actor_spec, rng=rng)
            critic = Network(self.critic_spec, rng=rng)
            self.agents.append(
                Agent(
                    index=i,
                    actor=actor,
                    critic=critic,
                    actor_target=actor.copy(),
                    critic_target=critic.copy(),
                    actor_opt=Adam(cfg.lr_actor, max_grad_norm=cfg.grad_clip),
                    critic_opt=Adam(cfg.lr_critic, max_grad_norm=cfg.grad_clip),
                    obs_cols=obs_cols,
                    critic_cols=critic_cols,
                    action_order=order,
                    noise=cfg.noise_scale,
                )
            )

    # -- inputs ------------------------------------------------------------------

    def actor_input(self, agent: Agent, states) -> np.ndarray:
        """``(batch, H, state_dim)`` global windows -> ``(batch, H, 2)`` local windows."""
        return states[:, :, agent.obs_cols] * self.state_scale[agent.obs_cols]

    def critic_input(self, agent: Agent, states, actions) -> tuple[np.ndarray, np.ndarray]:
        x = states[:, :, agent.critic_cols] * self.state_scale[agent.critic_cols]
        return x, actions[:, agent.action_order] / self.dz_max

    # -- acting ------------------------------------------------------------------

    def act_batch(self, agent: Agent, obs_windows, noise_on: bool = False,
                  rng: np.random.Generator | None = None) -> np.ndarray:
        """Bounded increments for a ``(batch, H, 2)`` stack of local windows."""
        x = np.asarray(obs_windows, dtype=float)
        if x.ndim != 3 or x.shape[2] != 2:
            raise ValueError(f"observation windows must be (batch, H, 2), got {x.shape}")
        raw = agent.actor(x * self.state_scale[agent.obs_cols])[:, 0]
        if noise_on and agent.noise > 0:
            raw = raw + agent.noise * rng.standard_normal(raw.shape)
        return self.dz_max * np.tanh(raw)

    def act(self, agent: Agent, obs_window, noise_on: bool = False, rng: np.random.Generator | None = None) -> float:
        """Bounded increment ``dz_max * tanh(actor(obs) + noise)`` from a local ``(H, 2)`` window."""
        x = np.asarray(obs_window, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"observation window must be (H, 2), got {x.shape}")
        return float(self.act_batch(agent, x[None], noise_on, rng)[0])

    def act_all(self, state_window, noise_on: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        w = np.asarray(state_window, dtype=float)
        return np.array([self.act(a, w[:, a.obs_cols], noise_on, rng) for a in self.agents])

    def critic_q(self, agent: Agent, state_window, actions) -> float:
        """Q estimate of agent ``agent`` for one global window and joint action."""
        s = np.asarray(state_window, dtype=float)
        a = np.asarray(actions, dtype=float).reshape(-1)
        if s.ndim != 2 or s.shape[1] != self.env_cfg.state_dim or a.size != self.n:
            raise ValueError("critic input dimensions do not match the team")
        x, ex = self.critic_input(agent, s[None], a[None])
        return float(agent.critic(x, ex)[0, 0])

    def decay_noise(self) -> None:
        for ag in self.agents:
            ag.noise *= self.cfg.noise_decay

    # -- learning ------------------------------------------------------------------

    def targets(self, rewards, next_states, dones, gamma: float | None = None) -> list[np.ndarray]:
        """TD targets ``r + gamma * Q'_i(s', a')`` per agent; bootstrap cut at episode end."""
        gamma = self.cfg.gamma if gamma is None else gamma
        next_a = np.column_stack(
            [self.dz_max * np.tanh(ag.actor_target(self.actor_input(ag, next_states))[:, 0]) for ag in self.agents]
        )
        ys = []
        for ag in self.agents:
            x, ex = self.critic_input(ag, next_states, next_a)
            q_next = ag.critic_target(x, ex)[:, 0]
            ys.append(rewards + gamma * (1.0 - dones) * q_next)
        return ys

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator, reward_scale: float = 1.0):
        """One critic and one actor update per agent, then soft target updates.

        Returns a list of ``(critic_loss, actor_objective)`` per agent.
        """
        cfg = self.cfg
        S, A, R, S2, D = buffer.sample(cfg.batch_size, rng)
        R = R * reward_scale
        B = S.shape[0]
        ys = self.targets(R, S2, D)
        stats = []
        for ag, y in zip(self.agents, ys):
            # critic: mean squared TD error
            x, ex = self.critic_input(ag, S, A)
            q, cache = ag.critic.forward(x, ex)
            err = q[:, 0] - y
            grads, _, _ = ag.critic.backward(cache, (2.0 / B) * err[:, None])
            ag.critic_opt.step(ag.critic, grads)

            # actor: ascend Q through its own action slot (slot 0 of the extra input)
            xa = self.actor_input(ag, S)
            raw, acache = ag.actor.forward(xa)
            own = np.tanh(raw[:, 0])
            A_pi = A.copy()
            A_pi[:, ag.index] = self.dz_max * own
            xc, exc = self.critic_input(ag, S, A_pi)
            q_pi, ccache = ag.critic.forward(xc, exc)
            _, _, dextra = ag.critic.backward(ccache, np.full((B, 1), -1.0 / B), param_grads=False)
            d_raw = dextra[:, 0] * (1.0 - own * own) + (cfg.action_reg / B) * raw[:, 0]
            agrads, _, _ = ag.actor.backward(acache, d_raw[:, None])
            ag.actor_opt.step(ag.actor, agrads)
            stats.append((float(np.mean(err * err)), float(q_pi.mean())))
        for ag in self.agents:
            soft_update(ag.actor_target, ag.actor, cfg.tau)
            soft_update(ag.critic_target, ag.critic, cfg.tau)
        return stats

    # -- checkpoints -----------------------------------------------------------------

    def header(self) -> dict:
        ec = self.env_cfg
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model": ec.model,
            "n_agents": self.n,
            "state_dim": ec.state_dim,
            "dz_max": self.dz_max,
            "critic_layout": CRITIC_LAYOUT,
            "train": self.cfg.to_dict(),
            "actor_spec": self.actor_spec.to_dict(),
            "critic_spec": self.critic_spec.to_dict(),
        }

    def save(self, path) -> None:
        arrays = {"header": np.frombuffer(json.dumps(self.header(), sort_keys=True).encode(), dtype=np.uint8)}
        for ag in self.agents:
            for role in ("actor", "critic", "actor_target", "critic_target"):
                net: Network = getattr(ag, role)
                for k, v in net.params.items():
                    arrays[f"agent{ag.index}/{role}/{k}"] = v
            arrays[f"agent{ag.index}/noise"] = np.array(ag.noise)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path, env_cfg: EnvConfig) -> "MADDPG":
        try:
            data = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from exc
        with data:
            if "header" not in data:
                raise CheckpointError(f"{path}: missing header")
            header = json.loads(bytes(data["header"]).decode())
            if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(f"{path}: unsupported checkpoint format")
            expect = {"model": env_cfg.model, "n_agents": env_cfg.n_agents, "state_dim": env_cfg.state_dim}
            for k, v in expect.items():
                if header[k] != v:
                    raise CheckpointError(f"checkpoint {k}={header[k]} but scenario needs {v}")
            if header["critic_layout"] != CRITIC_LAYOUT:
                raise CheckpointError("checkpoint uses a different critic input layout")
            cfg = TrainConfig.from_dict({**header["train"], "dense": tuple(header["train"]["dense"])})
            team = cls(env_cfg, cfg, rng=np.random.default_rng(0))
            # evaluation may use a different GRC bound than training; the actor head is bound-free
            for ag in team.agents:
                for role in ("actor", "critic", "actor_target", "critic_target"):
                    net: Network = getattr(ag, role)
                    prefix = f"agent{ag.index}/{role}/"
                    params = {k: np.array(data[prefix + k]) for k in net.params}
                    setattr(ag, role, Network(net.spec, params))
                ag.noise = float(data[f"agent{ag.index}/noise"])
        return team


# --------------------------------------------------------------------------
# Loops


@dataclass
class TrainResult:
    team: MADDPG
    episode_rewards: list[float] = field(default_factory=list)
    losses: list[list[tuple[float, float]]] = field(default_factory=list)


def train(env_cfg: EnvConfig, cfg: TrainConfig, progress=None) -> TrainResult:
    """Run ``cfg.episodes`` training episodes; fully determined by ``cfg.seed``."""
    if env_cfg.episode_len != cfg.steps_per_episode:
        env_cfg = replace(env_cfg, episode_len=cfg.steps_per_episode)
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng, noise_rng, sample_rng = (np.random.default_rng(s) for s in seeds)
    episode_seeds = np.random.default_rng(seeds[0].spawn(1)[0]).integers(0, 2**63 - 1, size=cfg.episodes)
    team = MADDPG(env_cfg, cfg, init_rng)
    buffer = ReplayBuffer(cfg.buffer_size, cfg.history, env_cfg.state_dim, env_cfg.n_agents)
    hist = History(cfg.history, env_cfg.state_dim)
    scale = cfg.reward_scale if cfg.reward_scale is not None else 1.0 / env_cfg.max_reward()
    env = LFCEnv(env_cfg)
    result = TrainResult(team)
    step_count = 0
    for ep in range(cfg.episodes):
        env.reset(seed=int(episode_seeds[ep]))
        win = hist.reset(env.global_state())
        total = 0.0
        ep_losses = []
        for _ in range(cfg.steps_per_episode):
            a = team.act_all(win, noise_on=True, rng=noise_rng)
            res = env.step(a)
            nxt = hist.push(env.global_state())
            buffer.add(win, a, res.reward, nxt, res.done)
            win = nxt
            total += res.reward
            step_count += 1
            if len(buffer) >= cfg.batch_size and step_count % cfg.train_every == 0:
                ep_losses.append(team.train_step(buffer, sample_rng, scale))
            if res.done:
                break
        team.decay_noise()
        result.episode_rewards.append(total)
        result.losses.append(ep_losses[-1] if ep_losses else [])
        if progress is not None:
            progress(ep, total)
    return result


def rollout(env_cfg: EnvConfig, policy, seed: int = 0) -> EpisodeTrace:
    """Roll out ``policy(env) -> dz`` into a trace whose first row is the t=0 state."""
    env = LFCEnv(env_cfg)
    env.reset(seed=seed)
    trace = EpisodeTrace(env_cfg.model, env_cfg.n_agents, env_cfg.control_dt, env_cfg.f_nom)
    cost = eval_cost(env_cfg.costs, env.p_units)[0] if env_cfg.costs is not None else None
    trace.record(0.0, env.d_omega, env.z, np.zeros(env_cfg.n_agents), env.p_units, env.load, math.nan, cost)
    done = False
    while not done:
        res = env.step(policy(env))
        info = res.info
        trace.record(info["t"], info["d_omega"], info["z"], info["dz"], info["p"], info["p_load"],
                     res.reward, info.get("cost"), info["c1"], info["c2"])
        done = res.done
    return trace


def evaluate(team: MADDPG, env_cfg: EnvConfig, seed: int = 0) -> EpisodeTrace:
    """Noise-free rollout of the actors; the reward is recorded but never fed back."""
    hist = History(team.cfg.history, env_cfg.state_dim)

    def policy(env: LFCEnv) -> np.ndarray:
        win = hist.reset(env.global_state()) if env.t_step == 0 else hist.push(env.global_state())
        return team.act_all(win, noise_on=False)

    return rollout(env_cfg, policy, seed)


def hold_policy(env: LFCEnv) -> np.ndarray:
    """Keep every secondary command fixed (droop response only)."""
    return np.zeros(env.cfg.n_agents)
