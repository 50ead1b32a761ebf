"""Small recurrent/dense networks with hand-written reverse-mode gradients.

A network is an optional LSTM over a window of per-step features, whose
final hidden state (optionally concatenated with an ``extra`` vector, e.g. a
critic's action input) feeds a stack of dense layers and a linear or tanh
output head.

Shapes: inputs are ``(batch, time, features)``; outputs ``(batch, out)``.
Gradients returned by :func:`backward` are for ``sum(dy * y)``, so the
caller folds any batch averaging into ``dy``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

# largest float64 strictly below 1; keeps tanh heads inside the open interval
TANH_MAX = float(np.nextafter(1.0, 0.0))


class StaleCacheError(RuntimeError):
    """Backward was called with a cache produced by different parameters."""


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def bounded_tanh(x):
    return np.clip(np.tanh(x), -TANH_MAX, TANH_MAX)


_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    # name -> (f(z), f'(z) expressed through the output a = f(z) and z)
    "relu": (lambda z: np.maximum(z, 0.0), lambda a, z: (z > 0).astype(z.dtype)),
    "tanh": (bounded_tanh, lambda a, z: 1.0 - a * a),
    "linear": (lambda z: z, lambda a, z: np.ones_like(z)),
}


@dataclass(frozen=True)
class NetSpec:
    input_size: int
    lstm: int | None = 16
    dense: tuple[int, ...] = (64, 32, 16)
    out: int = 1
    extra_size: int = 0
    activation: str = "relu"
    out_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "dense", tuple(int(d) for d in self.dense))
        if self.input_size < 1 or self.out < 1 or self.extra_size < 0:
            raise ValueError(f"invalid layer sizes in {self}")
        if self.lstm is not None and self.lstm < 1:
            raise ValueError("lstm width must be positive or None")
        if any(d < 1 for d in self.dense):
            raise ValueError("dense widths must be positive")
        for act in (self.activation, self.out_activation):
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def dense_input(self) -> int:
        base = self.lstm if self.lstm is not None else self.input_size
        return base + self.extra_size

    def layer_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        if self.lstm is not None:
            shapes["lstm.W"] = (self.input_size + self.lstm, 4 * self.lstm)
            shapes["lstm.b"] = (4 * self.lstm,)
        width = self.dense_input
        for k, d in enumerate(self.dense):
            shapes[f"dense{k}.W"] = (width, d)
            shapes[f"dense{k}.b"] = (d,)
            width = d
        shapes["out.W"] = (width, self.out)
        shapes["out.b"] = (self.out,)
        return shapes

    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.layer_shapes().values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dense"] = list(self.dense)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        d = dict(d)
        d["dense"] = tuple(d.get("dense", ()))
        return cls(**d)


Params = dict[str, np.ndarray]


def init_params(spec: NetSpec, rng: np.random.Generator) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    params: Params = {}
    shapes = spec.layer_shapes()
    for name, shape in shapes.items():
        layer = name.rsplit(".", 1)[0]
        fan_in = shapes[f"{layer}.W"][0]
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_params(spec: NetSpec) -> Params:
    return {k: np.zeros(s) for k, s in spec.layer_shapes().items()}


@dataclass
class Cache:
    params: dict[str, np.ndarray]
    x: np.ndarray
    extra: np.ndarray | None
    lstm_steps: list = field(default_factory=list)
    layer_io: list = field(default_factory=list)
    used: bool = False


def forward(spec: NetSpec, params: Params, x, extra=None) -> tuple[np.ndarray, Cache]:
    """Evaluate the network on a batch of input windows."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != spec.input_size or x.shape[1] < 1:
        raise ValueError(f"input must be (batch, time>=1, {spec.input_size}), got {x.shape}")
    batch = x.shape[0]
    if spec.extra_size:
        if extra is None:
            raise ValueError(f"network expects an extra input of width {spec.extra_size}")
        extra = np.asarray(extra, dtype=float)
        if extra.shape != (batch, spec.extra_size):
            raise ValueError(f"extra input must be ({batch}, {spec.extra_size}), got {extra.shape}")
    elif extra is not None:
        raise ValueError("network takes no extra input")

    cache = Cache(params=dict(params), x=x, extra=extra)
    if spec.lstm is not None:
        H = spec.lstm
        W, b = params["lstm.W"], params["lstm.b"]
        h = np.zeros((batch, H))
        c = np.zeros((batch, H))
        for t in range(x.shape[1]):
            X = np.concatenate([x[:, t, :], h], axis=1)
            a = X @ W + b
            gates = sigmoid(a[:, : 3 * H])
            i, f, o = gates[:, :H], gates[:, H : 2 * H], gates[:, 2 * H :]
            g = np.tanh(a[:, 3 * H :])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            cache.lstm_steps.append((X, i, f, o, g, c_prev, tc))
        feat = h
    else:
        feat = x[:, -1, :]
    if extra is not None:
        feat = np.concatenate([feat, extra], axis=1)

    act = spec.activation
    layers = [f"dense{k}" for k in range(len(spec.dense))] + ["out"]
    a = feat
    for name in layers:
        fn = _ACTIVATIONS[spec.out_activation if name == "out" else act][0]
        z = a @ params[f"{name}.W"] + params[f"{name}.b"]
        out = fn(z)
        cache.layer_io.append((name, a, z, out))
        a = out
    return a, cache


def backward(spec: NetSpec, params: Params, cache: Cache, dy,
             param_grads: bool = True) -> tuple[Params, np.ndarray, np.ndarray | None]:
    """Gradients of ``sum(dy * y)`` for the forward pass recorded in ``cache``.

    Returns ``(grads, dx, dextra)``; ``grads`` is empty when ``param_grads`` is false.
    """
    if cache.used:
        raise StaleCacheError("cache already consumed by a backward pass")
    if cache.params.keys() != params.keys() or any(cache.params[k] is not params[k] for k in params):
        raise StaleCacheError("parameters changed since the forward pass")
    cache.used = True
    dy = np.asarray(dy, dtype=float)
    grads: Params = {}

    grad = dy
    for name, a_in, z, out in reversed(cache.layer_io):
        dfn = _ACTIVATIONS[spec.out_activation if name == "out" else spec.activation][1]
        dz = grad * dfn(out, z)
        if param_grads:
            grads[f"{name}.W"] = a_in.T @ dz
            grads[f"{name}.b"] = dz.sum(axis=0)
        grad = dz @ params[f"{name}.W"].T

    dextra = None
    if spec.extra_size:
        dextra = grad[:, -spec.extra_size :]
        grad = grad[:, : -spec.extra_size]

    x = cache.x
    dx = np.zeros_like(x)
    if spec.lstm is None:
        dx[:, -1, :] = grad
        return grads, dx, dextra

    H, F = spec.lstm, spec.input_size
    W = params["lstm.W"]
    dW = np.zeros_like(W)
    db = np.zeros(4 * H)
    dh = grad
    dc = np.zeros_like(dh)
    for t in range(x.shape[1] - 1, -1, -1):
        X, i, f, o, g, c_prev, tc = cache.lstm_steps[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        da = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)], axis=1
        )
        if param_grads:
            dW += X.T @ da
            db += da.sum(axis=0)
        dX = da @ W.T
        dx[:, t, :] = dX[:, :F]
        dh = dX[:, F:]
        dc = dc * f
    if param_grads:
        grads["lstm.W"] = dW
        grads["lstm.b"] = db
    return grads, dx, dextra


class Network:
    """Parameters plus spec, with convenience wrappers around forward/backward."""

    def __init__(self, spec: NetSpec, params: Params | None = None, rng: np.random.Generator | None = None):
        self.spec = spec
        if params is None:
            params = init_params(spec, rng if rng is not None else np.random.default_rng(0))
        shapes = spec.layer_shapes()
        if params.keys() != shapes.keys() or any(params[k].shape != shapes[k] for k in shapes):
            raise ValueError("parameter shapes do not match the network spec")
        self.params = {k: np.asarray(params[k], dtype=float) for k in shapes}

    def __call__(self, x, extra=None) -> np.ndarray:
        return forward(self.spec, self.params, x, extra)[0]

    def forward(self, x, extra=None):
        return forward(self.spec, self.params, x, extra)

    def backward(self, cache: Cache, dy, param_grads: bool = True):
        return backward(self.spec, self.params, cache, dy, param_grads)

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()})

    def num_params(self) -> int:
        return self.spec.num_params()


def soft_update(target: Network, online: Network, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target`` elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    for k, v in online.params.items():
        if tau == 1.0:
            target.params[k] = v.copy()
        else:
            target.params[k] = tau * v + (1.0 - tau) * target.params[k]


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, net: Network, grads: Params) -> None:
        net.params = {k: p - self.lr * grads[k] for k, p in net.params.items()}


class Adam:
    """Adam with bias correction; replaces parameter arrays rather than mutating them."""

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, max_grad_norm: float | None = None):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, net: Network, grads: Params) -> None:
        if grads.keys() != net.params.keys():
            raise ValueError("gradient buffer does not match parameters")
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > self.max_grad_norm:
                grads = {k: g * (self.max_grad_norm / norm) for k, g in grads.items()}
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        new = {}
        for k, p in net.params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {k}")
            m = self.b1 * self.m.get(k, 0.0) + (1.0 - self.b1) * g
            v = self.b2 * self.v.get(k, 0.0) + (1.0 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            new[k] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        net.params = new

    def state_dict(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}
