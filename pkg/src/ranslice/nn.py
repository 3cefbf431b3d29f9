"""Small float64 neural-network toolkit: dense layers, an LSTM with BPTT, MSE, Adam.

Layers cache what they need on ``forward`` and accumulate parameter
gradients on ``backward``. Arrays are batch-first: dense inputs are
``(B, in)``, LSTM inputs ``(B, Z, in)``.
"""
from __future__ import annotations

import json

import numpy as np


class ShapeError(ValueError):
    pass


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Dense:
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation: str = "linear", rng=None):
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.W = _uniform(rng, n_in, (n_out, n_in))
        self.b = _uniform(rng, n_in, (n_out,))
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = self._z = None

    def config(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out, "activation": self.activation}

    @property
    def params(self):
        return [self.W, self.b]

    @property
    def grads(self):
        return [self.dW, self.db]

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense expects {self.n_in} features, got {x.shape[-1]}")
        self._x = x
        z = x @ self.W.T + self.b
        self._z = z
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def backward(self, grad):
        if self.activation == "relu":
            grad = grad * (self._z > 0)
        self.dW += grad.T @ self._x
        self.db += grad.sum(axis=0)
        return grad @ self.W


class LSTM:
    """Single-layer LSTM returning the final hidden state; gate order i, f, o, g."""

    kind = "lstm"

    def __init__(self, n_in: int, hidden: int, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.hidden = n_in, hidden
        fan = n_in + hidden
        self.Wx = _uniform(rng, fan, (n_in, 4 * hidden))
        self.Wh = _uniform(rng, fan, (hidden, 4 * hidden))
        self.b = _uniform(rng, fan, (4 * hidden,))
        self.dWx = np.zeros_like(self.Wx)
        self.dWh = np.zeros_like(self.Wh)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def config(self):
        return {"kind": self.kind, "n_in": self.n_in, "hidden": self.hidden}

    @property
    def params(self):
        return [self.Wx, self.Wh, self.b]

    @property
    def grads(self):
        return [self.dWx, self.dWh, self.db]

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != self.n_in:
            raise ShapeError(f"lstm expects (B, Z, {self.n_in}), got {x.shape}")
        B, Z, _ = x.shape
        H = self.hidden
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        steps = []
        for t in range(Z):
            z = x[:, t, :] @ self.Wx + h @ self.Wh + self.b
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            o = sigmoid(z[:, 2 * H:3 * H])
            g = np.tanh(z[:, 3 * H:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            steps.append((x[:, t, :], h_prev, c_prev, i, f, o, g, tc))
        self._cache = steps
        return h

    def backward(self, grad):
        H = self.hidden
        steps = self._cache
        B = grad.shape[0]
        dx = np.zeros((B, len(steps), self.n_in))
        dh = grad
        dc = np.zeros((B, H))
        for t in range(len(steps) - 1, -1, -1):
            xt, h_prev, c_prev, i, f, o, g, tc = steps[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=1)
            self.dWx += xt.T @ dz
            self.dWh += h_prev.T @ dz
            self.db += dz.sum(axis=0)
            dx[:, t, :] = dz @ self.Wx.T
            dh = dz @ self.Wh.T
            dc = dc * f
        return dx


class Network:
    """A stack of layers applied in order."""

    def __init__(self, layers):
        self.layers = list(layers)

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def zero_grad(self):
        for g in self.grads:
            g[...] = 0.0

    def backward(self, grad_out):
        """Backpropagate ``grad_out`` (dLoss/dOutput); returns fresh parameter gradients."""
        self.zero_grad()
        g = np.asarray(grad_out, dtype=float)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return [gr.copy() for gr in self.grads]

    def copy_from(self, other: "Network"):
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def clone(self) -> "Network":
        net = build([layer.config() for layer in self.layers])
        net.copy_from(self)
        return net

    def save(self, path):
        arrays = {f"p{i}": p for i, p in enumerate(self.params)}
        manifest = json.dumps({"layers": [layer.config() for layer in self.layers],
                               "shapes": [list(p.shape) for p in self.params]})
        np.savez(path, manifest=np.array(manifest), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            manifest = json.loads(str(data["manifest"]))
            net = build(manifest["layers"])
            for i, p in enumerate(net.params):
                arr = data[f"p{i}"]
                if list(arr.shape) != manifest["shapes"][i]:
                    raise ShapeError("parameter dump does not match its manifest")
                p[...] = arr
        return net


def build(configs, rng=None) -> Network:
    layers = []
    for cfg in configs:
        if cfg["kind"] == "dense":
            layers.append(Dense(cfg["n_in"], cfg["n_out"], cfg.get("activation", "linear"), rng))
        elif cfg["kind"] == "lstm":
            layers.append(LSTM(cfg["n_in"], cfg["hidden"], rng))
        else:
            raise ValueError(f"unknown layer kind {cfg['kind']!r}")
    return Network(layers)


def mlp(sizes, rng=None) -> Network:
    """ReLU hidden layers with a linear output layer."""
    layers = [Dense(a, b, "relu" if i < len(sizes) - 2 else "linear", rng)
              for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]
    return Network(layers)


def lstm_regressor(n_in: int, hidden: int, n_out: int, rng=None) -> Network:
    return Network([LSTM(n_in, hidden, rng), Dense(hidden, n_out, "linear", rng)])


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    pred = np.asarray(pred, dtype=float)
    return 2.0 * (pred - np.asarray(target, dtype=float)) / pred.size


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        if len(params) != len(self.m) or any(p.shape != m.shape for p, m in zip(params, self.m)):
            raise ShapeError("optimizer state does not match parameters")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}


def step(optimizer: Adam, params, grads):
    return optimizer.step(params, grads)
