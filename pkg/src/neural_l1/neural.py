"""Feature network, replay buffer and batch training of the inner layers.

The network maps the 4-state error to a feature vector ``phi(x)``; the last
layer ``W`` lives outside the net and is adapted pointwise by the control loop.
"""
from __future__ import annotations

import math
import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyBuffer, InvalidParams, NonFinite
from .plant import STREAM_INIT, STREAM_TRAIN, philox

_ACT = {
    "tanh": (np.tanh, lambda h: 1.0 - h * h),
    "identity": (lambda z: z, lambda h: np.ones_like(h)),
}


@dataclass(frozen=True, eq=False)
class NeuralNet:
    weights: tuple
    biases: tuple
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACT:
            raise InvalidParams(f"unknown activation {self.activation!r}")
        ws = tuple(np.array(w, dtype=float) for w in self.weights)
        bs = tuple(np.array(b, dtype=float).reshape(-1) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise DimensionMismatch("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or w.shape[0] != b.size:
                raise DimensionMismatch(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i and w.shape[1] != ws[i - 1].shape[0]:
                raise DimensionMismatch(f"layer {i} input width mismatch")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "NeuralNet":
        return NeuralNet(tuple(params[0::2]), tuple(params[1::2]), self.activation)

    def digest(self) -> int:
        return hash(b"".join(p.tobytes() for p in self.params()))


def init_net(seed: int, input_dim: int = 4, hidden: Sequence[int] = (16, 16),
             activation: str = "tanh") -> NeuralNet:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialisation from the seeded stream."""
    rng = philox(seed, STREAM_INIT)
    ws, bs = [], []
    fan_in = input_dim
    for width in hidden:
        lim = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-lim, lim, (width, fan_in)))
        bs.append(rng.uniform(-lim, lim, width))
        fan_in = width
    return NeuralNet(tuple(ws), tuple(bs), activation)


def features(net: NeuralNet, x) -> np.ndarray:
    act = _ACT[net.activation][0]
    h = np.asarray(x, dtype=float)
    if h.shape != (net.input_dim,):
        raise DimensionMismatch(f"expected input of length {net.input_dim}")
    for w, b in zip(net.weights, net.biases):
        z = w @ h
        z += b
        h = act(z)
    if not math.isfinite(float(h.sum())):
        raise NonFinite("non-finite features")
    return h


def lipschitz_bound(net: NeuralNet) -> float:
    """Product of layer spectral norms (activations have slope <= 1)."""
    out = 1.0
    for w in net.weights:
        out *= float(np.linalg.norm(w, 2))
    return out


@dataclass(frozen=True, eq=False)
class LastLayer:
    W: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "LastLayer":
        return cls(np.zeros(k))


def estimate(net: NeuralNet, last: LastLayer, x) -> float:
    W = np.asarray(last.W, dtype=float)
    if W.shape != (net.feature_dim,):
        raise DimensionMismatch(f"W has shape {W.shape}, net has {net.feature_dim} features")
    return float(W @ features(net, x))


# --------------------------------------------------------------------------- replay buffer


class ReplayBuffer:
    """FIFO buffer of ``(x, label)`` pairs with capacity ``pmax``."""

    def __init__(self, capacity: int = 2000):
        if capacity < 1:
            raise InvalidParams("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def entries(self) -> list:
        return list(self._items)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._items:
            return np.zeros((0, 4)), np.zeros(0)
        X = np.array([x for x, _ in self._items])
        y = np.array([lab for _, lab in self._items])
        return X, y


def record(buffer: ReplayBuffer, x, label: float) -> ReplayBuffer:
    buffer._items.append((np.array(x, dtype=float), float(label)))
    return buffer


# --------------------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 32
    learning_rate: float = 0.05
    inner_update_period: int = 500
    epochs_per_update: int = 5
    grad_clip: float = 1.0
    pmax: int = 2000
    max_backtracks: int = 8

    def __post_init__(self):
        for name in ("batch_size", "learning_rate", "inner_update_period", "epochs_per_update",
                     "grad_clip", "pmax", "max_backtracks"):
            if not getattr(self, name) > 0:
                raise InvalidParams(f"{name} must be positive")


def batch_loss(net: NeuralNet, W, X, y) -> float:
    act = _ACT[net.activation][0]
    H = np.asarray(X, dtype=float)
    for w, b in zip(net.weights, net.biases):
        H = act(H @ w.T + b)
    r = H @ np.asarray(W, dtype=float) - y
    return float(np.mean(r * r))


def _grads_into(params, out, act, dact, W, X, y) -> float:
    """Backprop of the batch MSE; writes gradients into ``out`` (same layout as ``params``)."""
    L = len(params) // 2
    hs = [X]
    for i in range(L):
        z = hs[-1] @ params[2 * i].T
        z += params[2 * i + 1]
        hs.append(act(z))
    r = hs[-1] @ W - y
    n = X.shape[0]
    dh = np.multiply.outer(r * (2.0 / n), W)
    for i in range(L - 1, -1, -1):
        dz = dact(hs[i + 1])
        dz *= dh
        np.dot(dz.T, hs[i], out=out[2 * i])
        np.add.reduce(dz, axis=0, out=out[2 * i + 1])
        if i:
            dh = dz @ params[2 * i]
    return float(r @ r) / n


def _grads(params, activation, W, X, y):
    act, dact = _ACT[activation]
    grads = [np.empty_like(p) for p in params]
    loss = _grads_into(params, grads, act, dact, W, X, y)
    return loss, grads


def loss_and_grads(net: NeuralNet, W, X, y) -> tuple[float, list]:
    """Mean squared error of ``W' phi(x)`` against labels and its inner-layer gradient.

    Gradients are ordered like ``net.params()``: weight then bias per layer.
    """
    W = np.asarray(W, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    return _grads(net.params(), net.activation, W, X, y)


def _flat_views(flat, shapes):
    views, pos = [], 0
    for shp in shapes:
        size = int(np.prod(shp))
        views.append(flat[pos : pos + size].reshape(shp))
        pos += size
    return views


def _run_epochs(net, W, X, y, cfg: TrainerConfig, lr: float, seed: int, update_index: int):
    # parameters and gradients live in flat buffers so each step is one norm and one axpy
    shapes = [p.shape for p in net.params()]
    flat = np.concatenate([p.ravel() for p in net.params()])
    gflat = np.empty_like(flat)
    tmp = np.empty_like(flat)
    params = _flat_views(flat, shapes)
    grads = _flat_views(gflat, shapes)
    act, dact = _ACT[net.activation]
    rng = philox(seed, STREAM_TRAIN, update_index)
    n = X.shape[0]
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            _grads_into(params, grads, act, dact, W, X[idx], y[idx])
            gnorm = math.sqrt(float(gflat @ gflat))
            scale = lr if gnorm <= cfg.grad_clip else lr * cfg.grad_clip / gnorm
            np.multiply(gflat, scale, out=tmp)
            flat -= tmp
    return net.with_params([p.copy() for p in params])


def train_inner(net: NeuralNet, last: LastLayer, buffer: ReplayBuffer, cfg: TrainerConfig,
                seed: int = 0, update_index: int = 0) -> NeuralNet:
    """Mini-batch gradient descent on the inner layers with ``W`` frozen.

    If the buffer loss grows by more than 10% the step size is halved and the
    call restarts from the incoming weights; after ``max_backtracks`` failures
    the incoming net is returned unchanged.
    """
    X, y = buffer.arrays()
    if X.shape[0] == 0:
        raise EmptyBuffer("cannot train on an empty buffer")
    W = np.asarray(last.W, dtype=float)
    base = batch_loss(net, W, X, y)
    lr = cfg.learning_rate
    for _ in range(cfg.max_backtracks):
        cand = _run_epochs(net, W, X, y, cfg, lr, seed, update_index)
        new = batch_loss(cand, W, X, y)
        if np.isfinite(new) and new <= 1.1 * base + 1e-300:
            return cand
        lr *= 0.5
    return net


def _snapshot_buffer(buffer: ReplayBuffer) -> ReplayBuffer:
    snap = ReplayBuffer(buffer.capacity)
    snap._items.extend(buffer._items)
    return snap


class InnerTrainer:
    """Schedules inner-layer updates with snapshot-swap semantics.

    A job captures (net, W, buffer) at step ``k`` and its result replaces the
    control loop's net at step ``k + swap_delay``. ``mode='thread'`` trains on a
    worker thread; ``mode='inline'`` trains immediately. Both produce the same
    sequence of nets.
    """

    def __init__(self, cfg: TrainerConfig, seed: int = 0, mode: str = "inline", swap_delay: int = 1):
        if mode not in ("inline", "thread"):
            raise InvalidParams(f"unknown trainer mode {mode!r}")
        if swap_delay < 1:
            raise InvalidParams("swap_delay must be >= 1")
        self.cfg = cfg
        self.seed = seed
        self.mode = mode
        self.swap_delay = swap_delay
        self.updates = 0
        self._pending: tuple[int, Future | NeuralNet] | None = None
        self._pool: ThreadPoolExecutor | None = None
        self._lock = threading.Lock()

    def due(self, step: int) -> bool:
        return step > 0 and step % self.cfg.inner_update_period == 0 and self._pending is None

    def start(self, step: int, net: NeuralNet, last: LastLayer, buffer: ReplayBuffer) -> None:
        if len(buffer) == 0:
            return
        snap_buf = _snapshot_buffer(buffer)
        snap_last = LastLayer(np.array(last.W, dtype=float))
        idx = self.updates
        self.updates += 1
        swap_at = step + self.swap_delay
        if self.mode == "inline":
            result = train_inner(net, snap_last, snap_buf, self.cfg, self.seed, idx)
            self._pending = (swap_at, result)
        else:
            with self._lock:
                if self._pool is None:
                    self._pool = ThreadPoolExecutor(max_workers=1)
            fut = self._pool.submit(train_inner, net, snap_last, snap_buf, self.cfg, self.seed, idx)
            self._pending = (swap_at, fut)

    def swap(self, step: int, net: NeuralNet) -> NeuralNet:
        if self._pending is None or step < self._pending[0]:
            return net
        _, res = self._pending
        self._pending = None
        return res.result() if isinstance(res, Future) else res

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None


# --------------------------------------------------------------------------- checkpoints

_MAGIC = "neural-l1-net 1"


def dumps_net(net: NeuralNet) -> str:
    lines = [_MAGIC, f"activation {net.activation}", f"layers {len(net.weights)}"]
    for w, b in zip(net.weights, net.biases):
        lines.append(f"layer {w.shape[0]} {w.shape[1]}")
        lines.append(" ".join(float(v).hex() for v in w.reshape(-1)))
        lines.append(" ".join(float(v).hex() for v in b))
    return "\n".join(lines) + "\n"


def loads_net(text: str) -> NeuralNet:
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise InvalidParams("not a network checkpoint")
    act = lines[1].split()[1]
    n = int(lines[2].split()[1])
    ws, bs = [], []
    pos = 3
    for _ in range(n):
        _, rows, cols = lines[pos].split()
        rows, cols = int(rows), int(cols)
        w = np.array([float.fromhex(t) for t in lines[pos + 1].split()]).reshape(rows, cols)
        b = np.array([float.fromhex(t) for t in lines[pos + 2].split()])
        ws.append(w)
        bs.append(b)
        pos += 3
    return NeuralNet(tuple(ws), tuple(bs), act)


def save_net(net: NeuralNet, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_net(net))


def load_net(path) -> NeuralNet:
    with open(path, encoding="ascii") as fh:
        return loads_net(fh.read())
