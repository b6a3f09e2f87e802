"""Dueling double DQN in plain numpy with momentum gradient descent.

All network weights live in one flat float64 vector so agents can ship
them by value and the federation layer can average them element-wise.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import NUM_ACTIONS, STATE_DIM


@dataclass(frozen=True)
class Layout:
    """Names and shapes of the parameter blocks inside the flat vector."""

    entries: tuple

    @classmethod
    def dueling(cls, state_dim: int = STATE_DIM, hidden: tuple = (32, 32),
                num_actions: int = NUM_ACTIONS) -> Layout:
        entries = []
        fan_in = state_dim
        for i, width in enumerate(hidden, start=1):
            entries += [(f"W{i}", (fan_in, width)), (f"b{i}", (width,))]
            fan_in = width
        entries += [("Wv", (fan_in, 1)), ("bv", (1,)),
                    ("Wa", (fan_in, num_actions)), ("ba", (num_actions,))]
        return cls(tuple(entries))

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.entries)

    @property
    def num_hidden(self) -> int:
        return sum(1 for name, _ in self.entries if name.startswith("W") and name[1:].isdigit())

    @property
    def num_actions(self) -> int:
        return dict(self.entries)["ba"][0]

    def unpack(self, flat: np.ndarray) -> dict:
        """Views (no copies) into ``flat`` keyed by block name."""
        if flat.shape != (self.size,):
            raise ValueError(f"flat vector has shape {flat.shape}, layout expects ({self.size},)")
        out, pos = {}, 0
        for name, shape in self.entries:
            n = int(np.prod(shape))
            out[name] = flat[pos:pos + n].reshape(shape)
            pos += n
        return out

    def pack(self, blocks: dict) -> np.ndarray:
        return np.concatenate([np.asarray(blocks[name], dtype=float).ravel()
                               for name, _ in self.entries])

    def to_json(self) -> list:
        return [[name, list(shape)] for name, shape in self.entries]

    @classmethod
    def from_json(cls, data) -> Layout:
        return cls(tuple((name, tuple(shape)) for name, shape in data))


DEFAULT_LAYOUT = Layout.dueling()


@dataclass(frozen=True)
class DrlHyper:
    learning_rate: float = 0.001
    gamma: float = 0.995
    momentum: float = 0.9
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.9995
    epsilon_min: float = 0.1
    target_period: int = 200
    batch_size: int = 32
    train_every: int = 50

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.epsilon_min <= self.epsilon_start <= 1:
            raise ValueError("need 0 < epsilon_min <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError(f"epsilon_decay must lie in (0, 1], got {self.epsilon_decay}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        for name in ("target_period", "batch_size", "train_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def init_params(rng: np.random.Generator, layout: Layout = DEFAULT_LAYOUT) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    flat = np.zeros(layout.size)
    for name, block in layout.unpack(flat).items():
        if name.startswith("W"):
            fan_in, fan_out = block.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            block[...] = rng.uniform(-bound, bound, size=block.shape)
    return flat


def _forward(params: np.ndarray, states: np.ndarray, layout: Layout):
    p = layout.unpack(params)
    hs = [states]
    h = states
    for i in range(1, layout.num_hidden + 1):
        h = np.tanh(h @ p[f"W{i}"] + p[f"b{i}"])
        hs.append(h)
    value = h @ p["Wv"] + p["bv"]
    adv = h @ p["Wa"] + p["ba"]
    q = value + adv - adv.mean(axis=-1, keepdims=True)
    return q, value, adv, hs


def forward(params: np.ndarray, states, layout: Layout = DEFAULT_LAYOUT) -> np.ndarray:
    """Q-values ``V(s) + A(s, a) - mean_a A(s, a)`` for one state or a batch."""
    s = np.asarray(states, dtype=float)
    q, *_ = _forward(params, np.atleast_2d(s), layout)
    return q[0] if s.ndim == 1 else q


def value_and_advantage(params: np.ndarray, states, layout: Layout = DEFAULT_LAYOUT):
    s = np.atleast_2d(np.asarray(states, dtype=float))
    _, value, adv, _ = _forward(params, s, layout)
    return value[:, 0], adv


def td_targets(rewards, next_states, online: np.ndarray, target: np.ndarray, gamma: float,
               layout: Layout = DEFAULT_LAYOUT) -> np.ndarray:
    """Double-DQN targets: the online net picks a', the target net scores it."""
    rewards = np.asarray(rewards, dtype=float)
    if gamma == 0.0:
        return rewards.copy()
    nxt = np.atleast_2d(np.asarray(next_states, dtype=float))
    best = np.argmax(forward(online, nxt, layout), axis=1)
    q_next = forward(target, nxt, layout)[np.arange(len(best)), best]
    return rewards + gamma * q_next


def loss_and_grad(states, actions, targets, params: np.ndarray, weights=None,
                  layout: Layout = DEFAULT_LAYOUT):
    """Importance-weighted squared TD error and its gradient.

    Returns ``(loss, grad, abs_td)``; the loss is the weighted sum over the
    batch divided by the batch size.
    """
    s = np.atleast_2d(np.asarray(states, dtype=float))
    a = np.asarray(actions, dtype=int)
    y = np.asarray(targets, dtype=float)
    b = len(a)
    w = np.ones(b) if weights is None else np.asarray(weights, dtype=float)

    q, _, _, hs = _forward(params, s, layout)
    rows = np.arange(b)
    td = y - q[rows, a]
    loss = float(np.sum(w * td ** 2) / b)

    p = layout.unpack(params)
    grad = np.zeros_like(params)
    g = layout.unpack(grad)
    dq = -2.0 * w * td / b  # dL/dQ(s_i, a_i)
    n_act = layout.num_actions
    d_adv = np.repeat((-dq / n_act)[:, None], n_act, axis=1)
    d_adv[rows, a] += dq
    h = hs[-1]
    g["Wv"][...] = h.T @ dq[:, None]
    g["bv"][...] = dq.sum()
    g["Wa"][...] = h.T @ d_adv
    g["ba"][...] = d_adv.sum(axis=0)
    dh = dq[:, None] @ p["Wv"].T + d_adv @ p["Wa"].T
    for i in range(layout.num_hidden, 0, -1):
        dz = dh * (1.0 - hs[i] ** 2)
        g[f"W{i}"][...] = hs[i - 1].T @ dz
        g[f"b{i}"][...] = dz.sum(axis=0)
        if i > 1:
            dh = dz @ p[f"W{i}"].T
    return loss, grad, np.abs(td)


def mgd_update(params: np.ndarray, momentum: np.ndarray, grad: np.ndarray, eta: float,
               lr: float) -> tuple:
    """``omega <- eta * omega + grad`` then ``theta <- theta - lr * omega``."""
    if not (params.shape == momentum.shape == grad.shape):
        raise ValueError(
            f"shape mismatch: params {params.shape}, momentum {momentum.shape}, grad {grad.shape}"
        )
    new_m = eta * momentum + grad
    return params - lr * new_m, new_m


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


def decay_epsilon(epsilon: float, hyper: DrlHyper) -> float:
    return max(hyper.epsilon_min, epsilon * hyper.epsilon_decay)


def target_sync_due(update_count: int, period: int) -> bool:
    return update_count > 0 and update_count % period == 0


def sync_target(params: np.ndarray) -> np.ndarray:
    return params.copy()


# ---- checkpoints ------------------------------------------------------------

_MAGIC = b"D3QNCKPT1\n"


def save_checkpoint(path, vectors: dict, layout: Layout = DEFAULT_LAYOUT, meta: dict | None = None) -> None:
    """Write named flat vectors as little-endian float64 behind a JSON header."""
    names = sorted(vectors)
    payload = b"".join(np.asarray(vectors[k], dtype="<f8").tobytes() for k in names)
    header = {
        "layout": layout.to_json(),
        "vectors": names,
        "size": layout.size,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)


def load_checkpoint(path) -> tuple:
    """Return ``(vectors, layout, meta)``; raises ``ValueError`` on corruption."""
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a D3QN checkpoint")
    rest = raw[len(_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    payload = rest[nl + 1:]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ValueError(f"{path}: checksum mismatch")
    layout = Layout.from_json(header["layout"])
    size = header["size"]
    if len(payload) != 8 * size * len(header["vectors"]):
        raise ValueError(f"{path}: payload length does not match header")
    flat = np.frombuffer(payload, dtype="<f8").astype(float)
    vectors = {name: flat[i * size:(i + 1) * size].copy()
               for i, name in enumerate(header["vectors"])}
    return vectors, layout, header["meta"]
