"""Shared-policy deep Q-learning engine, implemented directly on numpy.

A single two-hidden-layer tanh network maps each agent's 14-entry
observation to Q-values for {inactive, active}. All agents share the same
parameters; experiences are replayed one whole scheduling interval at a
time so that simultaneous transitions stay together in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import OBS_DIM, OBS_LAYOUT_VERSION, normalization_constants

HIDDEN_UNITS = 128
NUM_ACTIONS = 2
PARAM_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")

MODEL_FORMAT_HEADER = "linksched-policy v1"


class DivergenceError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


class ModelFormatError(ValueError):
    """Raised when a policy file cannot be parsed."""


class ObservationLayoutError(ValueError):
    """Raised when a policy was trained against a different observation layout."""


@dataclass
class EpsilonSchedule:
    """Exploration schedule over the global episode counter.

    Fully random through the pre-training episodes, then linear decay to
    ``final_epsilon`` across ``decay_episodes``, constant afterwards.
    """

    pretrain_episodes: int = 100
    decay_episodes: int = 50
    final_epsilon: float = 0.01

    def value(self, episode_index: int) -> float:
        if episode_index < 0:
            raise ValueError("episode_index must be >= 0")
        if episode_index < self.pretrain_episodes:
            return 1.0
        progress = (episode_index - self.pretrain_episodes) / self.decay_episodes
        eps = 1.0 + min(progress, 1.0) * (self.final_epsilon - 1.0)
        return max(self.final_epsilon, eps)


class QNetwork:
    """14 -> 128 -> 128 -> 2 tanh network with hand-written gradients."""

    def __init__(self, params: dict[str, np.ndarray], metadata: dict | None = None):
        for key in PARAM_KEYS:
            if key not in params:
                raise ValueError(f"missing parameter {key}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_KEYS}
        expected = {
            "w1": (HIDDEN_UNITS, OBS_DIM),
            "b1": (HIDDEN_UNITS,),
            "w2": (HIDDEN_UNITS, HIDDEN_UNITS),
            "b2": (HIDDEN_UNITS,),
            "w3": (NUM_ACTIONS, HIDDEN_UNITS),
            "b3": (NUM_ACTIONS,),
        }
        for key, shape in expected.items():
            if self.params[key].shape != shape:
                raise ValueError(f"parameter {key} has shape {self.params[key].shape}, expected {shape}")
        self.metadata = dict(metadata or {})
        self.metadata.setdefault("obs_layout", OBS_LAYOUT_VERSION)
        self.metadata.setdefault("normalization", normalization_constants())
        self.metadata.setdefault("train_steps", 0)

    @classmethod
    def initialize(cls, rng: np.random.Generator) -> "QNetwork":
        """Glorot-uniform weights, zero biases."""

        def glorot(fan_out, fan_in):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_out, fan_in))

        params = {
            "w1": glorot(HIDDEN_UNITS, OBS_DIM),
            "b1": np.zeros(HIDDEN_UNITS),
            "w2": glorot(HIDDEN_UNITS, HIDDEN_UNITS),
            "b2": np.zeros(HIDDEN_UNITS),
            "w3": glorot(NUM_ACTIONS, HIDDEN_UNITS),
            "b3": np.zeros(NUM_ACTIONS),
        }
        return cls(params)

    def copy(self) -> "QNetwork":
        return QNetwork({k: v.copy() for k, v in self.params.items()}, dict(self.metadata))

    def forward(self, obs: np.ndarray) -> np.ndarray:
        """Q-values; accepts (14,) or (B, 14), returns matching (2,)/(B, 2)."""
        obs = np.asarray(obs, dtype=np.float64)
        single = obs.ndim == 1
        x = obs[None, :] if single else obs
        if x.shape[-1] != OBS_DIM:
            raise ValueError(f"observation length {x.shape[-1]} != {OBS_DIM}")
        p = self.params
        a1 = np.tanh(x @ p["w1"].T + p["b1"])
        a2 = np.tanh(a1 @ p["w2"].T + p["b2"])
        q = a2 @ p["w3"].T + p["b3"]
        return q[0] if single else q

    def _forward_cached(self, x: np.ndarray):
        p = self.params
        a1 = np.tanh(x @ p["w1"].T + p["b1"])
        a2 = np.tanh(a1 @ p["w2"].T + p["b2"])
        q = a2 @ p["w3"].T + p["b3"]
        return a1, a2, q

    def backward(
        self, obs: np.ndarray, actions: np.ndarray, dloss_dq_taken: np.ndarray
    ) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given d(loss)/d(Q of the taken action)."""
        x = np.asarray(obs, dtype=np.float64)
        a1, a2, _ = self._forward_cached(x)
        batch = len(x)
        p = self.params
        dq = np.zeros((batch, NUM_ACTIONS))
        dq[np.arange(batch), actions] = dloss_dq_taken
        grads = {
            "w3": dq.T @ a2,
            "b3": dq.sum(axis=0),
        }
        da2 = dq @ p["w3"]
        dz2 = da2 * (1.0 - a2 * a2)
        grads["w2"] = dz2.T @ a1
        grads["b2"] = dz2.sum(axis=0)
        da1 = dz2 @ p["w2"]
        dz1 = da1 * (1.0 - a1 * a1)
        grads["w1"] = dz1.T @ x
        grads["b1"] = dz1.sum(axis=0)
        return grads

    def greedy_actions(self, obs: np.ndarray) -> np.ndarray:
        """Argmax actions with ties resolved toward transmitting."""
        q = self.forward(np.atleast_2d(np.asarray(obs, dtype=np.float64)))
        return (q[:, 1] >= q[:, 0]).astype(int)

    def act(self, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
        """Epsilon-greedy actions for a batch of per-agent observations."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        n = len(obs)
        if epsilon >= 1.0:
            return rng.integers(0, NUM_ACTIONS, size=n)
        actions = self.greedy_actions(obs)
        if epsilon > 0.0:
            explore = rng.random(n) < epsilon
            if explore.any():
                actions = np.where(explore, rng.integers(0, NUM_ACTIONS, size=n), actions)
        return actions


@dataclass
class TransitionSlot:
    """All agents' simultaneous transitions for one scheduling interval."""

    interval: int
    obs: np.ndarray  # (N, 14)
    actions: np.ndarray  # (N,)
    rewards: np.ndarray  # (N,)
    next_obs: np.ndarray  # (N, 14)


class ReplayBuffer:
    """Fixed-capacity ring of TransitionSlots, oldest evicted first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._slots: list[TransitionSlot] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._slots)

    def push(self, slot: TransitionSlot) -> None:
        if len(self._slots) < self.capacity:
            self._slots.append(slot)
        else:
            self._slots[self._cursor] = slot
            self._cursor = (self._cursor + 1) % self.capacity

    def slots(self) -> list[TransitionSlot]:
        # oldest-first view of the ring
        return self._slots[self._cursor :] + self._slots[: self._cursor]

    def sample_slots(self, batch_slots: int, rng: np.random.Generator) -> list[TransitionSlot]:
        """Concurrent sampling: whole intervals, uniform with replacement."""
        if not self._slots:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self._slots), size=batch_slots)
        return [self._slots[i] for i in idx]


def huber_value_and_slope(error: np.ndarray, delta: float = 1.0):
    """Huber loss and its derivative with respect to the error."""
    abs_err = np.abs(error)
    quadratic = abs_err <= delta
    value = np.where(quadratic, 0.5 * error * error, delta * (abs_err - 0.5 * delta))
    slope = np.where(quadratic, error, delta * np.sign(error))
    return value, slope


def double_dqn_targets(
    main: QNetwork,
    target: QNetwork,
    rewards: np.ndarray,
    next_obs: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Bootstrap targets: the main net picks the action, the target net rates it.

    Episodes here are truncations of an endless scheduling process, so the
    bootstrap term is never masked out.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    q_main = main.forward(next_obs)
    best = np.argmax(q_main, axis=1)
    q_target = target.forward(next_obs)
    return rewards + gamma * q_target[np.arange(len(best)), best]


class AdamOptimizer:
    """Adaptive-moment gradient descent over the network's parameter dict."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if not self.m:
            self.m = {k: np.zeros_like(v) for k, v in params.items()}
            self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for key, grad in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            params[key] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass
class TrainerConfig:
    gamma: float = 0.9
    learning_rate: float = 1e-3
    batch_slots: int = 64
    huber_delta: float = 1.0
    target_sync_every_updates: int = 100


class DqnTrainer:
    """Owns the main/target pair, the optimizer, and the update cadence."""

    def __init__(self, net: QNetwork, cfg: TrainerConfig | None = None):
        self.cfg = cfg or TrainerConfig()
        self.main = net
        self.target = net.copy()
        self.optimizer = AdamOptimizer(lr=self.cfg.learning_rate)
        self.updates = 0
        self.syncs = 0
        self.last_loss = float("nan")

    def train_step(self, slots: list[TransitionSlot]) -> float:
        """One gradient step on a batch of whole-interval transition slots."""
        if not slots:
            raise ValueError("train_step requires a non-empty batch")
        obs = np.concatenate([s.obs for s in slots], axis=0)
        actions = np.concatenate([s.actions for s in slots], axis=0).astype(int)
        rewards = np.concatenate([s.rewards for s in slots], axis=0)
        next_obs = np.concatenate([s.next_obs for s in slots], axis=0)

        with np.errstate(invalid="ignore"):  # divergence is reported, not warned
            targets = double_dqn_targets(self.main, self.target, rewards, next_obs, self.cfg.gamma)
            q = self.main.forward(obs)
            taken = q[np.arange(len(actions)), actions]
            value, slope = huber_value_and_slope(taken - targets, self.cfg.huber_delta)
        loss = float(value.mean())
        if not np.isfinite(loss):
            raise DivergenceError(
                f"non-finite loss {loss!r} at update {self.updates} "
                f"(batch of {len(actions)} transitions)"
            )
        grads = self.main.backward(obs, actions, slope / len(actions))
        self.optimizer.step(self.main.params, grads)
        self.updates += 1
        self.main.metadata["train_steps"] = self.updates
        self.last_loss = loss
        if self.updates % self.cfg.target_sync_every_updates == 0:
            self.sync_target()
        return loss

    def sync_target(self) -> None:
        self.target = self.main.copy()
        self.syncs += 1


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def save_policy(net: QNetwork, path) -> None:
    """Write the policy as versioned structured text (exact float64 round trip)."""
    meta = net.metadata
    norm = meta.get("normalization", normalization_constants())
    lines = [
        MODEL_FORMAT_HEADER,
        f"obs_layout {meta.get('obs_layout', OBS_LAYOUT_VERSION)}",
        f"layers {OBS_DIM} {HIDDEN_UNITS} {HIDDEN_UNITS} {NUM_ACTIONS}",
        "activation tanh",
        f"sinr_clip_db {_format_float(norm['sinr_clip_db'][0])} {_format_float(norm['sinr_clip_db'][1])}",
        f"log_weight_clip {_format_float(norm['log_weight_clip'][0])} {_format_float(norm['log_weight_clip'][1])}",
        f"weight_scale {_format_float(norm['weight_scale'])}",
        f"train_steps {int(meta.get('train_steps', 0))}",
        f"epoch {int(meta.get('epoch', 0))}",
        f"best_score {_format_float(meta.get('best_score', 0.0))}",
    ]
    for key in PARAM_KEYS:
        arr = net.params[key]
        shape = " ".join(str(s) for s in arr.shape)
        lines.append(f"param {key} {shape}")
        rows = arr if arr.ndim == 2 else arr[None, :]
        for row in rows:
            lines.append(" ".join(_format_float(v) for v in row))
    lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_policy(path, expected_layout: str = OBS_LAYOUT_VERSION) -> QNetwork:
    """Parse a saved policy; refuses other observation layouts."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.rstrip("\n") for line in fh]
    pos = 0

    def next_line() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise ModelFormatError(f"{path}: truncated policy file")
        line = lines[pos]
        pos += 1
        return line

    if next_line() != MODEL_FORMAT_HEADER:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT_HEADER!r} file")
    meta: dict = {}
    header_fields = {}
    for _ in range(9):
        key, _, value = next_line().partition(" ")
        header_fields[key] = value
    try:
        layout = header_fields["obs_layout"]
        layers = tuple(int(v) for v in header_fields["layers"].split())
        sinr_clip = tuple(float(v) for v in header_fields["sinr_clip_db"].split())
        logw_clip = tuple(float(v) for v in header_fields["log_weight_clip"].split())
        weight_scale = float(header_fields["weight_scale"])
        meta["train_steps"] = int(header_fields["train_steps"])
        meta["epoch"] = int(header_fields["epoch"])
        meta["best_score"] = float(header_fields["best_score"])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed header ({exc})") from exc
    if layout != expected_layout:
        raise ObservationLayoutError(
            f"{path}: policy uses observation layout {layout!r}, "
            f"this engine expects {expected_layout!r}"
        )
    if layers != (OBS_DIM, HIDDEN_UNITS, HIDDEN_UNITS, NUM_ACTIONS):
        raise ModelFormatError(f"{path}: unsupported layer sizes {layers}")
    meta["obs_layout"] = layout
    meta["normalization"] = {
        "sinr_clip_db": sinr_clip,
        "log_weight_clip": logw_clip,
        "weight_scale": weight_scale,
    }

    params: dict[str, np.ndarray] = {}
    for key in PARAM_KEYS:
        tokens = next_line().split()
        if len(tokens) < 3 or tokens[0] != "param" or tokens[1] != key:
            raise ModelFormatError(f"{path}: expected 'param {key} ...', got {tokens!r}")
        shape = tuple(int(v) for v in tokens[2:])
        rows = shape[0] if len(shape) == 2 else 1
        cols = shape[-1]
        data = np.empty((rows, cols))
        for r in range(rows):
            values = next_line().split()
            if len(values) != cols:
                raise ModelFormatError(f"{path}: row of {key} has {len(values)} values, expected {cols}")
            try:
                data[r] = [float(v) for v in values]
            except ValueError as exc:
                raise ModelFormatError(f"{path}: bad number in {key} ({exc})") from exc
        params[key] = data.reshape(shape)
    if next_line() != "end":
        raise ModelFormatError(f"{path}: missing end marker")
    if not all(np.all(np.isfinite(p)) for p in params.values()):
        raise ModelFormatError(f"{path}: non-finite parameter values")
    return QNetwork(params, meta)
