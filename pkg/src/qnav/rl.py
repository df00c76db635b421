"""Double DQN training for the navigation worlds.

One environment step equals one training step: after warm-up, every
environment step is followed by one mini-batch update of the online
network.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from qnav import env, nn, pqc

log = logging.getLogger(__name__)


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO store; the oldest transition is overwritten first."""

    def __init__(self, capacity: int = 20_000, state_dim: int = 3):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, t: Transition) -> None:
        i = self._next
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.terminals[i] = t.terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [self._get(i) for i in self._order()]

    def _get(self, i) -> Transition:
        return Transition(
            self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
            self.next_states[i].copy(), bool(self.terminals[i]),
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> "Batch":
        """Uniform sample with replacement."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(
            self.states[idx], self.actions[idx], self.rewards[idx],
            self.next_states[idx], self.terminals[idx],
        )


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    @classmethod
    def from_transitions(cls, ts) -> "Batch":
        return cls(
            np.array([t.state for t in ts], dtype=np.float64),
            np.array([t.action for t in ts], dtype=np.int64),
            np.array([t.reward for t in ts], dtype=np.float64),
            np.array([t.next_state for t in ts], dtype=np.float64),
            np.array([t.terminal for t in ts], dtype=bool),
        )


# --- function approximators -------------------------------------------------

class MlpQ:
    family = "DDQN_MLP"

    def __init__(self, arch: nn.MlpArch, lr: float = 0.001):
        self.arch = arch
        self.lr = lr

    def init_params(self, rng) -> nn.MlpParams:
        return nn.init_mlp(self.arch, rng)

    def lrs(self) -> dict[str, float]:
        return {k: self.lr for pair in nn.LAYER_NAMES for k in pair}

    def q_batch(self, params, states) -> np.ndarray:
        return nn.mlp_forward(np.atleast_2d(states), params, self.arch)

    def q_and_grads(self, params, states, upstream):
        return nn.mlp_forward_backward(np.atleast_2d(states), params, self.arch, upstream)

    def param_count(self) -> int:
        return nn.mlp_param_count(self.arch)

    def describe(self) -> dict:
        return {"family": self.family, "hidden": list(self.arch.hidden)}


class PqcQ:
    def __init__(self, spec: pqc.CircuitSpec, lr_variational: float = 0.001, lr_scaling: float = 0.01):
        self.spec = spec
        self.lr_variational = lr_variational
        self.lr_scaling = lr_scaling

    @property
    def family(self) -> str:
        return "PQC_SINGLE" if self.spec.encoding is pqc.Encoding.SINGLE else "PQC_TRIPLE"

    def init_params(self, rng) -> pqc.ParameterSet:
        return pqc.init_params(self.spec, rng)

    def lrs(self) -> dict[str, float]:
        return {"theta": self.lr_variational, "xi": self.lr_scaling, "w": self.lr_scaling}

    def q_batch(self, params, states) -> np.ndarray:
        return pqc.q_values_batch(states, params, self.spec)

    def q_and_grads(self, params, states, upstream):
        return pqc.q_vjp_batch(states, params, self.spec, upstream)

    def param_count(self) -> int:
        return pqc.param_count(self.spec)

    def describe(self) -> dict:
        return {"family": self.family, "layers": self.spec.layers}


# --- DDQN pieces --------------------------------------------------------------

@dataclass
class TrainingConfig:
    gamma: float = 0.99
    batch_size: int = 64
    max_steps: int = 50_000
    eval_interval: int = 100
    eval_episodes: int = 10
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_steps: int = 40_000
    target_sync_interval: int = 500
    warmup_transitions: int = 1_000
    buffer_capacity: int = 20_000
    max_episode_steps: int = env.MAX_EPISODE_STEPS
    lr_variational: float = 0.001
    lr_scaling: float = 0.01
    lr_classical: float = 0.001
    success_threshold: float | None = None
    seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if not 0.0 < self.gamma < 1.0:
            problems.append("gamma must lie in (0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            problems.append("need 0 <= epsilon_end <= epsilon_start <= 1")
        for name in ("batch_size", "eval_interval", "eval_episodes", "target_sync_interval",
                     "buffer_capacity", "epsilon_decay_steps"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.max_steps < 0 or self.warmup_transitions < 0:
            problems.append("max_steps and warmup_transitions must be >= 0")
        if not 1 <= self.max_episode_steps <= env.MAX_EPISODE_STEPS:
            problems.append(f"max_episode_steps must be in [1, {env.MAX_EPISODE_STEPS}]")
        for name in ("lr_variational", "lr_scaling", "lr_classical"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        return problems

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def epsilon_at(step: int, config: TrainingConfig) -> float:
    """Linear decay from ``epsilon_start`` to ``epsilon_end`` over ``epsilon_decay_steps``."""
    frac = min(1.0, step / config.epsilon_decay_steps)
    return max(config.epsilon_end, config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start))


def select_action(q, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; ties in the greedy branch go to the lowest index.

    Exactly one uniform draw is consumed per call, plus one integer draw on
    the random branch, so the random stream stays aligned across runs.
    """
    q = np.asarray(q)
    if q.size == 0:
        raise ValueError("empty Q-value vector")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def ddqn_targets(batch: Batch, online_q: Callable, target_q: Callable, gamma: float) -> np.ndarray:
    """``r + gamma * Q_target(s', argmax_a Q_online(s', a))``, bootstrap dropped when terminal."""
    if len(batch.rewards) == 0:
        raise ValueError("empty batch")
    next_online = online_q(batch.next_states)
    next_target = target_q(batch.next_states)
    best = np.argmax(next_online, axis=1)
    bootstrap = next_target[np.arange(len(best)), best]
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, bootstrap)


def batch_loss_and_grads(model, online, target, batch: Batch, gamma: float):
    y = ddqn_targets(
        batch,
        lambda s: model.q_batch(online, s),
        lambda s: model.q_batch(target, s),
        gamma,
    )
    n = len(y)
    rows = np.arange(n)
    # the upstream depends on Q(s, a), so it takes a forward pass before the VJP
    q = model.q_batch(online, batch.states)
    td = y - q[rows, batch.actions]
    upstream = np.zeros_like(q)
    upstream[rows, batch.actions] = -2.0 * td / n
    _, grads = model.q_and_grads(online, batch.states, upstream)
    return float(np.mean(td * td)), grads


def train_step(buffer: ReplayBuffer, model, online, target, opt_state: nn.OptimizerState,
               config: TrainingConfig, rng: np.random.Generator) -> float:
    """Sample a mini-batch, take one optimizer step on ``online``; returns the batch loss."""
    need = max(config.batch_size, config.warmup_transitions)
    if len(buffer) < need:
        raise ValueError(f"buffer holds {len(buffer)} transitions, need {need}")
    batch = buffer.sample(config.batch_size, rng)
    loss, grads = batch_loss_and_grads(model, online, target, batch, config.gamma)
    if not math.isfinite(loss):
        raise nn.NonFiniteGradientError(f"non-finite loss {loss}")
    nn.optimizer_step(online.arrays(), grads.arrays(), opt_state)
    return loss


def sync_target(online, target):
    """Copy online values into the target's arrays in place and return the target."""
    for k, v in online.arrays().items():
        target.arrays()[k][...] = v
    return target


def greedy_episode(q_fn: Callable, world: env.WorldSpec, max_steps: int = env.MAX_EPISODE_STEPS,
                   cache: dict | None = None) -> tuple[float, list[env.StepResult]]:
    """One epsilon=0 episode from the start pose.

    ``cache`` memoizes (pose, step) -> result; the world and the greedy
    policy are deterministic, so this only removes repeated work.
    """
    if cache is None:
        cache = {}
    pose = env.reset(world)
    total = 0.0
    results = []
    for i in range(1, max_steps + 1):
        key = (pose, i)
        res = cache.get(key)
        if res is None:
            a = int(np.argmax(q_fn(pose.features())))
            res = env.step(world, pose, a, i)
            if i == max_steps and not res.terminal:
                res = env.StepResult(res.pose, res.reward, True, env.Event.TIMEOUT)
            cache[key] = res
        results.append(res)
        total += res.reward
        pose = res.pose
        if res.terminal:
            break
    return total, results


def evaluate(q_fn: Callable, world: env.WorldSpec, episodes: int = 10,
             max_steps: int = env.MAX_EPISODE_STEPS) -> float:
    """Mean total reward over ``episodes`` greedy episodes."""
    cache: dict = {}
    totals = [greedy_episode(q_fn, world, max_steps, cache)[0] for _ in range(episodes)]
    return float(np.mean(totals))


class EvalEntry(NamedTuple):
    train_step: int
    mean_eval_reward: float
    epsilon: float


@dataclass
class TrainingRecord:
    model: dict
    world: str
    seed: int
    param_count: int
    log: list[EvalEntry] = field(default_factory=list)
    status: str = "exhausted"  # "solved", "exhausted" or "failed"
    solved_step: int | None = None
    steps_run: int = 0
    episodes: int = 0
    diagnostic: str = ""
    duration_s: float = 0.0
    params: object = None

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    @property
    def final_reward(self) -> float:
        return self.log[-1].mean_eval_reward if self.log else float("-inf")


def _rng_streams(seed: int):
    init, explore, sample = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(explore),
            np.random.default_rng(sample))


def train(model, world: env.WorldSpec, config: TrainingConfig) -> TrainingRecord:
    problems = config.validate()
    if problems:
        raise ValueError("invalid training config: " + "; ".join(problems))
    threshold = world.success_threshold if config.success_threshold is None else config.success_threshold
    init_rng, explore_rng, sample_rng = _rng_streams(config.seed)
    online = model.init_params(init_rng)
    target = online.copy()
    opt = nn.adam_state(online.arrays(), model.lrs())
    buffer = ReplayBuffer(config.buffer_capacity, state_dim=3)
    record = TrainingRecord(model=model.describe(), world=world.name, seed=config.seed,
                            param_count=model.param_count())
    start_time = time.perf_counter()
    need = max(config.batch_size, config.warmup_transitions)

    pose = env.reset(world)
    ep_len = 0
    for t in range(config.max_steps):
        eps = epsilon_at(t, config)
        state = pose.features()
        a = select_action(model.q_batch(online, state[None, :])[0], eps, explore_rng)
        ep_len += 1
        res = env.step(world, pose, a, ep_len)
        terminal = res.terminal or ep_len >= config.max_episode_steps
        buffer.add(Transition(state, a, res.reward, res.next_state, terminal))
        pose = res.pose
        if terminal:
            record.episodes += 1
            pose = env.reset(world)
            ep_len = 0

        if len(buffer) >= need:
            try:
                train_step(buffer, model, online, target, opt, config, sample_rng)
            except FloatingPointError as exc:
                record.status = "failed"
                record.diagnostic = f"step {t + 1}: {exc}"
                record.steps_run = t + 1
                log.warning("run aborted: %s", record.diagnostic)
                break

        done = t + 1
        record.steps_run = done
        if done % config.target_sync_interval == 0:
            sync_target(online, target)
        if done % config.eval_interval == 0:
            q_fn = lambda s: model.q_batch(online, s[None, :])[0]  # noqa: E731
            mean = evaluate(q_fn, world, config.eval_episodes, config.max_episode_steps)
            record.log.append(EvalEntry(done, mean, epsilon_at(done, config)))
            if mean > threshold:
                record.status = "solved"
                record.solved_step = done
                break

    record.duration_s = time.perf_counter() - start_time
    record.params = online
    return record
