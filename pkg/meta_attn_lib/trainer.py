from collections import deque
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import partial

import numpy as np

from .adam import AdamState, adam_step
from .attention import AttentionWindow, apply_attention_action
from .config import config
from .environment import (
    LayoutMode,
    apply_agent_move,
    optimal_episode_length,
    render,
    reset,
)
from .errors import ConfigurationError, ContractViolation
from .meta_controller import StepContext
from .oracle import GatingMode, act
from .utils import episode_rng


class BaselineKind(str, Enum):
    # mean of the last N episode returns
    EPISODE = 'episode'
    # mean of the last N step rewards
    STEP = 'step'


@dataclass
class Trajectory:
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.log_probs) != len(self.rewards):
            raise ContractViolation('trajectory needs one log-prob per reward')

    def append(self, log_prob: float, reward: float):
        self.log_probs.append(log_prob)
        self.rewards.append(reward)

    @property
    def length(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class EpisodeStats:
    length: int
    total_return: float
    success: bool
    optimal_length: int


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    length: int
    total_return: float
    success: bool
    baseline: float


class BaselineBuffer:
    """
    Ring buffer of the most recent returns (or step rewards, for BaselineKind.STEP)
    """

    def __init__(self, capacity: int = config.baseline_window, kind: BaselineKind = BaselineKind.EPISODE):
        self.kind = BaselineKind(kind)
        self.values: deque[float] = deque(maxlen=capacity)

    @property
    def capacity(self) -> int:
        return self.values.maxlen

    def push(self, value: float):
        self.values.append(float(value))

    def record(self, trajectory: Trajectory):
        if self.kind == BaselineKind.EPISODE:
            self.push(sum(trajectory.rewards))
        else:
            for r in trajectory.rewards:
                self.push(r)


def baseline_value(buffer: BaselineBuffer) -> float:
    if not buffer.values:
        return 0.0
    return float(np.mean(buffer.values))


@dataclass
class TrainConfig:
    lr: float = config.lr
    batch: int = config.batch
    episodes: int = config.episodes
    timeout: int = config.timeout
    gating: GatingMode = GatingMode.UNCONSTRAINED
    env_mode: LayoutMode = LayoutMode.FIXED
    seed: int = 0
    target_room: int = config.num_rooms - 1
    clip_norm: float = config.clip_norm
    baseline: BaselineKind = BaselineKind.EPISODE
    log_every: int = config.log_every

    def __post_init__(self):
        self.gating = GatingMode(self.gating)
        self.env_mode = LayoutMode(self.env_mode)
        self.baseline = BaselineKind(self.baseline)

        if self.lr < 0:
            raise ConfigurationError(f'lr must not be negative: {self.lr}')
        if self.batch < 1:
            raise ConfigurationError(f'batch must be positive: {self.batch}')
        if self.episodes < 0:
            raise ConfigurationError(f'episodes must not be negative: {self.episodes}')
        if self.timeout < 1:
            raise ConfigurationError(f'timeout must be positive: {self.timeout}')
        if not 0 <= self.target_room < config.num_rooms:
            raise ConfigurationError(f'target_room must be in [0, {config.num_rooms - 1}]')
        if self.clip_norm < 0:
            raise ConfigurationError(f'clip_norm must not be negative: {self.clip_norm}')
        if self.seed < 0:
            raise ConfigurationError(f'seed must not be negative: {self.seed}')
        if self.log_every < 1:
            raise ConfigurationError(f'log_every must be positive: {self.log_every}')


def rollout_episode(
    controller,
    env_mode: LayoutMode,
    gating: GatingMode,
    rng: np.random.Generator,
    *,
    timeout: int = config.timeout,
    target_room: int = config.num_rooms - 1,
) -> tuple[Trajectory, EpisodeStats]:
    """
    One episode: the controller picks a subgoal and an attention move, the oracle agent
    acts under the gate of the current window, then the window moves
    """

    state, obs = reset(env_mode, rng, target_room=target_room, timeout=timeout)
    optimal = optimal_episode_length(state)
    window = AttentionWindow(0)
    controller.start_episode()

    trajectory = Trajectory()

    while True:
        action = controller.decide(StepContext(observation=obs, window=window, state=state), rng)

        delta = act(gating, state, window, action.subgoal)
        outcome, state = apply_agent_move(state, delta)
        window = apply_attention_action(window, action.attention)

        trajectory.append(action.joint_log_prob, outcome.reward)
        if outcome.done:
            break
        obs = render(state)

    stats = EpisodeStats(
        length=trajectory.length,
        total_return=sum(trajectory.rewards),
        success=outcome.success,
        optimal_length=optimal,
    )
    return trajectory, stats


def compute_returns(rewards: Sequence[float]) -> list[float]:
    """
    Undiscounted reward-to-go
    """

    if not rewards:
        raise ContractViolation('compute_returns needs at least one reward')

    returns = [0.0] * len(rewards)
    running = 0.0
    for t in reversed(range(len(rewards))):
        running = rewards[t] + running
        returns[t] = running
    return returns


def accumulate_policy_gradient(controller, trajectory: Trajectory, baseline: float, scale: float = 1.0):
    """
    Accumulates the gradient of L = -scale * sum_t log_prob_t * (R_t - b) into controller.store;
    the advantages are constants
    """

    returns = compute_returns(trajectory.rewards)
    controller.backward([-scale * (r - baseline) for r in returns])
    controller.store.check_finite()


def clip_gradients(store, max_norm: float) -> float:
    norm = store.grad_norm()
    if max_norm > 0 and norm > max_norm:
        store.scale_grads(max_norm / norm)
    return norm


def train(
    cfg: TrainConfig,
    controller,
    rollout: Callable | None = None,
    on_episode: Callable[[EpisodeRecord, EpisodeStats], None] | None = None,
) -> list[EpisodeRecord]:
    """
    REINFORCE with a moving-average baseline: roll out a batch, average the per-episode
    gradients, clip, take one Adam step, then push the batch into the baseline buffer
    """

    if rollout is None:
        rollout = partial(
            rollout_episode,
            env_mode=cfg.env_mode,
            gating=cfg.gating,
            timeout=cfg.timeout,
            target_room=cfg.target_room,
        )

    adam = AdamState(lr=cfg.lr)
    buffer = BaselineBuffer(kind=cfg.baseline)
    store = controller.store

    records = []
    recent_lengths = deque(maxlen=cfg.log_every)
    recent_returns = deque(maxlen=cfg.log_every)

    episode = 0
    while episode < cfg.episodes:
        batch = min(cfg.batch, cfg.episodes - episode)
        b = baseline_value(buffer)

        store.zero_grad()
        trajectories = []

        for _ in range(batch):
            trajectory, stats = rollout(controller, rng=episode_rng(cfg.seed, episode))
            accumulate_policy_gradient(controller, trajectory, b, scale=1.0 / batch)
            trajectories.append(trajectory)

            record = EpisodeRecord(
                episode=episode,
                length=stats.length,
                total_return=stats.total_return,
                success=stats.success,
                baseline=b,
            )
            records.append(record)
            if on_episode:
                on_episode(record, stats)

            recent_lengths.append(stats.length)
            recent_returns.append(stats.total_return)
            episode += 1

            if episode % cfg.log_every == 0:
                print(
                    f'  episode {episode}: mean length {np.mean(recent_lengths):.2f} '
                    f'mean return {np.mean(recent_returns):.3f} baseline {b:.3f}'
                )

        clip_gradients(store, cfg.clip_norm)
        adam_step(store, adam)

        for trajectory in trajectories:
            buffer.record(trajectory)

    return records
