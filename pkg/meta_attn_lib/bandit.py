from collections.abc import Sequence

import numpy as np

from .numeric import ParamStore, categorical_sample, log_prob_grad, softmax
from .trainer import EpisodeStats, Trajectory, accumulate_policy_gradient


# arm 0 pays 1, arm 1 pays 0
ARM_REWARDS = (1.0, 0.0)


class BanditPolicy:
    """
    Softmax over one logit per arm; single-step episodes
    """

    def __init__(self, logits: Sequence[float] = (0.0, 0.0)):
        self.store = ParamStore()
        self.store.add('logits', logits)
        self.start_episode()

    def start_episode(self):
        self.steps: list[tuple[np.ndarray, int]] = []

    def probs(self) -> np.ndarray:
        return softmax(self.store['logits'])

    def choose(self, arm: int) -> float:
        p = self.probs()
        self.steps.append((p, arm))
        return float(np.log(p[arm]))

    def decide(self, rng: np.random.Generator) -> tuple[int, float]:
        p = self.probs()
        arm, log_prob = categorical_sample(p, rng)
        self.steps.append((p, arm))
        return arm, log_prob

    def backward(self, dlog_probs: Sequence[float]):
        for (p, arm), d in zip(self.steps, dlog_probs):
            self.store.grads['logits'] += d * log_prob_grad(p, arm)


def rollout_bandit(policy: BanditPolicy, rng: np.random.Generator) -> tuple[Trajectory, EpisodeStats]:
    policy.start_episode()
    arm, log_prob = policy.decide(rng)
    reward = ARM_REWARDS[arm]

    stats = EpisodeStats(length=1, total_return=reward, success=arm == 0, optimal_length=1)
    return Trajectory([log_prob], [reward]), stats


def exact_expected_gradient(policy: BanditPolicy, baseline: float) -> np.ndarray:
    """
    Expected surrogate gradient, summed over both outcomes weighted by their probability
    """

    probs = policy.probs()
    expected = np.zeros_like(policy.store['logits'])

    for arm, reward in enumerate(ARM_REWARDS):
        policy.store.zero_grad()
        policy.start_episode()
        log_prob = policy.choose(arm)
        accumulate_policy_gradient(
            policy, Trajectory([log_prob], [reward]), baseline, scale=float(probs[arm])
        )
        expected += policy.store.grads['logits']

    policy.store.zero_grad()
    return expected
