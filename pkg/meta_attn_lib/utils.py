import numpy as np


# named streams, so the init draw and the episode draws never share state
INIT_STREAM = 0
EPISODE_STREAM = 1
GRADCHECK_STREAM = 2


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Seedable, splittable generator: (seed, *keys) selects an independent stream
    """

    return np.random.default_rng([seed, *keys])


def init_rng(seed: int) -> np.random.Generator:
    return make_rng(seed, INIT_STREAM)


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """
    Each episode draws from its own stream, so results do not depend on
    which worker rolled the episode out
    """

    return make_rng(seed, EPISODE_STREAM, episode)
