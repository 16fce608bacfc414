import itertools
from bisect import bisect_right
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from functools import cached_property, lru_cache

import numpy as np

from .config import config
from .errors import ConfigurationError, ContractViolation


class Color(IntEnum):
    RED = 0
    GREEN = 1
    BLUE = 2
    YELLOW = 3


class LayoutMode(str, Enum):
    FIXED = 'fixed'
    DYNAMIC = 'dynamic'


AGENT_CHANNEL = len(Color)
NUM_CHANNELS = len(Color) + 1


@dataclass(frozen=True)
class RoomLayout:
    """
    Rooms are full-width horizontal strips stacked top to bottom
    """

    heights: tuple[int, ...]
    colors: tuple[Color, ...]

    def __post_init__(self):
        if len(self.heights) != config.num_rooms:
            raise ConfigurationError(f'layout needs {config.num_rooms} rooms: {self.heights}')
        if any(not 1 <= h <= config.max_room_height for h in self.heights):
            raise ConfigurationError(f'room heights must be in [1, 4]: {self.heights}')
        if sum(self.heights) != config.grid_rows:
            raise ConfigurationError(f'room heights must sum to {config.grid_rows}: {self.heights}')
        if sorted(self.colors) != list(Color):
            raise ConfigurationError(f'colors must be a permutation: {self.colors}')

    @cached_property
    def starts(self) -> tuple[int, ...]:
        return tuple(itertools.accumulate(self.heights[:-1], initial=0))

    def rows(self, room: int) -> range:
        start = self.starts[room]
        return range(start, start + self.heights[room])

    def room_of_color(self, color: int) -> int:
        return self.colors.index(Color(color))

    def room_of_row(self, row: int) -> int:
        return bisect_right(self.starts, row) - 1


CANONICAL_LAYOUT = RoomLayout(
    heights=(3, 3, 2, 2),
    colors=(Color.RED, Color.GREEN, Color.BLUE, Color.YELLOW),
)


@lru_cache(maxsize=1)
def enumerate_layouts() -> tuple[RoomLayout, ...]:
    """
    Every valid layout: 44 height compositions x 24 color orders
    """

    heights = [
        h
        for h in itertools.product(range(1, config.max_room_height + 1), repeat=config.num_rooms)
        if sum(h) == config.grid_rows
    ]
    return tuple(
        RoomLayout(heights=h, colors=colors)
        for h in heights
        for colors in itertools.permutations(Color)
    )


def generate_layout(mode: LayoutMode, rng: np.random.Generator) -> RoomLayout:
    if LayoutMode(mode) == LayoutMode.FIXED:
        return CANONICAL_LAYOUT

    layouts = enumerate_layouts()
    return layouts[int(rng.integers(len(layouts)))]


@dataclass(frozen=True)
class GridState:
    layout: RoomLayout
    agent_row: int
    agent_col: int
    target_color: Color
    steps_taken: int = 0
    timeout: int = config.timeout

    @property
    def target_room(self) -> int:
        return self.layout.room_of_color(self.target_color)


@dataclass(frozen=True)
class Observation:
    # rows x cols x 5: one-hot room color planes, then the agent plane
    image: np.ndarray
    instruction: np.ndarray


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    done: bool
    success: bool


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


def room_of(state: GridState, row: int) -> int:
    assert 0 <= row < config.grid_rows
    return state.layout.room_of_row(row)


def render(state: GridState) -> Observation:
    layout = state.layout

    image = np.zeros((config.grid_rows, config.grid_cols, NUM_CHANNELS))
    for room, color in enumerate(layout.colors):
        image[layout.rows(room), :, int(color)] = 1.0
    image[state.agent_row, state.agent_col, AGENT_CHANNEL] = 1.0

    return Observation(image=image, instruction=one_hot(state.target_color, len(Color)))


def reset(
    mode: LayoutMode,
    rng: np.random.Generator,
    *,
    target_room: int = config.num_rooms - 1,
    timeout: int = config.timeout,
) -> tuple[GridState, Observation]:
    """
    Agent starts at the top left corner; the target is the room at position target_room
    (the bottom room by default)
    """

    if not 0 <= target_room < config.num_rooms:
        raise ConfigurationError(f'target_room must be in [0, {config.num_rooms - 1}]')
    if timeout < 1:
        raise ConfigurationError(f'timeout must be positive: {timeout}')

    layout = generate_layout(mode, rng)
    state = GridState(
        layout=layout,
        agent_row=0,
        agent_col=0,
        target_color=layout.colors[target_room],
        steps_taken=0,
        timeout=timeout,
    )
    return state, render(state)


def apply_agent_move(state: GridState, delta_row: int) -> tuple[StepOutcome, GridState]:
    if abs(delta_row) > 1:
        raise ContractViolation(f'agent moves at most one row per step, got {delta_row}')

    row = min(max(state.agent_row + delta_row, 0), config.grid_rows - 1)
    state = replace(state, agent_row=row, steps_taken=state.steps_taken + 1)

    if room_of(state, row) == state.target_room:
        # terminal step carries no step cost
        return StepOutcome(reward=config.success_reward, done=True, success=True), state

    done = state.steps_taken >= state.timeout
    return StepOutcome(reward=config.step_cost, done=done, success=False), state


def optimal_episode_length(state: GridState) -> int:
    """
    Fewest meta-steps from the start row into the target room. Entry is only checked after
    a move, so starting inside the room still takes one step.
    """

    rows = state.layout.rows(state.target_room)
    if state.agent_row in rows:
        return 1
    return min(abs(r - state.agent_row) for r in rows)


def episode_return(length: int, success: bool) -> float:
    """
    Exact return of an episode of the given length
    """

    if success:
        return config.success_reward + config.step_cost * (length - 1)
    return config.step_cost * length
