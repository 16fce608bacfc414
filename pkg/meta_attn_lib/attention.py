from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .config import config
from .environment import GridState, Observation, RoomLayout
from .errors import ConfigurationError


MAX_TOP_ROW = config.grid_rows - config.window_size


class AttentionAction(IntEnum):
    UP = 0
    DOWN = 1
    NOOP = 2


@dataclass(frozen=True)
class AttentionWindow:
    """
    A full-width crop of window_size rows starting at top_row
    """

    top_row: int = 0

    def __post_init__(self):
        if not 0 <= self.top_row <= MAX_TOP_ROW:
            raise ConfigurationError(f'window top_row must be in [0, {MAX_TOP_ROW}]')

    @property
    def rows(self) -> range:
        return range(self.top_row, self.top_row + config.window_size)


_MOVES = {
    AttentionAction.UP: -1,
    AttentionAction.DOWN: 1,
    AttentionAction.NOOP: 0,
}


def apply_attention_action(window: AttentionWindow, action: AttentionAction) -> AttentionWindow:
    top = window.top_row + _MOVES[AttentionAction(action)]
    return AttentionWindow(min(max(top, 0), MAX_TOP_ROW))


def crop(observation: Observation, window: AttentionWindow) -> np.ndarray:
    top = window.top_row
    return observation.image[top : top + config.window_size].copy()


def visible_rooms(layout: RoomLayout, window: AttentionWindow) -> frozenset[int]:
    # rooms are contiguous strips, so the visible set is an interval
    first = layout.room_of_row(window.rows[0])
    last = layout.room_of_row(window.rows[-1])
    return frozenset(range(first, last + 1))


def agent_in_window(state: GridState, window: AttentionWindow) -> bool:
    return state.agent_row in window.rows
