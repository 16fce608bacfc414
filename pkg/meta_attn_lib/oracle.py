from collections import deque
from enum import Enum

from .attention import AttentionWindow, agent_in_window, visible_rooms
from .config import config
from .environment import Color, GridState, RoomLayout, enumerate_layouts


class GatingMode(str, Enum):
    UNCONSTRAINED = 'unconstrained'
    PARTIAL = 'partial'
    CONSTRAINED = 'constrained'


def gate_open(mode: GatingMode, state: GridState, window: AttentionWindow, subgoal: int) -> bool:
    """
    Whether the base agent is allowed to move toward subgoal (a color index)
    """

    mode = GatingMode(mode)
    if mode == GatingMode.UNCONSTRAINED:
        return True

    subgoal_visible = state.layout.room_of_color(subgoal) in visible_rooms(state.layout, window)
    if mode == GatingMode.PARTIAL:
        return subgoal_visible

    return subgoal_visible and agent_in_window(state, window)


def optimal_delta(state: GridState, subgoal: int) -> int:
    """
    One step along the shortest path toward the nearest row of the subgoal room
    """

    rows = state.layout.rows(state.layout.room_of_color(subgoal))
    if state.agent_row in rows:
        return 0

    nearest = min(rows, key=lambda r: abs(r - state.agent_row))
    return 1 if nearest > state.agent_row else -1


def act(mode: GatingMode, state: GridState, window: AttentionWindow, subgoal: int) -> int:
    if not gate_open(mode, state, window, subgoal):
        return 0
    return optimal_delta(state, subgoal)


# reference


def bfs_distance(layout: RoomLayout, start_row: int, room: int) -> int:
    """
    Shortest path length over the row graph from start_row into room
    """

    targets = set(layout.rows(room))
    seen = {start_row}
    queue = deque([(start_row, 0)])

    while queue:
        row, dist = queue.popleft()
        if row in targets:
            return dist
        for nxt in (row - 1, row + 1):
            if 0 <= nxt < config.grid_rows and nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, dist + 1))

    raise AssertionError(f'room {room} unreachable from row {start_row}')


def verify_oracle() -> int:
    """
    Exhaustive check: iterating optimal_delta reaches every subgoal room from every row of
    every layout in exactly the BFS distance. Returns the number of cases checked.
    """

    checked = 0

    for layout in enumerate_layouts():
        for row in range(config.grid_rows):
            for color in Color:
                room = layout.room_of_color(color)
                expected = bfs_distance(layout, row, room)

                state = GridState(layout=layout, agent_row=row, agent_col=0, target_color=color)
                steps = 0
                while state.agent_row not in layout.rows(room):
                    delta = optimal_delta(state, color)
                    assert delta != 0, f'oracle stalled: {layout} row {state.agent_row}'
                    state = GridState(
                        layout=layout,
                        agent_row=state.agent_row + delta,
                        agent_col=0,
                        target_color=color,
                    )
                    steps += 1
                    assert steps <= config.grid_rows, f'oracle diverged: {layout} row {row}'

                if steps != expected:
                    raise AssertionError(
                        f'oracle took {steps} steps, BFS says {expected}: {layout} row {row} {color.name}'
                    )
                checked += 1

    return checked
