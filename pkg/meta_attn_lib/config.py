import os
from pathlib import Path


class Configuration:
    grid_rows = 10
    grid_cols = 5
    num_rooms = 4
    max_room_height = 4

    window_size = 5

    # meta-steps before an episode times out
    timeout = 100

    step_cost = -0.01
    success_reward = 1.0

    lr = 1e-5
    batch = 16
    episodes = 20_000
    baseline_window = 100
    clip_norm = 10.0
    init_scale = 0.1
    log_every = 1000

    # final window used by summaries
    summary_window = 100

    runs_dir = Path(os.getenv('META_ATTN_RUNS', 'runs'))
    config_dir = Path(__file__).parent.parent / 'config'


config = Configuration()
