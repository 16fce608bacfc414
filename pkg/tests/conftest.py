import pytest

from meta_attn_lib.environment import CANONICAL_LAYOUT, Color, GridState


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run convergence runs')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long convergence run, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def canonical_state():
    def make(row=0, target=Color.YELLOW, steps_taken=0):
        return GridState(
            layout=CANONICAL_LAYOUT,
            agent_row=row,
            agent_col=0,
            target_color=target,
            steps_taken=steps_taken,
        )

    return make
