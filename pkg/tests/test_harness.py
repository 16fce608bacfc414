import csv

import numpy as np
import pytest

from meta_attn_lib.environment import LayoutMode, episode_return
from meta_attn_lib.errors import ConfigurationError, CsvParseError, NaNGradientError
from meta_attn_lib.harness import CSV_HEADER, parse_config, run_experiment, summarize
from meta_attn_lib.oracle import GatingMode
from meta_attn_lib.trainer import BaselineKind


@pytest.fixture
def config_file(tmp_path):
    def write(text=''):
        path = tmp_path / 'experiment.env'
        path.write_text(text)
        return path

    return write


def write_run(path, lengths):
    lines = [','.join(CSV_HEADER)]
    for episode, length in enumerate(lengths):
        lines.append(f'{episode},{length},{episode_return(length, True):.2f},1,0.000000')
    path.write_text('\n'.join(lines) + '\n')
    return path


def read_rows(path):
    with path.open(newline='') as fp:
        return list(csv.reader(fp))


def test_defaults(config_file):
    spec = parse_config(config_file(), {'experiment': 'no-attn-fixed'})
    assert spec.train.lr == 1e-5
    assert spec.train.batch == 16
    assert spec.train.episodes == 20_000
    assert spec.train.gating == GatingMode.UNCONSTRAINED
    assert spec.train.env_mode == LayoutMode.FIXED
    assert not spec.setup.uses_attention
    assert spec.out.name == 'no-attn-fixed-seed0.csv'


@pytest.mark.parametrize(
    'experiment, gating, env_mode, uses_attention',
    [
        ('no-attn-dynamic', GatingMode.UNCONSTRAINED, LayoutMode.DYNAMIC, False),
        ('partial', GatingMode.PARTIAL, LayoutMode.FIXED, True),
        ('constrained', GatingMode.CONSTRAINED, LayoutMode.FIXED, True),
    ],
)
def test_experiment_setups(experiment, gating, env_mode, uses_attention):
    spec = parse_config(None, {'experiment': experiment})
    assert spec.train.gating == gating
    assert spec.train.env_mode == env_mode
    assert spec.setup.uses_attention is uses_attention


def test_flag_overrides_file(config_file):
    path = config_file('experiment=partial\nseed=7\nlr=1e-3\nbaseline=step\n')
    spec = parse_config(path, {'seed': 9, 'lr': None})
    assert spec.train.seed == 9
    assert spec.train.lr == 1e-3
    assert spec.train.baseline == BaselineKind.STEP
    assert spec.out.name == 'partial-seed9.csv'


def test_resolved_spec_echoed(config_file, capsys):
    parse_config(config_file('experiment=constrained\n'), {'batch': 4})
    out = capsys.readouterr().out
    assert '  experiment: constrained' in out
    assert '  batch: 4' in out
    assert '  gating: constrained' in out


def test_bogus_experiment(config_file):
    with pytest.raises(ConfigurationError, match='bogus'):
        parse_config(config_file('experiment=bogus\n'))


def test_missing_experiment(config_file):
    with pytest.raises(ConfigurationError):
        parse_config(config_file('seed=1\n'))


def test_unknown_key_lists_valid_keys(config_file):
    with pytest.raises(ConfigurationError) as e:
        parse_config(config_file('experiment=partial\nlearning_rate=0.1\n'))
    assert 'learning_rate' in str(e.value)
    assert 'lr' in str(e.value)
    assert 'episodes' in str(e.value)


def test_type_mismatch_shows_value(config_file):
    with pytest.raises(ConfigurationError, match="'many'"):
        parse_config(config_file('experiment=partial\nepisodes=many\n'))


def test_invalid_value_rejected(config_file):
    with pytest.raises(ConfigurationError):
        parse_config(config_file('experiment=partial\nbatch=0\n'))


def test_config_file_missing(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / 'nope.env', {'experiment': 'partial'})


def test_zero_episodes_header_only(tmp_path):
    out = tmp_path / 'run.csv'
    spec = parse_config(None, {'experiment': 'constrained', 'episodes': 0, 'out': out})
    assert run_experiment(spec) is None
    assert out.read_text() == 'episode,length,return,success,baseline\n'


def test_run_rows_and_summary(tmp_path):
    out = tmp_path / 'runs' / 'run.csv'
    spec = parse_config(
        None,
        {'experiment': 'partial', 'episodes': 10, 'batch': 4, 'timeout': 30, 'lr': 1e-3, 'out': out},
    )
    summary = run_experiment(spec)

    rows = read_rows(out)
    assert tuple(rows[0]) == CSV_HEADER
    assert [int(r[0]) for r in rows[1:]] == list(range(10))
    for _, length, ret, success, _ in rows[1:]:
        assert 1 <= int(length) <= 30
        assert float(ret) == pytest.approx(episode_return(int(length), success == '1'), abs=1e-9)

    assert summary.episodes == 10
    assert summary.mean_length == pytest.approx(np.mean([int(r[1]) for r in rows[1:]]))
    assert summary.mean_optimal_length == 8


def test_runs_byte_identical(tmp_path):
    outputs = []
    for name in ('a.csv', 'b.csv'):
        spec = parse_config(
            None,
            {
                'experiment': 'no-attn-dynamic',
                'episodes': 12,
                'batch': 4,
                'timeout': 25,
                'lr': 1e-3,
                'seed': 11,
                'out': tmp_path / name,
            },
        )
        run_experiment(spec)
        outputs.append((tmp_path / name).read_bytes())

    assert outputs[0] == outputs[1]


def test_checkpoint_round_trip(tmp_path):
    checkpoint = tmp_path / 'params.npz'
    first = parse_config(
        None,
        {
            'experiment': 'no-attn-fixed',
            'episodes': 4,
            'batch': 2,
            'timeout': 20,
            'out': tmp_path / 'first.csv',
            'checkpoint': checkpoint,
        },
    )
    run_experiment(first)
    assert checkpoint.is_file()

    second = parse_config(
        None,
        {
            'experiment': 'no-attn-fixed',
            'episodes': 0,
            'out': tmp_path / 'second.csv',
            'init_from': checkpoint,
        },
    )
    run_experiment(second)


def test_checkpoint_wrong_network(tmp_path):
    checkpoint = tmp_path / 'params.npz'
    run_experiment(
        parse_config(
            None,
            {'experiment': 'no-attn-fixed', 'episodes': 0, 'out': tmp_path / 'a.csv', 'checkpoint': checkpoint},
        )
    )

    spec = parse_config(
        None, {'experiment': 'partial', 'episodes': 0, 'out': tmp_path / 'b.csv', 'init_from': checkpoint}
    )
    with pytest.raises(ConfigurationError):
        run_experiment(spec)


def test_nan_abort_keeps_partial_csv(tmp_path, monkeypatch):
    from meta_attn_lib import trainer

    calls = []
    real = trainer.accumulate_policy_gradient

    def poisoned(controller, trajectory, baseline, scale=1.0):
        calls.append(1)
        if len(calls) == 3:
            raise NaNGradientError('goal.w')
        real(controller, trajectory, baseline, scale)

    monkeypatch.setattr(trainer, 'accumulate_policy_gradient', poisoned)

    out = tmp_path / 'run.csv'
    spec = parse_config(None, {'experiment': 'no-attn-fixed', 'episodes': 8, 'batch': 1, 'timeout': 20, 'out': out})
    with pytest.raises(NaNGradientError):
        run_experiment(spec)

    rows = read_rows(out)
    assert len(rows) == 1 + 2


def test_summarize_constant(tmp_path):
    (bucket,) = summarize(write_run(tmp_path / 'run.csv', [8, 8, 8, 8]), 4)
    assert bucket.mean_length == 8
    assert bucket.var_length == 0
    assert bucket.count == 4


def test_summarize_population_variance(tmp_path):
    (bucket,) = summarize(write_run(tmp_path / 'run.csv', [6, 10]), 2)
    assert bucket.mean_length == 8
    assert bucket.var_length == 4


def test_summarize_bucket_larger_than_file(tmp_path):
    buckets = summarize(write_run(tmp_path / 'run.csv', [5, 9, 13]), 100)
    assert len(buckets) == 1
    assert buckets[0].mean_length == 9
    assert (buckets[0].first_episode, buckets[0].last_episode) == (0, 2)


def test_summarize_bucket_one_reproduces_lengths(tmp_path):
    lengths = [12, 9, 8, 30, 8]
    buckets = summarize(write_run(tmp_path / 'run.csv', lengths), 1)
    assert [b.mean_length for b in buckets] == lengths
    assert all(b.var_length == 0 for b in buckets)


def test_summarize_partial_last_bucket(tmp_path):
    buckets = summarize(write_run(tmp_path / 'run.csv', [10, 10, 6]), 2)
    assert [b.count for b in buckets] == [2, 1]
    assert buckets[1].mean_length == 6


def test_summarize_header_only(tmp_path):
    assert summarize(write_run(tmp_path / 'run.csv', []), 10) == []


def test_summarize_malformed_row(tmp_path):
    path = write_run(tmp_path / 'run.csv', [8, 8, 8])
    lines = path.read_text().splitlines()
    lines[2] = '1,eight,0.93,1,0.0'
    path.write_text('\n'.join(lines) + '\n')

    with pytest.raises(CsvParseError, match='line 3') as e:
        summarize(path, 2)
    assert e.value.line == 3


def test_summarize_short_row(tmp_path):
    path = write_run(tmp_path / 'run.csv', [8])
    path.write_text(path.read_text() + '1,8\n')
    with pytest.raises(CsvParseError, match='line 3'):
        summarize(path, 2)


def test_summarize_bad_header(tmp_path):
    path = tmp_path / 'run.csv'
    path.write_text('a,b,c\n')
    with pytest.raises(CsvParseError, match='line 1'):
        summarize(path, 2)


def test_summarize_bad_bucket(tmp_path):
    with pytest.raises(ConfigurationError):
        summarize(write_run(tmp_path / 'run.csv', [8]), 0)
