import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from dotenv import dotenv_values

from .config import config
from .environment import LayoutMode, episode_return
from .errors import ConfigurationError, ContractViolation, CsvParseError
from .meta_controller import build_controller
from .oracle import GatingMode
from .trainer import BaselineKind, EpisodeRecord, EpisodeStats, TrainConfig, train
from .utils import init_rng


CSV_HEADER = ('episode', 'length', 'return', 'success', 'baseline')


@dataclass(frozen=True)
class ExperimentSetup:
    gating: GatingMode
    env_mode: LayoutMode
    uses_attention: bool


EXPERIMENTS = {
    'no-attn-fixed': ExperimentSetup(GatingMode.UNCONSTRAINED, LayoutMode.FIXED, False),
    'no-attn-dynamic': ExperimentSetup(GatingMode.UNCONSTRAINED, LayoutMode.DYNAMIC, False),
    'partial': ExperimentSetup(GatingMode.PARTIAL, LayoutMode.FIXED, True),
    'constrained': ExperimentSetup(GatingMode.CONSTRAINED, LayoutMode.FIXED, True),
}


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    train: TrainConfig
    out: Path
    checkpoint: Path | None = None
    init_from: Path | None = None

    @property
    def setup(self) -> ExperimentSetup:
        return EXPERIMENTS[self.experiment]


# config file keys and how their values are parsed
CONFIG_KEYS = {
    'experiment': str,
    'episodes': int,
    'seed': int,
    'lr': float,
    'batch': int,
    'timeout': int,
    'target_room': int,
    'clip_norm': float,
    'baseline': BaselineKind,
    'log_every': int,
    'out': Path,
    'checkpoint': Path,
    'init_from': Path,
}


def _convert(key: str, value):
    if value is None:
        raise ConfigurationError(f'no value given for {key}')

    kind = CONFIG_KEYS[key]
    if isinstance(value, str) and kind is not str:
        value = value.strip()
    try:
        return kind(value)
    except ValueError:
        raise ConfigurationError(f'invalid value for {key}: {value!r}') from None


def parse_config(path: Path | None = None, overrides: dict | None = None) -> ExperimentSpec:
    """
    Resolves an experiment from a key=value file and command line overrides

    Flags win over the file; defaults fill the rest. None-valued overrides count as not given.
    """

    values = {}

    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f'config file not found: {path}')
        values.update(dotenv_values(path))

    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigurationError(
            f'unknown config keys: {", ".join(unknown)}; valid keys: {", ".join(CONFIG_KEYS)}'
        )

    resolved = {key: _convert(key, value) for key, value in values.items()}

    experiment = resolved.pop('experiment', None)
    if experiment is None:
        raise ConfigurationError(f'no experiment given, choose one of: {", ".join(EXPERIMENTS)}')
    if experiment not in EXPERIMENTS:
        raise ConfigurationError(
            f'unknown experiment {experiment!r}, choose one of: {", ".join(EXPERIMENTS)}'
        )

    setup = EXPERIMENTS[experiment]
    out = resolved.pop('out', None)
    checkpoint = resolved.pop('checkpoint', None)
    init_from = resolved.pop('init_from', None)

    train_cfg = TrainConfig(gating=setup.gating, env_mode=setup.env_mode, **resolved)

    if out is None:
        out = config.runs_dir / f'{experiment}-seed{train_cfg.seed}.csv'

    spec = ExperimentSpec(
        experiment=experiment,
        train=train_cfg,
        out=out,
        checkpoint=checkpoint,
        init_from=init_from,
    )
    echo_spec(spec)
    return spec


def echo_spec(spec: ExperimentSpec):
    print(f'  experiment: {spec.experiment}')
    for f in fields(spec.train):
        value = getattr(spec.train, f.name)
        if hasattr(value, 'value'):
            value = value.value
        print(f'  {f.name}: {value}')
    print(f'  out: {spec.out}')
    if spec.checkpoint:
        print(f'  checkpoint: {spec.checkpoint}')
    if spec.init_from:
        print(f'  init_from: {spec.init_from}')


def check_reward_accounting(record: EpisodeRecord, timeout: int):
    if not 1 <= record.length <= timeout:
        raise ContractViolation(f'episode {record.episode}: length {record.length} out of range')

    expected = episode_return(record.length, record.success)
    if not math.isclose(record.total_return, expected, abs_tol=1e-9):
        raise ContractViolation(
            f'episode {record.episode}: return {record.total_return} != {expected} '
            f'for length {record.length}, success {record.success}'
        )


def format_row(record: EpisodeRecord) -> list[str]:
    return [
        str(record.episode),
        str(record.length),
        f'{record.total_return:.2f}',
        str(int(record.success)),
        f'{record.baseline:.6f}',
    ]


@dataclass(frozen=True)
class ExperimentSummary:
    episodes: int
    mean_length: float
    var_length: float
    mean_optimal_length: float
    success_rate: float


def final_window_summary(lengths, optimal_lengths, successes, window: int) -> ExperimentSummary | None:
    if not lengths:
        return None

    lengths = np.asarray(lengths[-window:], dtype=np.float64)
    return ExperimentSummary(
        episodes=len(lengths),
        mean_length=float(np.mean(lengths)),
        var_length=float(np.var(lengths)),
        mean_optimal_length=float(np.mean(optimal_lengths[-window:])),
        success_rate=float(np.mean(successes[-window:])),
    )


def run_experiment(spec: ExperimentSpec, window: int = config.summary_window) -> ExperimentSummary | None:
    """
    Trains one experiment, streaming an EpisodeRecord per CSV line, then prints the
    final-window summary and saves the checkpoint if one was asked for
    """

    setup = spec.setup
    controller = build_controller(
        setup.uses_attention,
        init_rng(spec.train.seed),
        init_from=spec.init_from,
    )
    print(f'  {controller.store.count()} parameters')

    lengths, optimal_lengths, successes = [], [], []

    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    with out.open('w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        fp.flush()

        def on_episode(record: EpisodeRecord, stats: EpisodeStats):
            check_reward_accounting(record, spec.train.timeout)
            writer.writerow(format_row(record))
            fp.flush()

            lengths.append(stats.length)
            optimal_lengths.append(stats.optimal_length)
            successes.append(stats.success)

        train(spec.train, controller, on_episode=on_episode)

    print(f'  wrote {len(lengths)} episodes to {out}')

    summary = final_window_summary(lengths, optimal_lengths, successes, window)
    if summary:
        print(
            f'  last {summary.episodes} episodes: mean length {summary.mean_length:.2f} '
            f'variance {summary.var_length:.2f} optimal {summary.mean_optimal_length:.2f} '
            f'success rate {summary.success_rate:.2f}'
        )

    if spec.checkpoint:
        controller.store.save(spec.checkpoint)
        print(f'  saved parameters to {spec.checkpoint}')

    return summary


@dataclass(frozen=True)
class BucketSummary:
    first_episode: int
    last_episode: int
    count: int
    mean_length: float
    var_length: float


def read_lengths(csv_path: Path) -> list[tuple[int, int]]:
    """
    (episode, length) pairs of a run CSV, validating every row
    """

    rows = []
    with Path(csv_path).open(newline='') as fp:
        reader = csv.reader(fp)

        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise CsvParseError(1, f'expected header {",".join(CSV_HEADER)}')

        for row in reader:
            line = reader.line_num
            if len(row) != len(CSV_HEADER):
                raise CsvParseError(line, f'expected {len(CSV_HEADER)} fields, got {len(row)}')
            try:
                episode, length = int(row[0]), int(row[1])
                float(row[2])
                int(row[3])
                float(row[4])
            except ValueError as e:
                raise CsvParseError(line, str(e)) from None
            if length < 1:
                raise CsvParseError(line, f'episode length must be positive: {length}')
            rows.append((episode, length))

    return rows


def summarize(csv_path: Path, bucket: int) -> list[BucketSummary]:
    """
    Mean and population variance of episode length per consecutive bucket of episodes;
    the last bucket may be shorter
    """

    if bucket < 1:
        raise ConfigurationError(f'bucket must be positive: {bucket}')

    rows = read_lengths(csv_path)

    summaries = []
    for start in range(0, len(rows), bucket):
        chunk = rows[start : start + bucket]
        lengths = np.array([length for _, length in chunk], dtype=np.float64)
        summaries.append(
            BucketSummary(
                first_episode=chunk[0][0],
                last_episode=chunk[-1][0],
                count=len(chunk),
                mean_length=float(np.mean(lengths)),
                var_length=float(np.var(lengths)),
            )
        )
    return summaries
