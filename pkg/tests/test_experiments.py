from collections import OrderedDict
import json
from types import SimpleNamespace

from tierquant.analyzer import SensitivityProfile
from tierquant.build import CHECKPOINT_DIR, PROFILE_CSV
from tierquant.experiments import (
    EXPERIMENT_FORMAT,
    EXPERIMENT_LOG,
    sensitivity_vote,
)
from tierquant.model import TaskKind

from .test_cli import TINY_MODEL, invoke


def profile_at_4_bits(input_perf, attention_perf):
    cells = OrderedDict()
    for block in ["input", "attention.0", "attention.1", "output"]:
        cells[(block, 32)] = 0.9
        if block == "input":
            cells[(block, 4)] = input_perf
        elif block == "output":
            cells[(block, 4)] = 0.88
        else:
            cells[(block, 4)] = attention_perf
    return SensitivityProfile(TaskKind.CLASSIFICATION, [32, 4], cells)


def bench_returning(seed, profile):
    return SimpleNamespace(
        config=SimpleNamespace(seed=seed), sensitivity=lambda: profile
    )


def test_sensitivity_vote_needs_majority():
    io_worse = profile_at_4_bits(input_perf=0.5, attention_perf=0.85)
    attention_worse = profile_at_4_bits(input_perf=0.88, attention_perf=0.6)

    vote = sensitivity_vote(
        [
            bench_returning(0, io_worse),
            bench_returning(1, attention_worse),
            bench_returning(2, io_worse),
        ]
    )
    assert vote["votes"] == 2
    assert vote["holds"]
    assert [s["seed"] for s in vote["seeds"]] == [0, 1, 2]
    assert vote["seeds"][0]["input"] == 0.9 - 0.5

    vote = sensitivity_vote(
        [
            bench_returning(0, attention_worse),
            bench_returning(1, io_worse),
            bench_returning(2, attention_worse),
        ]
    )
    assert vote["votes"] == 1
    assert not vote["holds"]


def test_experiments_command(tmp_path):
    result = invoke(
        "experiments",
        "--out",
        tmp_path,
        *TINY_MODEL,
        "--seeds",
        "0,1",
        "--ladder",
        "16,4",
        "--const-a",
        "1000",
        "--threads",
        "1",
    )
    assert result.exit_code == 0, result.output
    assert "uniform_plateau: holds" in result.output

    with open(tmp_path / EXPERIMENT_LOG) as f:
        log = json.load(f)
    assert log["format"] == EXPERIMENT_FORMAT
    assert log["seeds"] == [0, 1]
    vote, plateau, shape = log["assertions"]
    assert vote["name"] == "io_more_sensitive"
    assert len(vote["seeds"]) == 2
    assert plateau["name"] == "uniform_plateau"
    assert plateau["holds"]
    assert shape["name"] == "uniform_sweep_shape"
    assert [row["bits"] for row in shape["rows"]] == [32, 16, 4]
    memory = [row["memory_bytes"] for row in shape["rows"]]
    assert memory == sorted(memory, reverse=True)

    for seed in (0, 1):
        assert (tmp_path / f"seed-{seed}" / CHECKPOINT_DIR).is_dir()
        assert (tmp_path / f"seed-{seed}" / PROFILE_CSV).is_file()


def test_experiments_need_vote_level(tmp_path):
    result = invoke(
        "experiments", "--out", tmp_path, *TINY_MODEL, "--ladder", "16,8"
    )
    assert result.exit_code == 2
    assert not (tmp_path / EXPERIMENT_LOG).exists()
