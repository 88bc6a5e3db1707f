from collections import OrderedDict

import pytest
import torch

from tierquant.analyzer import (
    Hierarchy,
    SensitivityProfile,
    block_sensitivity_sweep,
    extract_hierarchy,
    memory_proportions,
    module_of,
    sweep_levels,
    uniform_attention_sweep,
)
from tierquant.analyzer.hierarchy import ROOT
from tierquant.exceptions import (
    CheckpointFormatError,
    EvaluationError,
    ModelIntegrityError,
    NumericError,
)
from tierquant.model import TaskKind
from tierquant.model.config import SPIKEGPT_216M
from tierquant.quantizer import Assignment, memory_footprint

from .constants import (
    SPIKEGPT_ATTENTION_TOTAL,
    SPIKEGPT_BLOCK,
    SPIKEGPT_EMBEDDING,
    SPIKEGPT_FULL_PRECISION_BYTES,
    SPIKEGPT_TOTAL_PARAMS,
    TOY_BLOCKS,
    TOY_COUNTS,
)


def test_toy_hierarchy_shape(toy_hierarchy):
    assert toy_hierarchy.blocks() == [
        "input",
        "attention.0",
        "attention.1",
        "attention.2",
        "output",
    ]
    assert len(toy_hierarchy.attention_blocks()) == TOY_BLOCKS
    assert [m.module for m in toy_hierarchy.modules("attention.1")] == [
        "layer_norm",
        "srwkv",
        "srffn",
    ]
    assert [m.module for m in toy_hierarchy.modules("output")] == [
        "layer_norm",
        "head",
    ]


def test_toy_counts(toy_hierarchy, toy_params):
    for module_id, count in TOY_COUNTS.items():
        assert toy_hierarchy.param_count(module_id) == count
    assert toy_hierarchy.total_params() == sum(
        t.numel() for t in toy_params.values()
    )
    assert toy_hierarchy.param_count(ROOT) == toy_hierarchy.total_params()


def test_every_tensor_has_one_module(toy_hierarchy, toy_params):
    owned = [
        name
        for module_id in toy_hierarchy.modules()
        for name in toy_hierarchy.tensor_names(module_id)
    ]
    assert sorted(owned) == sorted(toy_params)


def test_module_of():
    assert module_of("blocks.4.ln2.gain") == ("attention.4", "layer_norm")
    assert module_of("blocks.0.srffn.key") == ("attention.0", "srffn")
    assert module_of("output.head") == ("output", "head")
    with pytest.raises(ModelIntegrityError):
        module_of("decoder.weight")


def test_extract_rejects_mismatched_params(toy_config, toy_params):
    toy_params["output.head"] = torch.zeros(3, 3)
    with pytest.raises(ModelIntegrityError) as e:
        extract_hierarchy(toy_params, toy_config)
    assert e.value.tensor_name == "output.head"


def test_published_shape_counts():
    hierarchy = Hierarchy.from_config(SPIKEGPT_216M)
    assert len(hierarchy.attention_blocks()) == 18
    assert hierarchy.total_params() == SPIKEGPT_TOTAL_PARAMS
    assert (
        hierarchy.param_count(("input", "embedding")) == SPIKEGPT_EMBEDDING
    )
    assert hierarchy.param_count("output") == SPIKEGPT_EMBEDDING + 2 * 768
    for module, count in SPIKEGPT_BLOCK.items():
        assert hierarchy.param_count(("attention.7", module)) == count

    attention = sum(
        hierarchy.param_count(b) for b in hierarchy.attention_blocks()
    )
    assert attention == SPIKEGPT_ATTENTION_TOTAL
    assert attention / hierarchy.total_params() == pytest.approx(
        0.641, abs=1e-3
    )
    assert (
        memory_footprint(hierarchy, Assignment())
        == SPIKEGPT_FULL_PRECISION_BYTES
    )


def test_memory_proportions(toy_hierarchy):
    proportions = memory_proportions(toy_hierarchy)
    assert list(proportions) == toy_hierarchy.blocks()
    assert sum(proportions.values()) == pytest.approx(1.0)
    assert all(p > 0 for p in proportions.values())


def test_hierarchy_dict(toy_hierarchy):
    d = toy_hierarchy.to_dict()
    assert d["total_params"] == toy_hierarchy.total_params()
    assert [b["block"] for b in d["blocks"]] == toy_hierarchy.blocks()
    assert sum(b["param_count"] for b in d["blocks"]) == d["total_params"]


def test_sweep_levels():
    assert sweep_levels([16, 8, 4]) == [32, 16, 8, 4]
    assert sweep_levels([32, 8]) == [32, 8]


@pytest.fixture()
def small_sweep(small_model, corpus):
    hierarchy = extract_hierarchy(small_model.params, small_model.config)
    return (
        small_model.params,
        small_model.config,
        hierarchy,
        TaskKind.GENERATION,
        [8, 4],
        corpus,
    )


def test_block_sweep(small_sweep):
    params = small_sweep[0]
    before = {k: v.clone() for k, v in params.items()}
    profile = block_sensitivity_sweep(*small_sweep)

    assert profile.ladder == [32, 8, 4]
    assert profile.blocks == small_sweep[2].blocks()
    assert len(profile.rows()) == 4 * 3
    for block in profile.blocks:
        assert profile.cells[(block, 32)] == profile.baseline
        assert profile.degradation(block, 32) == 0
    for name, tensor in params.items():
        assert torch.equal(tensor, before[name])


def test_block_sweep_threads_agree(small_sweep):
    serial = block_sensitivity_sweep(*small_sweep, threads=1)
    parallel = block_sensitivity_sweep(*small_sweep, threads=4)
    assert serial.cells == parallel.cells


def test_sweep_failure_names_cell(small_sweep):
    params = OrderedDict(small_sweep[0])
    params["output.head"] = torch.full_like(
        params["output.head"], float("nan")
    )
    with pytest.raises(EvaluationError) as e:
        block_sensitivity_sweep(params, *small_sweep[1:])
    assert e.value.context == {"block": "input", "bits": 32}
    assert isinstance(e.value.cause, NumericError)


def test_uniform_attention_sweep(small_sweep):
    sweep = uniform_attention_sweep(*small_sweep)
    rows = sweep.rows()
    assert [bits for bits, _, _ in rows] == [32, 8, 4]
    memory = [mem for _, _, mem in rows]
    assert memory == sorted(memory, reverse=True)
    assert len(set(memory)) == 3
    assert memory[0] == small_sweep[2].total_params() * 4
    assert sweep.to_dict()["rows"][0]["bits"] == 32


def profile_from(baseline, drops, task=TaskKind.CLASSIFICATION):
    cells = OrderedDict()
    for block, drop in drops.items():
        cells[(block, 32)] = baseline
        cells[(block, 4)] = baseline - drop
    return SensitivityProfile(task=task, ladder=[32, 4], cells=cells)


def test_io_more_sensitive():
    profile = profile_from(
        0.9,
        {
            "input": 0.3,
            "attention.0": 0.01,
            "attention.1": 0.05,
            "attention.2": 0.02,
            "output": 0.0,
        },
    )
    shape = profile.io_more_sensitive()
    assert shape["bits"] == 4
    assert shape["input"] == pytest.approx(0.3)
    assert shape["attention_median"] == pytest.approx(0.02)
    assert shape["holds"]

    flat = profile_from(
        0.9, {"input": 0.0, "attention.0": 0.1, "output": 0.0}
    )
    assert not flat.io_more_sensitive()["holds"]


def test_generation_degradation_is_increase():
    profile = profile_from(
        10.0,
        {"input": -5.0, "attention.0": -1.0, "output": -0.5},
        task=TaskKind.GENERATION,
    )
    assert profile.degradation("input", 4) == pytest.approx(5.0)
    assert profile.io_more_sensitive()["holds"]


def test_profile_dict_and_plot():
    profile = profile_from(
        0.8, {"input": 0.1, "attention.0": 0.0, "output": 0.2}
    )
    assert SensitivityProfile.from_dict(profile.to_dict()) == profile

    plot = profile.plot_series()
    assert plot["y"] == "accuracy"
    assert [s["block"] for s in plot["series"]] == [
        "input",
        "attention.0",
        "output",
    ]
    assert plot["series"][2]["bits"] == [32, 4]
    assert plot["series"][2]["metric"] == pytest.approx([0.8, 0.6])

    with pytest.raises(CheckpointFormatError):
        SensitivityProfile.from_dict({"task": "classify"})
