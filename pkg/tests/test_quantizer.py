import random
import time

import pytest
import torch

from tierquant.analyzer import Hierarchy
from tierquant.exceptions import AssignmentError, ConfigError
from tierquant.model import ModelConfig
from tierquant.quantizer import (
    Assignment,
    apply_assignment,
    check_bits,
    memory_footprint,
    quantization_scale,
    quantize_tensor,
)


def test_full_precision_is_identity():
    t = torch.randn(5, 7)
    out = quantize_tensor(t, 32)
    assert torch.equal(out, t)
    assert out is not t


def test_zero_and_empty_tensors():
    assert torch.equal(quantize_tensor(torch.zeros(4), 4), torch.zeros(4))
    assert quantize_tensor(torch.zeros(0), 4).numel() == 0


@pytest.mark.parametrize("bits", [2, 4, 8, 12, 16])
def test_error_within_half_step(bits):
    t = torch.randn(200, dtype=torch.float64, generator=_gen(bits))
    scale = quantization_scale(t, bits)
    error = (quantize_tensor(t, bits) - t).abs().max().item()
    assert error <= scale / 2 + 1e-12


def test_values_lie_on_grid():
    t = torch.randn(64, dtype=torch.float64, generator=_gen(1))
    q = quantize_tensor(t, 4)
    codes = q / quantization_scale(t, 4)
    assert torch.allclose(codes, codes.round(), atol=1e-9)
    # 4 bits: codes -7..7, 15 levels at most.
    assert len(set(codes.round().tolist())) <= 15
    assert codes.abs().max().item() == pytest.approx(7)


def test_two_bits_is_ternary():
    t = torch.tensor([-1.0, -0.6, -0.2, 0.0, 0.4, 0.9])
    assert quantize_tensor(t, 2).tolist() == pytest.approx(
        [-1.0, -1.0, 0.0, 0.0, 0.0, 1.0]
    )


def test_requantization_is_bit_exact():
    rng = random.Random(11)
    generator = torch.Generator().manual_seed(11)
    start = time.time()
    for _ in range(1000):
        bits = rng.choice(list(range(2, 17)) + [32])
        shape = (rng.randint(1, 64), rng.randint(1, 64))
        t = torch.randn(shape, generator=generator) * rng.uniform(0.01, 100)
        once = quantize_tensor(t, bits)
        assert torch.equal(quantize_tensor(once, bits), once)
    assert time.time() - start < 10


@pytest.mark.parametrize("bits", [1, 33, 0, -4, 2.5, True])
def test_check_bits_rejects(bits):
    with pytest.raises(ConfigError):
        check_bits(bits)


def test_assignment_precedence(toy_hierarchy):
    a = (
        Assignment.uniform(16)
        .with_block("attention.1", 8)
        .with_module("attention.1", "srffn", 4)
        .with_module("input", "embedding", 12)
    )
    assert a.resolve(("attention.1", "srffn")) == 4
    assert a.resolve(("attention.1", "srwkv")) == 8
    assert a.resolve(("attention.1", "layer_norm")) == 8
    assert a.resolve(("attention.0", "srffn")) == 16
    assert a.resolve(("input", "embedding")) == 12
    assert a.resolve(("input", "layer_norm")) == 16

    resolved = a.resolved(toy_hierarchy)
    assert list(resolved) == toy_hierarchy.modules()


def test_assignment_is_immutable():
    a = Assignment.uniform(16)
    b = a.with_block("input", 8)
    assert a.overrides == {}
    assert b.resolve(("input", "embedding")) == 8


def test_assignment_validation(toy_hierarchy):
    with pytest.raises(AssignmentError):
        Assignment.uniform(8).with_block("attention.9", 4).validate(
            toy_hierarchy
        )
    with pytest.raises(AssignmentError):
        Assignment.uniform(8).with_module("input", "srwkv", 4).validate(
            toy_hierarchy
        )
    with pytest.raises(ConfigError):
        Assignment.uniform(8).with_block("input", 40)


def test_assignment_dict_form():
    a = Assignment(16, {("output", None): 12, ("attention.0", "srffn"): 4})
    assert a.to_dict() == {
        "default_bits": 16,
        "overrides": [
            {"block": "attention.0", "module": "srffn", "bits": 4},
            {"block": "output", "module": None, "bits": 12},
        ],
    }
    assert Assignment.from_dict(a.to_dict()) == a
    with pytest.raises(AssignmentError):
        Assignment.from_dict({"overrides": []})


def test_key_ignores_spelling(toy_hierarchy):
    by_block = Assignment.uniform(16).with_block("attention.0", 8)
    by_module = Assignment.uniform(16)
    for module in ("layer_norm", "srwkv", "srffn"):
        by_module = by_module.with_module("attention.0", module, 8)
    assert by_block != by_module
    assert by_block.key(toy_hierarchy) == by_module.key(toy_hierarchy)


def test_apply_assignment(toy_params, toy_hierarchy):
    before = {k: v.clone() for k, v in toy_params.items()}
    a = Assignment.uniform(32).with_module("attention.2", "srwkv", 4)
    out = apply_assignment(toy_params, toy_hierarchy, a)

    assert list(out) == list(toy_params)
    for name, tensor in toy_params.items():
        assert torch.equal(tensor, before[name])
        if name.startswith("blocks.2.srwkv."):
            assert torch.equal(out[name], quantize_tensor(tensor, 4))
        else:
            assert torch.equal(out[name], tensor)


def test_uniform_memory(toy_hierarchy):
    total = toy_hierarchy.total_params()
    for bits in (32, 16, 8, 4, 2):
        assert memory_footprint(
            toy_hierarchy, Assignment.uniform(bits)
        ) == (total * bits / 8)


def test_memory_on_random_shapes():
    rng = random.Random(5)
    for _ in range(100):
        config = ModelConfig(
            vocab_size=rng.randint(2, 50),
            embed_dim=rng.randint(1, 12),
            num_blocks=rng.randint(1, 4),
            context_len=8,
        )
        hierarchy = Hierarchy.from_config(config)
        bits = rng.randint(2, 32)
        assert memory_footprint(
            hierarchy, Assignment.uniform(bits)
        ) == (hierarchy.total_params() * bits / 8)


def test_memory_is_monotone(toy_hierarchy):
    a = Assignment.uniform(16)
    previous = memory_footprint(toy_hierarchy, a)
    for module_id in toy_hierarchy.modules():
        a = a.with_module(module_id.block, module_id.module, 8)
        current = memory_footprint(toy_hierarchy, a)
        assert current < previous
        assert previous - current == pytest.approx(
            toy_hierarchy.param_count(module_id) * 8 / 8
        )
        previous = current


def _gen(seed):
    return torch.Generator().manual_seed(seed)
