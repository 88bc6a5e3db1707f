from collections import OrderedDict
import json

import pytest
import torch

from tierquant.exceptions import (
    ConfigError,
    InputDomainError,
    ModelIntegrityError,
    NumericOverflowError,
    TrainingError,
)
from tierquant.io import Checkpoint, read_checkpoint, write_checkpoint
from tierquant.model import (
    ModelConfig,
    TaskKind,
    check_params,
    classification_logits,
    count_params,
    forward_logits,
    init_params,
    layer_norm,
    param_shapes,
    srwkv_forward,
    train_toy_checkpoint,
    wkv,
    zero_params,
)
from tierquant.model.layers import block_view, token_shift
from tierquant.model.params import params_to

from .constants import GOLDEN_FORWARD
from .reference import reference_logits


def double_params(config, seed=3):
    return params_to(init_params(config, seed), torch.float64)


def test_forward_matches_sequential_reference(small_config):
    params = double_params(small_config)
    tokens = torch.tensor([5, 17, 3, 3, 60, 0, 41, 12, 9, 33])

    logits = forward_logits(params, small_config, tokens)
    expected = reference_logits(params, small_config, tokens.tolist())

    assert logits.shape == (10, small_config.vocab_size)
    assert torch.allclose(
        logits, torch.from_numpy(expected), rtol=1e-9, atol=1e-9
    )


def load_golden(dtype):
    with open(GOLDEN_FORWARD) as f:
        golden = json.load(f)
    config = ModelConfig.from_dict(golden["config"])
    params = OrderedDict(
        (name, torch.tensor(golden["params"][name], dtype=dtype))
        for name in param_shapes(config)
    )
    return golden, config, params


def test_golden_forward(tmp_path):
    golden, config, params = load_golden(torch.float64)
    check_params(params, config)
    tokens = torch.tensor(golden["tokens"])
    expected = torch.tensor(golden["logits"], dtype=torch.float64)

    logits = forward_logits(params, config, tokens)
    assert torch.allclose(logits, expected, rtol=0, atol=1e-6)

    # Same numbers through a float32 checkpoint on disk.
    path = str(tmp_path / "golden")
    single = params_to(params, torch.float32)
    write_checkpoint(path, Checkpoint(config, single))
    loaded = read_checkpoint(path)
    logits = forward_logits(loaded.params, loaded.config, tokens)
    assert torch.allclose(logits.double(), expected, rtol=0, atol=1e-5)


def test_golden_srwkv():
    golden, config, params = load_golden(torch.float64)
    x = torch.tensor(golden["srwkv_input"], dtype=torch.float64)[None]
    expected = torch.tensor(golden["srwkv_output"], dtype=torch.float64)

    out = srwkv_forward(block_view(params, 0), x, config.spike_threshold)
    assert out.shape == (1, 8, 2)
    assert torch.allclose(out[0], expected, rtol=0, atol=1e-6)


def test_prefix_logits_are_causal(small_config):
    params = double_params(small_config)
    tokens = torch.tensor([1, 2, 3, 4, 5, 6, 7, 8])
    full = forward_logits(params, small_config, tokens)
    for n in (1, 4, 7):
        prefix = forward_logits(params, small_config, tokens[:n])
        assert torch.allclose(prefix, full[:n], atol=1e-12)


def test_batched_equals_single(small_config):
    params = double_params(small_config)
    batch = torch.tensor([[1, 2, 3, 4], [9, 8, 7, 6]])
    logits = forward_logits(params, small_config, batch)
    for row in range(2):
        single = forward_logits(params, small_config, batch[row])
        assert torch.allclose(logits[row], single, atol=1e-12)


def test_forward_rejects_bad_tokens(small_model):
    config, params = small_model.config, small_model.params
    with pytest.raises(InputDomainError):
        forward_logits(params, config, torch.tensor([], dtype=torch.long))
    with pytest.raises(InputDomainError):
        forward_logits(params, config, torch.zeros(13, dtype=torch.long))
    with pytest.raises(InputDomainError):
        forward_logits(params, config, torch.tensor([1, 64]))
    with pytest.raises(InputDomainError):
        forward_logits(params, config, torch.tensor([-1]))


def test_forward_does_not_modify_params(small_model):
    before = {k: v.clone() for k, v in small_model.params.items()}
    small_model.logits(torch.tensor([1, 2, 3]))
    for name, tensor in small_model.params.items():
        assert torch.equal(tensor, before[name])


def test_overflow_names_block(small_config):
    params = init_params(small_config, seed=0)
    params["blocks.1.ln2.bias"] = torch.full_like(
        params["blocks.1.ln2.bias"], float("inf")
    )
    with pytest.raises(NumericOverflowError) as e:
        forward_logits(params, small_config, torch.tensor([1, 2, 3]))
    assert e.value.block_index == 1


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=64, embed_dim=8, num_blocks=0, context_len=4)
    with pytest.raises(ConfigError):
        ModelConfig(
            vocab_size=64,
            embed_dim=8,
            num_blocks=1,
            context_len=4,
            task="classify",
        )
    with pytest.raises(ConfigError):
        ModelConfig(
            vocab_size=64,
            embed_dim=8,
            num_blocks=1,
            context_len=4,
            num_classes=2,
        )
    with pytest.raises(ConfigError):
        TaskKind.parse("translate")


def test_config_round_trip(classify_config):
    assert ModelConfig.from_dict(classify_config.to_dict()) == classify_config


def test_param_shapes_count(toy_config):
    shapes = param_shapes(toy_config)
    assert list(shapes)[0] == "input.embedding"
    assert list(shapes)[-1] == "output.head"
    assert shapes["blocks.2.srffn.key"] == (32, 128)
    assert count_params(toy_config) == sum(
        t.numel() for t in zero_params(toy_config).values()
    )


def test_check_params_names_bad_tensor(toy_config, toy_params):
    toy_params["blocks.1.srwkv.key"] = torch.zeros(32, 31)
    with pytest.raises(ModelIntegrityError) as e:
        check_params(toy_params, toy_config)
    assert e.value.tensor_name == "blocks.1.srwkv.key"

    del toy_params["blocks.1.srwkv.key"]
    with pytest.raises(ModelIntegrityError) as e:
        check_params(toy_params, toy_config)
    assert e.value.tensor_name == "blocks.1.srwkv.key"


def test_layer_norm_statistics():
    x = torch.randn(4, 7, 32, generator=torch.Generator().manual_seed(0))
    x = x.double() * 10
    out = layer_norm(x, torch.ones(32).double(), torch.zeros(32).double())
    assert torch.allclose(out.mean(-1), torch.zeros(4, 7).double(), atol=1e-9)
    assert torch.allclose(
        out.var(-1, unbiased=False), torch.ones(4, 7).double(), atol=1e-5
    )


def test_token_shift_and_first_wkv():
    x = torch.arange(12.0).reshape(1, 3, 4)
    shifted = token_shift(x)
    assert torch.equal(shifted[0, 0], torch.zeros(4))
    assert torch.equal(shifted[0, 1:], x[0, :2])

    k = torch.randn(1, 5, 4, dtype=torch.float64)
    v = torch.randn(1, 5, 4, dtype=torch.float64)
    out = wkv(torch.zeros(4).double(), torch.zeros(4).double(), k, v)
    # Position 0 has nothing to mix with.
    assert torch.allclose(out[0, 0], v[0, 0])


def test_classification_pool_ignores_padding(classify_config):
    params = double_params(classify_config)
    short = torch.tensor([3, 4, 5])
    long = torch.tensor([6, 7, 8, 9, 1])
    batch = torch.zeros(2, 5, dtype=torch.long)
    batch[0, :3] = short
    batch[1] = long

    pooled = classification_logits(
        params, classify_config, batch, torch.tensor([3, 5])
    )
    assert pooled.shape == (2, 2)
    assert torch.allclose(
        pooled[0], classification_logits(params, classify_config, short)
    )
    assert torch.allclose(
        pooled[1], classification_logits(params, classify_config, long)
    )


def test_generation_model_has_no_classification_head(small_model):
    with pytest.raises(InputDomainError):
        small_model.classify(torch.tensor([[1, 2]]), torch.tensor([2]))


def test_training_is_deterministic(small_config, corpus):
    class Counter:
        n = 0

        def update(self, k):
            self.n += k

    counter = Counter()
    kwargs = dict(epochs=2, seed=4, batch_size=4, steps_per_epoch=2)
    a = train_toy_checkpoint(small_config, corpus, counter=counter, **kwargs)
    b = train_toy_checkpoint(small_config, corpus, **kwargs)

    assert counter.n == 2
    check_params(a, small_config)
    for name in a:
        assert torch.equal(a[name], b[name])
    assert not any(t.requires_grad for t in a.values())


def test_training_classifier_runs(classify_config, sentiment_set):
    params = train_toy_checkpoint(
        classify_config, sentiment_set, epochs=1, seed=0, batch_size=2
    )
    check_params(params, classify_config)


def test_training_divergence_is_reported(small_config, corpus, monkeypatch):
    class NanLoss:
        @staticmethod
        def cross_entropy(logits, targets):
            return logits.sum() * float("nan")

    monkeypatch.setattr("tierquant.model.train.F", NanLoss)
    with pytest.raises(TrainingError) as e:
        train_toy_checkpoint(
            small_config, corpus, epochs=1, seed=0, batch_size=2
        )
    assert e.value.epoch == 0


def test_training_rejects_empty_dataset(small_config):
    with pytest.raises(InputDomainError):
        train_toy_checkpoint(
            small_config, torch.tensor([], dtype=torch.long), 1, 0
        )
