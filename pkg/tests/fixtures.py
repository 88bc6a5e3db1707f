import threading

import pytest
import torch

from tierquant.analyzer import Hierarchy, extract_hierarchy
from tierquant.constants import INPUT_BLOCK, OUTPUT_BLOCK
from tierquant.data import ClassificationSet, Vocab, tokenize
from tierquant.model import ModelConfig, SpikingLM, TaskKind, init_params
from tierquant.quantizer import memory_footprint

from .constants import (
    SENTENCES,
    TOY_BLOCKS,
    TOY_CONTEXT,
    TOY_DIM,
    TOY_VOCAB,
)


class ScriptedProbe:
    """Stands in for a model: performance is a function of the resolved
    assignment, memory is the real footprint."""

    def __init__(self, hierarchy, perf_fn):
        self.hierarchy = hierarchy
        self.perf_fn = perf_fn
        self.calls = []
        self._lock = threading.Lock()

    def test(self, assignment):
        resolved = assignment.resolved(self.hierarchy)
        with self._lock:
            self.calls.append(assignment.key(self.hierarchy))
        return (
            self.perf_fn(resolved),
            memory_footprint(self.hierarchy, assignment),
        )


def tolerance_probe(hierarchy, tolerances, good=0.9, bad=0.5):
    """Performs (``good``) only while every module stays at or above its
    tolerance; ``tolerances`` is keyed by block for input/output and by
    module name inside attention blocks."""

    def tolerance(module_id):
        if module_id.block in (INPUT_BLOCK, OUTPUT_BLOCK):
            return tolerances[module_id.block]
        return tolerances[module_id.module]

    def perf(resolved):
        ok = all(bits >= tolerance(m) for m, bits in resolved.items())
        return good if ok else bad

    return ScriptedProbe(hierarchy, perf)


def scripted_hierarchy_for(num_blocks):
    return Hierarchy.from_config(
        ModelConfig(
            vocab_size=16, embed_dim=4, num_blocks=num_blocks, context_len=4
        )
    )


@pytest.fixture()
def toy_config():
    return ModelConfig(
        vocab_size=TOY_VOCAB,
        embed_dim=TOY_DIM,
        num_blocks=TOY_BLOCKS,
        context_len=TOY_CONTEXT,
    )


@pytest.fixture()
def toy_params(toy_config):
    return init_params(toy_config, seed=0)


@pytest.fixture()
def toy_hierarchy(toy_params, toy_config):
    return extract_hierarchy(toy_params, toy_config)


@pytest.fixture()
def small_config():
    return ModelConfig(
        vocab_size=TOY_VOCAB, embed_dim=16, num_blocks=2, context_len=12
    )


@pytest.fixture()
def small_model(small_config):
    return SpikingLM(small_config, init_params(small_config, seed=1))


@pytest.fixture()
def scripted_hierarchy():
    return scripted_hierarchy_for(2)


@pytest.fixture()
def sentiment_vocab():
    return Vocab.from_text("".join(text for text, _ in SENTENCES))


@pytest.fixture()
def sentiment_set(sentiment_vocab):
    return ClassificationSet(
        [tokenize(text, sentiment_vocab) for text, _ in SENTENCES],
        [label for _, label in SENTENCES],
    )


@pytest.fixture()
def classify_config(sentiment_vocab):
    return ModelConfig(
        vocab_size=len(sentiment_vocab),
        embed_dim=16,
        num_blocks=2,
        context_len=40,
        task=TaskKind.CLASSIFICATION,
        num_classes=2,
    )


@pytest.fixture()
def corpus():
    generator = torch.Generator().manual_seed(7)
    return torch.randint(0, TOY_VOCAB, (40,), generator=generator)
