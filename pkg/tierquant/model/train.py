"""Minimal trainer that manufactures small pre-trained checkpoints.

Search and analysis never call into this module; it exists so that the
quantization workbench has realistic weights to work on.
"""
from collections import OrderedDict
import logging
import math

import torch
import torch.nn.functional as F

from tierquant.data import pad_batch
from tierquant.exceptions import (
    InputDomainError,
    NumericOverflowError,
    TrainingError,
)

from .config import TaskKind
from .forward import classification_logits, forward_logits
from .params import init_params


logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 32
DEFAULT_LEARNING_RATE = 3e-3
DEFAULT_STEPS_PER_EPOCH = 20
MAX_GRAD_NORM = 1.0


def _classification_batches(dataset, batch_size, generator):
    order = torch.randperm(len(dataset), generator=generator).tolist()
    for start in range(0, len(order), batch_size):
        rows = order[start : start + batch_size]
        tokens, lengths = pad_batch([dataset.sequences[i] for i in rows])
        labels = torch.tensor(
            [dataset.labels[i] for i in rows], dtype=torch.long
        )
        yield tokens, lengths, labels


def _generation_batches(ids, config, batch_size, steps, generator):
    window = min(config.context_len, len(ids) - 1)
    high = len(ids) - window
    for _ in range(steps):
        starts = torch.randint(0, high, (batch_size,), generator=generator)
        rows = torch.stack([ids[s : s + window + 1] for s in starts.tolist()])
        yield rows[:, :-1], rows[:, 1:]


def train_toy_checkpoint(
    config,
    dataset,
    epochs,
    seed,
    batch_size=DEFAULT_BATCH_SIZE,
    learning_rate=DEFAULT_LEARNING_RATE,
    steps_per_epoch=DEFAULT_STEPS_PER_EPOCH,
    counter=None,
):
    """Train a model from scratch, deterministically for a fixed seed.

    :param config: Model configuration; its task picks the loss.
    :type config: tierquant.model.ModelConfig
    :param dataset: A :class:`tierquant.data.ClassificationSet` for a
                    classification head, a 1-D tensor of token ids for a
                    generation head.
    :param epochs: Number of passes (classification) or of
                   ``steps_per_epoch``-batch rounds (generation).
    :type epochs: int
    :param seed: Seed for initialization and batch order.
    :type seed: int
    :param counter: Optional progress bar, advanced once per epoch.
    :returns: Trained float32 parameter table.
    :rtype: OrderedDict

    """
    if len(dataset) == 0:
        raise InputDomainError("Training dataset is empty")
    if config.task is TaskKind.GENERATION and len(dataset) < 2:
        raise InputDomainError("A corpus needs at least two tokens")

    generator = torch.Generator().manual_seed(seed)
    params = init_params(config, seed)
    for tensor in params.values():
        tensor.requires_grad_(True)
    optimizer = torch.optim.Adam(params.values(), lr=learning_rate)

    for epoch in range(epochs):
        if config.task is TaskKind.CLASSIFICATION:
            batches = (
                (
                    classification_logits(params, config, tokens, lengths),
                    labels,
                )
                for tokens, lengths, labels in _classification_batches(
                    dataset, batch_size, generator
                )
            )
        else:
            batches = (
                (forward_logits(params, config, inputs), targets)
                for inputs, targets in _generation_batches(
                    dataset, config, batch_size, steps_per_epoch, generator
                )
            )

        total, n_batches = 0.0, 0
        try:
            for logits, targets in batches:
                loss = F.cross_entropy(
                    logits.reshape(-1, logits.shape[-1]), targets.reshape(-1)
                )
                if not torch.isfinite(loss):
                    raise TrainingError(epoch)
                optimizer.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(
                    params.values(), MAX_GRAD_NORM
                )
                optimizer.step()
                total += loss.item()
                n_batches += 1
        except NumericOverflowError:
            raise TrainingError(epoch)

        mean_loss = total / max(n_batches, 1)
        if not math.isfinite(mean_loss):
            raise TrainingError(epoch)
        logger.info("epoch %d: mean loss %.4f", epoch, mean_loss)
        if counter is not None:
            counter.update(1)

    return OrderedDict(
        (name, tensor.detach().clone()) for name, tensor in params.items()
    )
