"""Forward pass: token ids to per-position logits."""
from dataclasses import dataclass

import torch

from tierquant.exceptions import InputDomainError

from .config import TaskKind
from .layers import attention_block, layer_norm
from .params import check_params


@dataclass
class SpikingLM:
    """A model is its configuration plus a parameter table.

    The forward pass is a pure function of ``(params, tokens)``; instances
    carry no state between calls and can be shared across threads.

    """

    config: object
    params: dict

    def validate(self):
        check_params(self.params, self.config)
        return self

    def logits(self, tokens):
        return forward_logits(self.params, self.config, tokens)

    def classify(self, batch, lengths):
        return classification_logits(self.params, self.config, batch, lengths)

    def with_params(self, params):
        return SpikingLM(self.config, params)


def check_tokens(tokens, config):
    if tokens.numel() == 0 or tokens.shape[-1] == 0:
        raise InputDomainError("Token sequence is empty")
    if tokens.shape[-1] > config.context_len:
        raise InputDomainError(
            f"Sequence length {tokens.shape[-1]} exceeds context_len "
            f"{config.context_len}"
        )
    if tokens.min() < 0 or tokens.max() >= config.vocab_size:
        raise InputDomainError(
            f"Token ids must lie in [0, {config.vocab_size})"
        )


def _as_batch(tokens):
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    if tokens.dim() == 1:
        return tokens[None, :], True
    return tokens, False


def hidden_states(params, config, tokens):
    """Residual stream after the output LayerNorm, ``[batch, seq, d]``."""
    x = params["input.embedding"][tokens]
    x = layer_norm(
        x, params["input.layer_norm.gain"], params["input.layer_norm.bias"]
    )
    for k in range(config.num_blocks):
        x = attention_block(params, k, x, config.spike_threshold)
    return layer_norm(
        x, params["output.layer_norm.gain"], params["output.layer_norm.bias"]
    )


def forward_logits(params, config, tokens):
    """Per-position logits.

    :param params: Parameter table (see :mod:`tierquant.model.params`).
    :param config: Model configuration.
    :param tokens: Token ids, ``[seq]`` or ``[batch, seq]``.
    :returns: Logits shaped ``[seq, out_dim]`` (or ``[batch, seq, out_dim]``
              for batched input).
    :rtype: torch.Tensor

    """
    tokens, single = _as_batch(tokens)
    check_tokens(tokens, config)
    logits = hidden_states(params, config, tokens) @ params["output.head"]
    return logits[0] if single else logits


def classification_logits(params, config, tokens, lengths=None):
    """Sequence-level logits: mean-pool the valid positions, then the head.

    Padding sits after the valid positions, so causality keeps it from
    touching them; ``lengths`` masks it out of the pool.

    """
    if config.task is not TaskKind.CLASSIFICATION:
        raise InputDomainError("Model does not carry a classification head")
    tokens, single = _as_batch(tokens)
    check_tokens(tokens, config)
    states = hidden_states(params, config, tokens)

    if lengths is None:
        pooled = states.mean(dim=1)
    else:
        lengths = torch.as_tensor(lengths, dtype=torch.long)
        if (lengths < 1).any():
            raise InputDomainError("Token sequence is empty")
        positions = torch.arange(tokens.shape[1])
        mask = (positions[None, :] < lengths[:, None]).to(states.dtype)
        pooled = (states * mask[:, :, None]).sum(dim=1)
        pooled = pooled / lengths[:, None].to(states.dtype)

    logits = pooled @ params["output.head"]
    return logits[0] if single else logits
