"""Attention-block layers: LayerNorm, SRWKV token mixing and SRFFN.

All layers take activations shaped ``[batch, seq, embed_dim]`` and work for
any floating dtype, so the same code serves float32 inference, float64
reference checks and autograd training.
"""
import torch
import torch.nn.functional as F

from tierquant.constants import LAYER_NORM_EPS, SPIKE_THRESHOLD
from tierquant.exceptions import NumericOverflowError

from .spike import spike


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps) * gain + bias


def token_shift(x):
    """Activations of the previous position; zeros before the first one."""
    return F.pad(x, (0, 0, 1, 0))[..., :-1, :]


def mix(x, shifted, amount):
    return x * amount + shifted * (1 - amount)


def wkv(time_decay, time_first, k, v):
    """Exponentially weighted key/value mix over positions <= t.

    wkv_t = (sum_{i<t} e^{-(t-1-i)w + k_i} v_i + e^{u + k_t} v_t)
            / (sum_{i<t} e^{-(t-1-i)w + k_i} + e^{u + k_t})

    with ``w = exp(time_decay)`` and ``u = time_first``. The ratio is a
    softmax over i of the exponents, evaluated with max subtraction, and
    future positions are masked with -inf so position t never sees i > t.

    """
    seq_len = k.shape[-2]
    positions = torch.arange(seq_len)
    lag = (positions[:, None] - 1 - positions[None, :]).to(k.dtype)
    decay = torch.exp(time_decay)

    # exponents[n, t, i, c]
    exponents = k[:, None, :, :] - lag[:, :, None] * decay
    current = (time_first + k)[:, :, None, :]
    diagonal = torch.eye(seq_len, dtype=torch.bool)[:, :, None]
    future = torch.ones(seq_len, seq_len, dtype=torch.bool).triu(1)
    exponents = torch.where(diagonal, current, exponents)
    exponents = exponents.masked_fill(future[:, :, None], float("-inf"))

    weights = torch.softmax(exponents, dim=2)
    return (weights * v[:, None, :, :]).sum(dim=2)


def srwkv_forward(block, x, threshold=SPIKE_THRESHOLD, block_index=None):
    """Spiking receptance-weighted key/value token mixing.

    :param block: Parameters of one attention block keyed relative to the
                  block (``"srwkv.key"``, ...), see :func:`block_view`.
    :type block: dict
    :param x: LayerNorm-ed activations, ``[batch, seq, embed_dim]``.
    :type x: torch.Tensor
    :returns: Mixed activations with the same shape as ``x``.
    :rtype: torch.Tensor

    """
    shifted = token_shift(x)
    k = mix(x, shifted, block["srwkv.time_mix_k"]) @ block["srwkv.key"]
    v = mix(x, shifted, block["srwkv.time_mix_v"]) @ block["srwkv.value"]
    r = mix(x, shifted, block["srwkv.time_mix_r"])
    r = r @ block["srwkv.receptance"]

    weighted = wkv(block["srwkv.time_decay"], block["srwkv.time_first"], k, v)
    if not torch.isfinite(weighted).all():
        raise NumericOverflowError(block_index)

    # sigmoid(r) never reaches a threshold >= 1, so receptance fires on its
    # pre-activation.
    gated = spike(r, threshold) * spike(weighted, threshold)
    return gated @ block["srwkv.output"]


def srffn_forward(block, x, threshold=SPIKE_THRESHOLD):
    shifted = token_shift(x)
    hidden = mix(x, shifted, block["srffn.time_mix_k"]) @ block["srffn.key"]
    hidden = spike(hidden, threshold)
    gate = mix(x, shifted, block["srffn.time_mix_r"])
    gate = gate @ block["srffn.receptance"]
    return torch.sigmoid(gate) * (hidden @ block["srffn.value"])


def block_view(params, k):
    """Parameters of attention block ``k`` with the ``blocks.{k}.`` prefix
    stripped."""
    prefix = f"blocks.{k}."
    return {
        name[len(prefix):]: tensor
        for name, tensor in params.items()
        if name.startswith(prefix)
    }


def attention_block(params, k, x, threshold=SPIKE_THRESHOLD):
    block = block_view(params, k)
    x = x + srwkv_forward(
        block,
        layer_norm(x, block["ln1.gain"], block["ln1.bias"]),
        threshold,
        block_index=k,
    )
    x = x + srffn_forward(
        block, layer_norm(x, block["ln2.gain"], block["ln2.bias"]), threshold
    )
    if not torch.isfinite(x).all():
        raise NumericOverflowError(k)
    return x
