"""Parameter tables: tensor names, shapes and initializers.

Parameters are held in an ordered ``{name: torch.Tensor}`` mapping. Names are
dotted paths whose first components locate the owning block and module::

    input.embedding                     [vocab_size, embed_dim]
    input.layer_norm.{gain,bias}        [embed_dim]
    blocks.{k}.ln{1,2}.{gain,bias}      [embed_dim]
    blocks.{k}.srwkv.time_{decay,first,mix_k,mix_v,mix_r}
    blocks.{k}.srwkv.{key,value,receptance,output}
    blocks.{k}.srffn.time_mix_{k,r}
    blocks.{k}.srffn.{key,receptance,value}
    output.layer_norm.{gain,bias}
    output.head                         [embed_dim, out_dim]

Matrices are stored input-major: activations are row vectors and a layer is
``x @ W``.
"""
from collections import OrderedDict
import math

import torch

from tierquant.exceptions import ModelIntegrityError


SRWKV_VECTORS = (
    "time_decay",
    "time_first",
    "time_mix_k",
    "time_mix_v",
    "time_mix_r",
)
SRWKV_MATRICES = ("key", "value", "receptance", "output")
SRFFN_VECTORS = ("time_mix_k", "time_mix_r")


def block_prefix(k):
    return f"blocks.{k}"


def param_shapes(config):
    """Ordered ``{name: shape}`` table fully determined by the config.

    :param config: Model configuration.
    :type config: tierquant.model.ModelConfig
    :returns: Tensor names in canonical (checkpoint) order with their shapes.
    :rtype: OrderedDict

    """
    d = config.embed_dim
    h = config.ffn_hidden_dim
    shapes = OrderedDict()
    shapes["input.embedding"] = (config.vocab_size, d)
    shapes["input.layer_norm.gain"] = (d,)
    shapes["input.layer_norm.bias"] = (d,)

    for k in range(config.num_blocks):
        prefix = block_prefix(k)
        for ln in ("ln1", "ln2"):
            shapes[f"{prefix}.{ln}.gain"] = (d,)
            shapes[f"{prefix}.{ln}.bias"] = (d,)
        for name in SRWKV_VECTORS:
            shapes[f"{prefix}.srwkv.{name}"] = (d,)
        for name in SRWKV_MATRICES:
            shapes[f"{prefix}.srwkv.{name}"] = (d, d)
        for name in SRFFN_VECTORS:
            shapes[f"{prefix}.srffn.{name}"] = (d,)
        shapes[f"{prefix}.srffn.key"] = (d, h)
        shapes[f"{prefix}.srffn.receptance"] = (d, d)
        shapes[f"{prefix}.srffn.value"] = (h, d)

    shapes["output.layer_norm.gain"] = (d,)
    shapes["output.layer_norm.bias"] = (d,)
    shapes["output.head"] = (d, config.out_dim)
    return shapes


def count_params(config):
    return sum(math.prod(shape) for shape in param_shapes(config).values())


def zero_params(config, dtype=torch.float32):
    return OrderedDict(
        (name, torch.zeros(shape, dtype=dtype))
        for name, shape in param_shapes(config).items()
    )


def init_params(config, seed, dtype=torch.float32):
    """Random initialization used before training.

    Linear maps are drawn with unit-variance outputs so that LayerNorm-ed
    activations cross the spike threshold a reasonable fraction of the time;
    token-shift mixes and decays follow a ramp over channels.

    """
    generator = torch.Generator().manual_seed(seed)
    d = config.embed_dim
    ramp = torch.arange(d, dtype=torch.float64) / max(d - 1, 1)
    params = OrderedDict()

    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            t = torch.ones(shape, dtype=torch.float64)
        elif leaf == "bias":
            t = torch.zeros(shape, dtype=torch.float64)
        elif leaf == "time_decay":
            # Effective decay exp(time_decay) spans roughly [0.05, 3].
            t = -3.0 + 4.1 * ramp
        elif leaf == "time_first":
            t = torch.full(shape, math.log(0.3), dtype=torch.float64)
        elif leaf.startswith("time_mix"):
            t = 0.2 + 0.6 * ramp
        elif name == "input.embedding":
            t = torch.randn(shape, generator=generator, dtype=torch.float64)
        elif name == "output.head":
            t = torch.randn(shape, generator=generator, dtype=torch.float64)
            t = t * 0.1 / math.sqrt(shape[0])
        else:
            t = torch.randn(shape, generator=generator, dtype=torch.float64)
            t = t / math.sqrt(shape[0])
        params[name] = t.to(dtype)
    return params


def check_params(params, config):
    """Raise ModelIntegrityError naming the first tensor that is missing,
    unexpected or misshapen."""
    expected = param_shapes(config)
    for name, shape in expected.items():
        if name not in params:
            raise ModelIntegrityError(name, f"Tensor {name} is missing")
        actual = tuple(params[name].shape)
        if actual != tuple(shape):
            raise ModelIntegrityError(
                name,
                f"Tensor {name} has shape {actual}, expected {tuple(shape)}",
            )
    for name in params:
        if name not in expected:
            raise ModelIntegrityError(name, f"Unexpected tensor {name}")


def params_to(params, dtype):
    return OrderedDict(
        (name, tensor.detach().to(dtype)) for name, tensor in params.items()
    )
