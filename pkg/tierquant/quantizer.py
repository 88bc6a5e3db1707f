"""Simulated (quantize-dequantize) uniform weight quantization and memory
accounting.

A precision level is a plain ``int`` number of bits in ``[2, 32]``; 32 means
"not quantized". An :class:`Assignment` maps every module of a
:class:`tierquant.analyzer.Hierarchy` to a precision level.
"""
from collections import OrderedDict
import logging

import torch

from .constants import FULL_PRECISION, MIN_BITS
from .exceptions import AssignmentError, ConfigError


logger = logging.getLogger(__name__)


def check_bits(bits):
    if isinstance(bits, bool) or int(bits) != bits:
        raise ConfigError(f"Bit-width {bits!r} is not an integer")
    bits = int(bits)
    if not MIN_BITS <= bits <= FULL_PRECISION:
        raise ConfigError(
            f"Bit-width {bits} outside [{MIN_BITS}, {FULL_PRECISION}]"
        )
    return bits


def quantization_scale(tensor, bits):
    """Step between adjacent grid points: max|t| / (2^(bits-1) - 1)."""
    peak = tensor.detach().abs().max().item() if tensor.numel() else 0.0
    return peak / (2 ** (check_bits(bits) - 1) - 1)


def quantize_tensor(tensor, bits):
    """Symmetric per-tensor quantization, returned dequantized.

    ``out = clamp(round(t / scale), -q, q) * scale`` with
    ``q = 2^(bits-1) - 1`` and ``scale = max|t| / q``. The grid has no
    ``-2^(bits-1)`` code, so it is symmetric and the element of largest
    magnitude maps back onto itself; that makes re-quantizing at the same
    level reproduce the output bit for bit (up to 24 bits, beyond which
    float32 cannot resolve the grid anyway).

    :param tensor: Finite tensor of any shape.
    :type tensor: torch.Tensor
    :param bits: Precision level; 32 returns an unchanged copy.
    :type bits: int
    :rtype: torch.Tensor

    """
    bits = check_bits(bits)
    if bits == FULL_PRECISION or tensor.numel() == 0:
        return tensor.detach().clone()
    peak = tensor.detach().abs().max().item()
    if peak == 0:
        return tensor.detach().clone()

    qmax = 2 ** (bits - 1) - 1
    values = tensor.detach().to(torch.float64)
    # (values * qmax) and (codes * peak) are exact in float64.
    codes = torch.clamp(torch.round(values * qmax / peak), -qmax, qmax)
    return (codes * peak / qmax).to(tensor.dtype)


class Assignment:
    """Bit-widths for every module: a default plus block/module overrides.

    Resolution precedence is module override, then block override, then the
    default. Assignments are immutable; the ``with_*`` methods return
    modified copies.

    :param default_bits: Precision of every module without an override.
    :type default_bits: int
    :param overrides: ``{(block, module_or_None): bits}``; a ``None`` module
                      overrides the whole block.
    :type overrides: dict

    """

    def __init__(self, default_bits=FULL_PRECISION, overrides=None):
        self.default_bits = check_bits(default_bits)
        self.overrides = {}
        for (block, module), bits in (overrides or {}).items():
            self.overrides[(block, module)] = check_bits(bits)

    @classmethod
    def uniform(cls, bits):
        return cls(default_bits=bits)

    def with_block(self, block, bits):
        return Assignment(
            self.default_bits, {**self.overrides, (block, None): bits}
        )

    def with_module(self, block, module, bits):
        return Assignment(
            self.default_bits, {**self.overrides, (block, module): bits}
        )

    def resolve(self, module_id):
        block, module = module_id
        if (block, module) in self.overrides:
            return self.overrides[(block, module)]
        if (block, None) in self.overrides:
            return self.overrides[(block, None)]
        return self.default_bits

    def validate(self, hierarchy):
        for block, module in self.overrides:
            if block not in hierarchy.blocks():
                raise AssignmentError(f"Unknown block {block!r}")
            if module is not None and (block, module) not in hierarchy:
                raise AssignmentError(
                    f"Unknown module {module!r} in block {block!r}"
                )
        return self

    def resolved(self, hierarchy):
        """``{ModuleId: bits}`` in hierarchy order."""
        self.validate(hierarchy)
        return OrderedDict(
            (module_id, self.resolve(module_id))
            for module_id in hierarchy.modules()
        )

    def key(self, hierarchy):
        """Hashable summary: two assignments with equal keys quantize a model
        identically."""
        return tuple(self.resolved(hierarchy).values())

    def to_dict(self):
        return {
            "default_bits": self.default_bits,
            "overrides": [
                {"block": block, "module": module, "bits": bits}
                for (block, module), bits in sorted(
                    self.overrides.items(),
                    key=lambda item: (item[0][0], item[0][1] or ""),
                )
            ],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            overrides = {
                (o["block"], o.get("module")): o["bits"]
                for o in d.get("overrides", [])
            }
            return cls(d["default_bits"], overrides)
        except (KeyError, TypeError, AttributeError) as e:
            raise AssignmentError(f"Malformed assignment: {e}")

    def __eq__(self, other):
        return (
            isinstance(other, Assignment)
            and self.default_bits == other.default_bits
            and self.overrides == other.overrides
        )

    def __hash__(self):
        return hash((self.default_bits, frozenset(self.overrides.items())))

    def __repr__(self):
        return f"Assignment({self.to_dict()})"


def apply_assignment(params, hierarchy, assignment):
    """Quantize every module at its resolved precision.

    Returns a new parameter table; ``params`` is not modified. LayerNorm
    tensors are a module of their block like any other, so without a
    module-level override they follow the block's precision.

    """
    resolved = assignment.resolved(hierarchy)
    quantized = OrderedDict()
    for module_id, bits in resolved.items():
        for name in hierarchy.tensor_names(module_id):
            if name not in params:
                raise AssignmentError(
                    f"Hierarchy names tensor {name} absent from the model"
                )
            quantized[name] = quantize_tensor(params[name], bits)
    # Keep the parameter table's own ordering.
    return OrderedDict((name, quantized[name]) for name in params)


def memory_bits(hierarchy, assignment):
    return sum(
        hierarchy.param_count(module_id) * bits
        for module_id, bits in assignment.resolved(hierarchy).items()
    )


def memory_footprint(hierarchy, assignment):
    """Weight memory in bytes: sum of param_count * bits / 8, no padding."""
    return memory_bits(hierarchy, assignment) / 8
