"""Block/module hierarchy of a model, with parameter counts."""
from collections import OrderedDict
import math
from typing import NamedTuple, Optional

import networkx as nx

from tierquant.constants import ATTENTION_PREFIX, INPUT_BLOCK, OUTPUT_BLOCK
from tierquant.exceptions import ModelIntegrityError
from tierquant.model.params import check_params, param_shapes


ROOT = "model"


class ModuleId(NamedTuple):
    block: str
    module: Optional[str]


def attention_block_name(k):
    return f"{ATTENTION_PREFIX}.{k}"


def is_attention_block(block):
    return block.startswith(ATTENTION_PREFIX + ".")


def module_of(tensor_name):
    """Map a parameter name to the module that owns it."""
    parts = tensor_name.split(".")
    if parts[0] in (INPUT_BLOCK, OUTPUT_BLOCK) and len(parts) >= 2:
        return ModuleId(parts[0], parts[1])
    if parts[0] == "blocks" and len(parts) >= 3:
        block = attention_block_name(int(parts[1]))
        if parts[2] in ("ln1", "ln2"):
            return ModuleId(block, "layer_norm")
        return ModuleId(block, parts[2])
    raise ModelIntegrityError(tensor_name, f"Unplaceable tensor {tensor_name}")


class Hierarchy(nx.DiGraph):
    """A tree: ``model`` -> blocks -> modules.

    Block nodes are block names (``"input"``, ``"attention.0"``, ...,
    ``"output"``); module nodes are :class:`ModuleId` tuples carrying
    ``param_count`` and ``tensor_names``. Children keep insertion order, which
    is the order the search visits them in.

    """

    @classmethod
    def from_shapes(cls, shapes):
        """Build from an ordered ``{tensor_name: shape}`` table."""
        G = cls()
        G.add_node(ROOT, kind="root")
        for name, shape in shapes.items():
            module_id = module_of(name)
            if module_id.block not in G:
                G.add_node(module_id.block, kind="block")
                G.add_edge(ROOT, module_id.block)
            if module_id not in G:
                G.add_node(
                    module_id, kind="module", param_count=0, tensor_names=[]
                )
                G.add_edge(module_id.block, module_id)
            G.nodes[module_id]["param_count"] += math.prod(shape)
            G.nodes[module_id]["tensor_names"].append(name)
        return G

    @classmethod
    def from_config(cls, config):
        """Counts-only hierarchy; no weights needed."""
        return cls.from_shapes(param_shapes(config))

    def blocks(self):
        return list(self.successors(ROOT))

    def attention_blocks(self):
        return [b for b in self.blocks() if is_attention_block(b)]

    def modules(self, block=None):
        if block is not None:
            return list(self.successors(block))
        return [m for b in self.blocks() for m in self.successors(b)]

    def param_count(self, node):
        """Parameters of a module node, a block, or the whole model."""
        if node == ROOT:
            return sum(self.param_count(b) for b in self.blocks())
        data = self.nodes[node]
        if data["kind"] == "module":
            return data["param_count"]
        return sum(self.param_count(m) for m in self.successors(node))

    def total_params(self):
        return self.param_count(ROOT)

    def tensor_names(self, module_id):
        return list(self.nodes[module_id]["tensor_names"])

    def entries(self):
        return [
            {
                "id": module_id,
                "param_count": self.param_count(module_id),
                "tensor_names": self.tensor_names(module_id),
            }
            for module_id in self.modules()
        ]

    def to_dict(self):
        return {
            "total_params": self.total_params(),
            "blocks": [
                {
                    "block": block,
                    "param_count": self.param_count(block),
                    "modules": [
                        {
                            "module": m.module,
                            "param_count": self.param_count(m),
                            "tensors": self.tensor_names(m),
                        }
                        for m in self.modules(block)
                    ],
                }
                for block in self.blocks()
            ],
        }


def extract_hierarchy(params, config):
    """Hierarchy of a concrete model.

    :raises ModelIntegrityError: naming the first tensor that disagrees with
                                 ``config``.

    """
    check_params(params, config)
    shapes = OrderedDict(
        (name, tuple(tensor.shape)) for name, tensor in params.items()
    )
    return Hierarchy.from_shapes(shapes)


def memory_proportions(hierarchy):
    """Share of the full-precision footprint held by each block."""
    total = hierarchy.total_params()
    if total <= 0:
        raise ModelIntegrityError(ROOT, "Hierarchy has no parameters")
    return OrderedDict(
        (block, hierarchy.param_count(block) / total)
        for block in hierarchy.blocks()
    )
