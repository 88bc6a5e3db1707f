"""Model configuration: every tensor shape is derived from these numbers."""
from dataclasses import asdict, dataclass
from enum import Enum

from tierquant.constants import SPIKE_THRESHOLD
from tierquant.exceptions import ConfigError


class TaskKind(Enum):
    CLASSIFICATION = "classify"
    GENERATION = "generate"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for kind in cls:
            if value in (kind.value, kind.name.lower(), kind.name):
                return kind
        raise ConfigError(f"Unknown task {value!r}: use classify or generate")


@dataclass(frozen=True)
class ModelConfig:
    """Shape and head description of a spiking language model.

    :param vocab_size: Number of token ids, including the reserved unknown id.
    :param embed_dim: Width of the residual stream.
    :param num_blocks: Number of attention blocks (B).
    :param ffn_hidden_dim: Hidden width of SRFFN; ``4 * embed_dim`` if None.
    :param context_len: Maximum sequence length accepted by the model.
    :param task: Which head the model carries.
    :param num_classes: Output width of a classification head.

    """

    vocab_size: int
    embed_dim: int
    num_blocks: int
    context_len: int
    ffn_hidden_dim: int = None
    spike_threshold: float = SPIKE_THRESHOLD
    task: TaskKind = TaskKind.GENERATION
    num_classes: int = None

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind.parse(self.task))
        if self.ffn_hidden_dim is None:
            object.__setattr__(self, "ffn_hidden_dim", 4 * self.embed_dim)

        if self.num_blocks < 1:
            raise ConfigError("A model needs at least one attention block")
        if self.embed_dim < 1 or self.ffn_hidden_dim < 1:
            raise ConfigError("embed_dim and ffn_hidden_dim must be positive")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be at least 2")
        if self.context_len < 1:
            raise ConfigError("context_len must be positive")
        if self.spike_threshold <= 0:
            raise ConfigError("spike_threshold must be positive")

        if self.task is TaskKind.CLASSIFICATION:
            if self.num_classes is None or self.num_classes < 2:
                raise ConfigError(
                    "A classification head needs num_classes >= 2"
                )
        elif self.num_classes is not None:
            raise ConfigError(
                "A generation head is tied to vocab_size; drop num_classes"
            )

    @property
    def out_dim(self):
        if self.task is TaskKind.CLASSIFICATION:
            return self.num_classes
        return self.vocab_size

    def to_dict(self):
        d = asdict(self)
        d["task"] = self.task.value
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"Invalid model config: {e}")


# Counts-only descriptor of the published 216M-parameter model: 18 blocks of
# width 768 over a 50277-token vocabulary with a generation head.
SPIKEGPT_216M = ModelConfig(
    vocab_size=50277,
    embed_dim=768,
    num_blocks=18,
    context_len=1024,
    ffn_hidden_dim=3072,
    task=TaskKind.GENERATION,
)

DESCRIPTORS = {"spikegpt-216m": SPIKEGPT_216M}
