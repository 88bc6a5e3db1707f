"""Run configuration.

Precedence, lowest first: dataclass defaults, a JSON document (``--config``),
the ``QSLM_THREADS`` cap, then command-line flags.
"""
from dataclasses import asdict, dataclass, fields, replace
import logging

from .constants import DEFAULT_ALPHA, DEFAULT_LADDER, MB
from .data import CORPUS_FIXTURE, SENTIMENT_FIXTURE
from .evaluator import Constraints
from .exceptions import ConfigError
from .io import read_json
from .model.config import TaskKind
from .search.tiered import check_ladder
from .utils import resolve_threads


logger = logging.getLogger(__name__)

# Published constraint cases: (task, const_a in points, const_m in MB).
CONSTRAINT_CASES = {
    "case-a1": (TaskKind.CLASSIFICATION, 2.0, 400),
    "case-a2": (TaskKind.CLASSIFICATION, 5.0, 400),
    "case-a3": (TaskKind.CLASSIFICATION, 5.0, 420),
    "case-b1": (TaskKind.GENERATION, 1.0, 400),
    "case-b2": (TaskKind.GENERATION, 4.0, 400),
    "case-b3": (TaskKind.GENERATION, 4.0, 420),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a workbench command needs besides its positional paths.

    ``const_a`` is in accuracy points (2.0 means 2%) for classification and
    in perplexity points for generation. The memory budget is
    ``const_m_bytes`` when given, else ``const_m_fraction`` of the baseline
    footprint, else the baseline footprint itself.

    """

    task: TaskKind = TaskKind.CLASSIFICATION
    checkpoint: str = None
    dataset: str = None
    ladder: tuple = DEFAULT_LADDER
    const_a: float = 2.0
    const_m_bytes: float = None
    const_m_fraction: float = None
    alpha: float = DEFAULT_ALPHA
    alpha_sweep: tuple = None
    greedy_stop: bool = False
    uniform_attention: bool = False
    seed: int = 0
    output_dir: str = "out"
    threads: int = None
    case: str = None
    # Trainer
    embed_dim: int = 32
    num_blocks: int = 3
    context_len: int = 64
    ffn_hidden_dim: int = None
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 3e-3
    steps_per_epoch: int = 20
    holdout_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind.parse(self.task))
        object.__setattr__(self, "ladder", tuple(check_ladder(self.ladder)))
        if self.alpha_sweep is not None:
            object.__setattr__(self, "alpha_sweep", tuple(self.alpha_sweep))
            if any(a < 0 for a in self.alpha_sweep):
                raise ConfigError("alpha values must be >= 0")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.const_a is not None and self.const_a < 0:
            raise ConfigError("const_a must be >= 0")
        if self.const_m_bytes is not None and self.const_m_bytes <= 0:
            raise ConfigError("const_m_bytes must be > 0")
        if self.const_m_fraction is not None and self.const_m_fraction <= 0:
            raise ConfigError("const_m_fraction must be > 0")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.case is not None and self.case not in CONSTRAINT_CASES:
            raise ConfigError(
                f"Unknown case {self.case!r}: choose from "
                f"{', '.join(sorted(CONSTRAINT_CASES))}"
            )

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"Unknown config fields: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"Invalid run config: {e}")

    @classmethod
    def from_json(cls, path):
        d = read_json(path)
        if not isinstance(d, dict):
            raise ConfigError(f"{path} must hold a JSON object")
        return cls.from_dict(d)

    def merged(self, **overrides):
        """Copy with every non-None override applied."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides)

    def with_case(self):
        """Apply the ``case`` preset's task and budgets."""
        if self.case is None:
            return self
        task, const_a, const_m = CONSTRAINT_CASES[self.case]
        return replace(
            self, task=task, const_a=const_a, const_m_bytes=const_m * MB
        )

    def resolved_threads(self):
        return resolve_threads(self.threads)

    def dataset_path(self):
        if self.dataset is not None:
            return self.dataset
        if self.task is TaskKind.CLASSIFICATION:
            return SENTIMENT_FIXTURE
        return CORPUS_FIXTURE

    def mem_budget(self, baseline_mem):
        if self.const_m_bytes is not None:
            return self.const_m_bytes
        if self.const_m_fraction is not None:
            return self.const_m_fraction * baseline_mem
        return baseline_mem

    def constraints(self, baseline_mem):
        return Constraints.from_points(
            self.const_a, self.mem_budget(baseline_mem), self.task
        )

    def to_dict(self):
        d = asdict(self)
        d["task"] = self.task.value
        d["ladder"] = list(self.ladder)
        if self.alpha_sweep is not None:
            d["alpha_sweep"] = list(self.alpha_sweep)
        return d


def load_run_config(path=None, **overrides):
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    config = RunConfig.from_json(path) if path else RunConfig()
    config = config.merged(**overrides).with_case()
    logger.debug("Run config: %s", config.to_dict())
    return config
