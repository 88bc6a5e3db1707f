"""Post-training quantization search for spiking language models."""
from .analyzer import Hierarchy, extract_hierarchy, memory_proportions
from .build import Workbench
from .config import RunConfig
from .model import ModelConfig, SpikingLM, TaskKind
from .quantizer import Assignment, apply_assignment, memory_footprint
from .search import TieredSearch, run_tiered_search, select_final

__version__ = "0.1.0"
