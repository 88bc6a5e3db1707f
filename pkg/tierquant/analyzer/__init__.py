from .hierarchy import (
    Hierarchy,
    ModuleId,
    attention_block_name,
    extract_hierarchy,
    memory_proportions,
    module_of,
)
from .sensitivity import (
    SensitivityProfile,
    UniformSweep,
    block_sensitivity_sweep,
    degradation,
    sweep_levels,
    uniform_attention_sweep,
)
