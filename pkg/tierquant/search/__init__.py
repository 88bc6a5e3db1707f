from .tiered import TieredSearch, check_ladder, run_tiered_search
from .trace import (
    Candidate,
    Phase,
    SearchTrace,
    alpha_sweep,
    select_final,
)
