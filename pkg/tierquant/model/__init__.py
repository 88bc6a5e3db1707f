from .config import DESCRIPTORS, ModelConfig, TaskKind
from .forward import (
    SpikingLM,
    classification_logits,
    forward_logits,
    hidden_states,
)
from .layers import layer_norm, srffn_forward, srwkv_forward, wkv
from .params import (
    check_params,
    count_params,
    init_params,
    param_shapes,
    zero_params,
)
from .spike import spike, surrogate, surrogate_grad
from .train import train_toy_checkpoint
