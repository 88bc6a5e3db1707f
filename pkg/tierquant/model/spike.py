"""Single-timestep Heaviside spikes with an arctan surrogate gradient."""
import math

import torch

from tierquant.constants import SPIKE_THRESHOLD
from tierquant.exceptions import ConfigError


def surrogate(x, threshold=SPIKE_THRESHOLD):
    """Smooth step: arctan(pi * (x - threshold)) / pi + 1/2."""
    return torch.atan(math.pi * (x - threshold)) / math.pi + 0.5


def surrogate_grad(x, threshold=SPIKE_THRESHOLD):
    """Derivative of :func:`surrogate`: 1 / (1 + (pi * (x - threshold))^2)."""
    return 1.0 / (1.0 + (math.pi * (x - threshold)) ** 2)


class _ArctanSpike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, threshold):
        ctx.save_for_backward(x)
        ctx.threshold = threshold
        return (x >= threshold).to(x.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (x,) = ctx.saved_tensors
        return grad_output * surrogate_grad(x, ctx.threshold), None


def spike(x, threshold=SPIKE_THRESHOLD):
    """Binary spikes: out[i] = 1 iff x[i] >= threshold.

    Forward is the exact Heaviside step; when ``x`` requires grad the backward
    pass uses :func:`surrogate_grad`.

    """
    if threshold <= 0:
        raise ConfigError("Spike threshold must be positive")
    return _ArctanSpike.apply(x, threshold)
