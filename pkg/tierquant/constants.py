"""Reusable constants for tierquant."""


# Bit-width that means "leave the tensor alone".
FULL_PRECISION = 32
MIN_BITS = 2

# Precision ladder scanned by every search phase, highest first.
DEFAULT_LADDER = (16, 14, 12, 10, 8, 6, 4)

DEFAULT_ALPHA = 0.5
SPIKE_THRESHOLD = 1.0
LAYER_NORM_EPS = 1e-5

# Constraint budgets are written in decimal megabytes.
MB = 10 ** 6

# Slack applied when comparing a candidate against its budgets.
CONSTRAINT_SLACK = 1e-12

# Versioned on-disk formats.
CHECKPOINT_FORMAT = "qslm-ckpt-1"
TRACE_SCHEMA = "qslm-trace-1"
REPORT_SCHEMA = "qslm-report-1"

# Environment variable capping worker threads.
THREADS_ENV = "QSLM_THREADS"

# Blocks and attention sub-blocks (modules) of the hierarchy.
INPUT_BLOCK = "input"
OUTPUT_BLOCK = "output"
ATTENTION_PREFIX = "attention"
ATTENTION_MODULES = ("layer_norm", "srwkv", "srffn")
