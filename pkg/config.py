"""Default values for the napkit commands.

Upper-case variables are read at start-up and used as option defaults.
CLI arguments override them.
"""

OUTPUT_DIR = "napkit_output"
"""Directory for head parameters, curves, tables and the log file."""

LOG_FILE = "log.txt"
"""Name of the log file in OUTPUT_DIR."""

LEARNING_RATE = 1e-4
EPSILON = 1e-6
"""Soft rank smoothing for the scc and ep_al losses."""

ALPHA = 0.0
"""Decorrelation weight of the ep_al loss."""

BATCH_SIZE = 32
MAX_EPOCHS = 30
EVALS_PER_EPOCH = 10
"""Validation Spearman is computed this many times per epoch.

Training stops when it has not improved for a whole epoch.
"""

VARIANT = "3L-SM"
"""Head layout, one of
2L-Tanh, 2L-SM, 2L-LN-Exp, 2L-LN-Tanh,
3L-ReLU, 3L-Tanh, 3L-LN-Exp, 3L-LN-Tanh, 3L-SM.
"""

POOLING = "average"
"""average or attentive"""

HIDDEN_WIDTH = 64
SEED = 0
