"""Configuration settings for chaossync."""

import os

# Logging configuration
LOG_LEVEL = 'INFO'

# Integrator defaults
DEFAULT_DT = 1e-3
DEFAULT_T_END = 10.0
DEFAULT_RECORD_STRIDE = 10

# Abort a run once any state component grows past this magnitude
DIVERGENCE_LIMIT = 1e6

# Controller defaults
DEFAULT_POLICY = 'even'
DEFAULT_GAIN = 1.0
DEFAULT_VARIANT = 'full'

# Analysis / export
DEFAULT_SETTLING_THRESHOLD = 1e-3
CSV_SIGNIFICANT_DIGITS = 9

# Output location
OUTPUT_ENV_VAR = 'CHAOSSYNC_OUT'
DEFAULT_OUTPUT_DIRNAME = 'chaossync-out'

# Catalog size guard for enumerate-patterns
MIN_PATTERN_DIM = 2
MAX_PATTERN_DIM = 6

# Process exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


def default_output_dir() -> str:
    """Output directory honoring the CHAOSSYNC_OUT environment variable."""
    return os.environ.get(OUTPUT_ENV_VAR) or os.path.join(os.getcwd(), DEFAULT_OUTPUT_DIRNAME)
