"""Centralised configuration.

Environment variables (via a .env file) override defaults so the harness
can run locally and in CI without edits. Numeric tolerances of the
algorithms are NOT configured here; they live next to the code that
relies on them.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load .env if present
load_dotenv()

# --- Harness output ---
OUTPUT_DIR = Path(os.getenv("ADATRIV_OUTPUT_DIR", "runs"))
GRID_WORKERS = int(os.getenv("ADATRIV_GRID_WORKERS", 1))
LOG_LEVEL = os.getenv("ADATRIV_LOG_LEVEL", "INFO")

# --- Optimizer defaults ---
ADAM_BETA1 = float(os.getenv("ADATRIV_ADAM_BETA1", 0.9))
ADAM_BETA2 = float(os.getenv("ADATRIV_ADAM_BETA2", 0.99))
RMSPROP_BETA2 = float(os.getenv("ADATRIV_RMSPROP_BETA2", 0.99))
EPS = float(os.getenv("ADATRIV_EPS", 1e-8))
MOMENTUM = float(os.getenv("ADATRIV_MOMENTUM", 0.9))

# --- Desk-scale defaults for generated configs ---
DEFAULT_N = int(os.getenv("ADATRIV_DEFAULT_N", 8))
DEFAULT_ITERS = int(os.getenv("ADATRIV_DEFAULT_ITERS", 2000))
