import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

# Load .env for local development only
# --------------------------
if os.environ.get("RUNNING_LOCALLY", "True") == "True":
    from dotenv import load_dotenv
    load_dotenv(BASE_DIR / ".env")


# Output
# --------------------------
OUTPUT_DIR = Path(os.getenv("Z2_OUTPUT_DIR", BASE_DIR / "runs"))
MANIFEST_NAME = "manifest.json"

# Workers
# --------------------------
MAX_THREADS = int(os.environ.get("Z2_MAX_THREADS", 4))

# Size guards
# --------------------------
MAX_DUAL_PLAQUETTES = 24        # 2^24 amplitudes
PRECOMPUTED_FIELD_PLAQUETTES = 20
DENSE_DUAL_DIMENSION = 256      # below this, ED uses a dense solver
MAX_FULL_SPACE_LINKS = 26
MAX_SECTOR_CHECK_D = 3
MAX_CIRCUIT_QUBITS = 25
MAX_PARAMETER_SHIFT_D = 4
MAX_ENTROPY_GROUPS = 2 ** 14

# Exact diagonalization
# --------------------------
KRYLOV_TOL = 1e-10
KRYLOV_MAX_ITER = 5000
KRYLOV_SEED = 1234

# Optimizer
# --------------------------
LBFGS_MAXITER = 500
LBFGS_GTOL = 1e-8
LBFGS_FTOL = 1e-15
LBFGS_MAXCOR = 10
BETA_BOUNDS = (0.0, 1.0)

# Finite-size scaling
# --------------------------
SCALING_THETA = 0.52
FIT_STARTS = 16

# Presets
# --------------------------
PRESETS = {
    "desk": {
        "n_lambda": 100,
        "lambda_max": 16.0,
        "n_seeds": 16,
        "delta": 0.1,
        "trajectories": 1000,
        "shots": 100,
    },
    "paper": {
        "n_lambda": 800,
        "lambda_max": 16.0,
        "n_seeds": 336,
        "delta": 0.1,
        "trajectories": 100000,
        "shots": 100,
    },
}
DEFAULT_PRESET = "desk"

# Tests
# --------------------------
RUN_SLOW_TESTS = os.environ.get("Z2_SLOW_TESTS", "False") == "True"

# Logging
# --------------------------
LOG_LEVEL = os.environ.get("Z2_LOG_LEVEL", "INFO")
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "dissipativeVqeApp": {"handlers": ["console"], "level": LOG_LEVEL},
        "z2Project": {"handlers": ["console"], "level": LOG_LEVEL},
    },
}
