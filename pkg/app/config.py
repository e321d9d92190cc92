"""
Application configuration settings
"""

import logging
import sys
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict
from pythonjsonlogger.json import JsonFormatter


class Settings(BaseSettings):
    """Application configuration"""

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", case_sensitive=True)

    # Core settings
    APP_NAME: str = "Edge Kernel Lab"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = True
    LOG_FILE: Optional[str] = None

    # Experiment artifacts
    OUTPUT_DIR: str = "./results"

    # Thread pool used by Monte Carlo batches and kernel grids
    WORKERS: int = 4

    # Airy function
    AIRY_X_SWITCH: float = 6.0
    AIRY_SERIES_TERMS: int = 45
    AIRY_CONTOUR_NODES: int = 96

    # lambda-integral representation of the extended Airy kernel
    LAMBDA_PANELS: int = 64
    LAMBDA_NODES: int = 16

    # Wedge contours
    WEDGE_TRUNCATION_RADIUS: float = 12.0
    WEDGE_PANELS: int = 24
    WEDGE_NODES_PER_PANEL: int = 16
    WEDGE_GRADING: float = 2.0
    ARC_PANELS: int = 16
    ARC_NODES_PER_PANEL: int = 16

    # Circle contours
    CIRCLE_NODES: int = 128

    # Fredholm determinants
    FREDHOLM_NODES: int = 40
    FREDHOLM_TRUNCATION: float = 14.0
    FREDHOLM_MAX_SIZE: int = 2000
    FREDHOLM_MAX_REFINEMENTS: int = 2
    FREDHOLM_DOUBLING_TOL: float = 1e-6
    FREDHOLM_TAIL_TOL: float = 1e-8

    # Kernel guards
    IMAG_RESIDUE_TOL: float = 1e-8
    OVERFLOW_LOG_LIMIT: float = 600.0
    SINGULARITY_GUARD: float = 1e-6
    SINGULARITY_STEP: float = 1e-4

    # Statistics
    KS_PASS_PVALUE: float = 0.01
    KS_PASS_MIN_SEEDS: int = 9

    # Desk-scale budget per command, seconds
    DESK_BUDGET_SECONDS: float = 300.0

    # Server
    HOST: str = "0.0.0.0"
    PORT: int = 8000
    SLOW_REQUEST_SECONDS: float = 10.0


# Initialize settings
settings = Settings()


# Ai(0) = 3^{-2/3}/Gamma(2/3) and Ai'(0) = -3^{-1/3}/Gamma(1/3)
AIRY_AI_0 = 0.355028053887817239260
AIRY_AIP_0 = -0.258819403792806798405

# Fixed table layouts of the experiment artifacts
KERNEL_TABLE_COLUMNS = ["t1", "x", "t2", "y", "value", "imag_residue"]
GAP_TABLE_COLUMNS = ["xi", "det", "flag"]
SAMPLE_TABLE_COLUMNS = ["sample", "value"]

# Process exit codes
EXIT_PASS = 0
EXIT_ASSERTION_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def setup_logging(
    level: Optional[str] = None,
    json_logs: Optional[bool] = None,
    log_file: Optional[str] = None
) -> None:
    """Configure the root logger (JSON records by default)"""
    level = (level or settings.LOG_LEVEL).upper()
    json_logs = settings.LOG_JSON if json_logs is None else json_logs
    log_file = log_file or settings.LOG_FILE

    if json_logs:
        formatter = JsonFormatter(
            "%(asctime)s %(name)s %(levelname)s %(message)s",
            rename_fields={"levelname": "level", "asctime": "time"}
        )
    else:
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(level)

    # numba's compiler is chatty at DEBUG
    logging.getLogger("numba").setLevel(max(logging.INFO, root.level))
