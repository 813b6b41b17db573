import os
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

from vi_sharp import __version__

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Solver settings.

    Every field can be overridden from the environment with the ``VI_SHARP_``
    prefix, e.g. ``VI_SHARP_OUTPUT_DIR=/tmp/runs``.
    """

    PROJECT_NAME: str = "Sharp-Penalty VI Solver"
    TOOL_VERSION: str = __version__
    CONFIG_SCHEMA: str = "vi-sharp/1"

    # Geometry
    TOL_PROJ: float = 1e-10
    TOL_GAUGE: float = 1e-10
    PROJ_MAX_ITERS: int = 10000
    BRACKET_MAX_STEPS: int = 200

    # Operators and penalty
    BOUND_SAFETY_FACTOR: float = 1.5
    BOUND_SAMPLES: int = 10000
    LAMBDA_FACTOR: float = 2.0
    CERTIFY_SAMPLES: int = 10000
    CERTIFY_TOL: float = 1e-8
    SAMPLING_SEED: int = 0

    # Oracle
    ORACLE_ACCEPT_RESIDUAL: float = 1e-6
    ORACLE_GAP_TOL: float = 1e-6
    ORACLE_GAP_SAMPLES: int = 10000
    GRID_CHUNK_SIZE: int = 65536

    # Output
    OUTPUT_DIR: str = "runs"
    CERTIFICATE_DIR: str = "certificates"
    LOG_LEVEL: str = "INFO"

    # Performance
    DEFAULT_THREAD_COUNT: int = max(1, (os.cpu_count() or 2) - 1)

    model_config = SettingsConfigDict(env_prefix="VI_SHARP_", case_sensitive=True)


# Create global settings object
settings = Settings()
