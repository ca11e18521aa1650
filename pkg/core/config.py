"""
ZeroBench Configuration System
Environment-aware configuration for the imputation library and the benchmark harness
"""
import os
import logging
from typing import List, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class EnvironmentConfig(BaseSettings):
    """Centralized environment configuration"""

    model_config = SettingsConfigDict(
        env_prefix="ZEROBENCH_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    ENVIRONMENT: str = "development"
    STORAGE_PATH: Optional[str] = None
    GCS_BUCKET_NAME: Optional[str] = None
    LOG_LEVEL: Optional[str] = None

    # Harness defaults
    BASE_SEED: int = 0
    JOBS: int = Field(default=1, ge=1)
    TIMEOUT_S: float = Field(default=600.0, gt=0)
    ZERO_FREE_DEPTH: int = Field(default=10**12, gt=0)
    BENCH_REPS: int = Field(default=50, ge=1)
    BENCH_M_GRID: List[int] = [50, 200, 500]
    BENCH_P_GRID: List[float] = [0.05, 0.2, 0.4, 0.6, 0.8]

    # Imputer defaults
    REPLACEMENT_FRACTION: float = Field(default=0.65, gt=0, lt=1)
    EM_MAX_ITER: int = Field(default=50, ge=1)
    EM_TOL: float = Field(default=1e-4, gt=0)
    DA_ITERATIONS: int = Field(default=1500, ge=2)
    DA_BURN_IN: int = Field(default=500, ge=0)
    SVD_RANK: int = Field(default=2, ge=1)
    SVD_WEIGHT: float = Field(default=0.5, ge=0, le=1)
    SVD_MAX_ITER: int = Field(default=200, ge=1)
    SVD_TOL: float = Field(default=1e-6, gt=0)
    PLS_MAX_COMPONENTS: int = Field(default=10, ge=1)
    PLS_CV_FOLDS: int = Field(default=10, ge=2)

    @property
    def is_development(self):
        return self.ENVIRONMENT.lower() == 'development'

    @property
    def is_staging(self):
        return self.ENVIRONMENT.lower() == 'staging'

    @property
    def is_production(self):
        return self.ENVIRONMENT.lower() == 'production'

    @property
    def use_cloud_storage(self):
        """Mirror run artefacts to GCS outside development when a bucket is configured"""
        return not self.is_development and bool(self.GCS_BUCKET_NAME)

    @property
    def debug_mode(self):
        """Enable debug mode in development"""
        return self.is_development


# Global instance
config = EnvironmentConfig()

# Storage configuration
STORAGE_PATH = config.STORAGE_PATH or os.path.join(os.path.dirname(os.path.dirname(__file__)), 'storage')
RESULTS_DIR = os.path.join(STORAGE_PATH, "results")
FIXTURES_DIR = os.path.join(STORAGE_PATH, "fixtures")
LOGS_DIR = os.path.join(STORAGE_PATH, "logs")
LOG_FILE = os.path.join(LOGS_DIR, "zerobench.log")
GCS_BUCKET_NAME = config.GCS_BUCKET_NAME

os.makedirs(LOGS_DIR, exist_ok=True)
if config.is_development:
    os.makedirs(RESULTS_DIR, exist_ok=True)
    os.makedirs(FIXTURES_DIR, exist_ok=True)

# Setup logging
if config.LOG_LEVEL:
    _level = getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
else:
    _level = logging.DEBUG if config.debug_mode else logging.INFO

logger = logging.getLogger("zerobench")
logger.setLevel(_level)

if not logger.handlers:
    # Console handler
    c_handler = logging.StreamHandler()
    c_handler.setLevel(_level)

    # File handler
    f_handler = logging.FileHandler(LOG_FILE)
    f_handler.setLevel(logging.INFO)

    # Formatter
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    c_handler.setFormatter(formatter)
    f_handler.setFormatter(formatter)

    logger.addHandler(c_handler)
    logger.addHandler(f_handler)


def get_logger(name: str) -> logging.Logger:
    """Child logger under the package logger, e.g. ``zerobench.imputers``."""
    return logger.getChild(name)


logger.debug(f"ZeroBench configuration initialized - Environment: {config.ENVIRONMENT}")
logger.debug(f"Storage path: {STORAGE_PATH}")
logger.debug(f"Cloud mirror: {'Enabled' if config.use_cloud_storage else 'Disabled'}")
