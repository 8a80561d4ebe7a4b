import os
from functools import lru_cache
from typing import List, Optional, Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="MEMGAUGE_")

    # Reproducibility
    SEED: int = 0

    # Logging settings
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # Processing settings
    MAX_WORKERS: Optional[int] = None  # defaults to available cores

    # Normalizer settings
    TYPE_KEYWORDS: List[str] = [
        "int", "long", "short", "byte", "char", "float", "double", "boolean",
        "bool", "String", "Object", "var", "let", "const", "auto", "final",
        "List", "Map", "Set",
    ]

    # Noising settings
    DEFAULT_RATES: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    IDENTITY_TOP_K: int = 1

    # Reference trainer defaults
    EPOCHS: int = 50
    BATCH_SIZE: int = 32
    LEARNING_RATE: float = 0.1
    EMBEDDING_DIM: int = 64
    MIN_COUNT: int = 1

    # Oracle settings
    ORACLE_TIMEOUT: float = 30.0  # seconds per query
    ORACLE_POOL_SIZE: int = 1
    ORACLE_MAX_RETRIES: int = 3
    ORACLE_RETRY_DELAY: float = 2.0  # seconds, doubled per attempt
    CSR_QUERY_BUDGET: Optional[int] = None  # None = every candidate

    # Oracle HTTP server settings
    HOST: str = "127.0.0.1"
    PORT: int = 8000

    def worker_count(self, jobs: int) -> int:
        """Worker slots for ``jobs`` independent pipelines."""
        available = self.MAX_WORKERS or os.cpu_count() or 1
        return max(1, min(available, jobs))


@lru_cache()
def get_settings():
    return Settings()
