import logging
import sys
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    threads: int = Field(1, ge=1)  # MGT_THREADS caps worker parallelism
    out_dir: str = "./out"
    log_level: str = "INFO"

    # App settings
    app_name: str = "MGT Memory Lab"
    debug: bool = False

    model_config = SettingsConfigDict(env_prefix="MGT_", env_file=".env", extra="ignore")


@lru_cache()
def get_settings():
    return Settings()


LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """Install a single stderr handler on the package logger."""
    logger = logging.getLogger("mgtlab")
    logger.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)
    logger.setLevel(level.upper())
    logger.propagate = False
