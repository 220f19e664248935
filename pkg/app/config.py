"""
Configuration Module

Environment-driven settings for the solver package. Values come from the
process environment, optionally seeded from a .env file, and are gathered in a
validated Settings model.
"""

import os
import logging
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Settings(BaseModel):
    """Runtime settings read from the environment."""
    output_dir: str = Field("./runs", description="Root directory for run outputs")
    registry_path: str = Field("./data/run_registry.json", description="TinyDB file indexing runs")
    preset_dir: str = Field("./data/presets", description="Directory holding preset scenario configs")
    log_level: str = Field("INFO", description="Logging level name")
    sweep_workers: int = Field(1, ge=1, description="Worker processes used by phase sweeps")
    assert_scheme: bool = Field(False, description="Check the scheme residual after every step")


def _env_flag(name: str, default: str = "False") -> bool:
    return os.getenv(name, default).lower() in ("1", "true", "yes")


def get_settings(env_file: Optional[str] = None) -> Settings:
    """Load settings from the environment.

    Args:
        env_file: Optional path to a .env file; the default lookup is used when None.

    Returns:
        The populated Settings instance.
    """
    load_dotenv(env_file)

    default_preset_dir = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "presets")
    return Settings(
        output_dir=os.getenv("SOLVER_OUTPUT_DIR", "./runs"),
        registry_path=os.getenv("RUN_REGISTRY_PATH", "./data/run_registry.json"),
        preset_dir=os.getenv("PRESET_DIR", default_preset_dir),
        log_level=os.getenv("SOLVER_LOG_LEVEL", "INFO").upper(),
        sweep_workers=int(os.getenv("SWEEP_WORKERS", "1")),
        assert_scheme=_env_flag("SOLVER_ASSERT_SCHEME"),
    )


def setup_logging(level: Optional[str] = None) -> None:
    """Configure root logging for an entry point.

    Args:
        level: Level name; falls back to SOLVER_LOG_LEVEL.
    """
    level_name = (level or os.getenv("SOLVER_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT)
