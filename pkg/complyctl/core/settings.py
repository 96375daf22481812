from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
_LOG_LEVELS = {"CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"}


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    env: str = Field(default="dev", alias="COMPLYCTL_ENV")
    log_level: str = Field(default="INFO", alias="COMPLYCTL_LOG")
    default_seed: int = Field(default=0, alias="COMPLYCTL_SEED")
    output_dir: Path = Field(default=Path("runs"), alias="COMPLYCTL_OUT")

    @field_validator("log_level")
    @classmethod
    def normalize_level(cls, value: str) -> str:
        normalized = value.strip().upper()
        if normalized not in _LOG_LEVELS:
            allowed = ", ".join(sorted(_LOG_LEVELS))
            raise ValueError(f"COMPLYCTL_LOG must be one of: {allowed}")
        return normalized


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
