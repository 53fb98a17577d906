"""Configuration management for the application."""

from functools import lru_cache
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings, read from the environment or `.env`."""

    app_name: str = Field(default="relic-desk")
    environment: str = Field(default="development")

    # Logging
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="json")  # json, console

    # Augmentation worker threads (output never depends on this)
    num_workers: int = Field(default=4, ge=1)

    # Filesystem locations
    runs_dir: str = Field(default="runs")
    data_dir: str = Field(default="data")

    model_config = SettingsConfigDict(
        env_prefix="RELIC_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()
