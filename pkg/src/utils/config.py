import os
from typing import Optional
from pydantic import Field, ConfigDict
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Application configuration settings."""

    # Application Configuration
    app_name: str = Field("CBDC Interop Simulator", alias="APP_NAME")
    app_version: str = Field("0.1.0", alias="APP_VERSION")
    debug: bool = Field(False, alias="DEBUG")
    log_level: str = Field("INFO", alias="LOG_LEVEL")
    logs_dir: str = Field("logs", alias="LOGS_DIR")

    # Node socket binding (optional network mode)
    host: str = Field("127.0.0.1", alias="HOST")
    port: int = Field(8000, alias="PORT")
    max_frame_bytes: int = Field(1024 * 1024, alias="MAX_FRAME_BYTES")

    # Simulation
    seed: int = Field(7, alias="CBDC_SEED")
    start_time: int = Field(0, alias="CBDC_START_TIME")
    scenario_dir: str = Field("scenarios", alias="SCENARIO_DIR")

    # Protocol timing (virtual seconds)
    htlc_timeout_seconds: int = Field(24 * 3600, alias="HTLC_TIMEOUT_SECONDS")
    ticket_window_factor: int = Field(2, alias="TICKET_WINDOW_FACTOR")
    batch_interval_seconds: int = Field(10, alias="BATCH_INTERVAL_SECONDS")
    sync_interval_seconds: int = Field(10, alias="SYNC_INTERVAL_SECONDS")
    deadline_batches: int = Field(4, alias="DEADLINE_BATCHES")

    # Public chain
    finality_depth: int = Field(1, alias="FINALITY_DEPTH")

    model_config = ConfigDict(
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
        populate_by_name=True
    )

    @property
    def ticket_window_seconds(self) -> int:
        """Validity window of access tickets beyond the HTLC timeout."""
        return self.ticket_window_factor * self.htlc_timeout_seconds

    @property
    def deadline_seconds(self) -> int:
        """Snapshot-wait and escalation deadline."""
        return self.deadline_batches * self.batch_interval_seconds

    def validate_timing(self) -> None:
        """Validate that the configured intervals make sense."""
        if self.batch_interval_seconds <= 0 or self.sync_interval_seconds <= 0:
            raise ValueError("Batch and sync intervals must be positive")
        if self.htlc_timeout_seconds <= 0:
            raise ValueError("HTLC timeout must be positive")
        if self.finality_depth < 1:
            raise ValueError("Finality depth must be at least 1")

    def with_overrides(self, **overrides: Optional[int]) -> "Settings":
        """Return a copy with the given non-None fields replaced."""
        updates = {key: value for key, value in overrides.items() if value is not None}
        return self.model_copy(update=updates)


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get the global settings instance."""
    return settings


def get_config() -> Settings:
    """Get the global configuration instance (alias for get_settings)."""
    return settings


def setup_environment() -> None:
    """Validate timing settings and prepare working directories."""
    settings.validate_timing()
    os.makedirs(settings.logs_dir, exist_ok=True)
