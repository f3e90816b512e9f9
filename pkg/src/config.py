from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Literal, Optional
from dotenv import load_dotenv

load_dotenv()

class Settings(BaseSettings):
    """Process-level settings; experiment parameters live in RunConfig."""

    log_level: str = Field(default="INFO")
    log_format: Literal["console", "json"] = Field(default="console")

    # Worker threads for per-triplet forward/backward and per-pair evaluation
    threads: int = Field(default=1, ge=1)

    # float32 is allowed for training speed; gradient checks always run at float64
    dtype: Literal["float64", "float32"] = Field(default="float64")

    cache_dir: Optional[str] = Field(default=None)
    registration_cache: bool = Field(default=True)

    model_config = SettingsConfigDict(
        env_prefix="LANDMARKS_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

settings = Settings()
