import logging
import os
from typing import Optional

from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, Field, ValidationError

from heavytail.exceptions import BadConfig

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "HEAVYTAIL_SEED"
DEFAULT_SEED = 20240229
MAX_SEED = 2**64 - 1


class Settings(BaseModel):
    default_seed: int = Field(DEFAULT_SEED, ge=0, le=MAX_SEED)


def load_settings() -> Settings:
    # Load environment variables
    try:
        load_dotenv(find_dotenv(usecwd=True))
    except Exception as e:
        logger.warning("Could not load .env file: %s", e)

    raw_seed = os.getenv(SEED_ENV_VAR)
    if raw_seed is None or not raw_seed.strip():
        return Settings()
    try:
        return Settings(default_seed=int(raw_seed.strip()))
    except (ValueError, ValidationError) as e:
        raise BadConfig(f"{SEED_ENV_VAR} must be an integer in [0, 2**64): got {raw_seed!r}") from e


# Global instance - lazy loaded
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    global _settings
    if _settings is None:
        _settings = load_settings()
    return _settings


def reset_settings() -> None:
    global _settings
    _settings = None
