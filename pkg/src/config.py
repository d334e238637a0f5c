"""
Environment configuration

Settings are read from the process environment after ``load_dotenv()``, so a
``.env`` file next to the invocation is honored. Command-line flags take
precedence over these values, except NATPATL_SEED which deliberately
overrides ``--seed`` so CI can pin every simulation from one place.
"""

import os
import logging
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

logger = logging.getLogger(__name__)

VERSION = "1.0.0"
DEFAULT_MAX_PRODUCT_STATES = 100_000


class Settings(BaseModel):
    """
    Process-wide settings.

    Attributes:
        seed (Optional[int]): Oracle seed forced by NATPATL_SEED.
        log_level (str): Logging level name for the root logger.
        max_product_states (int): Desk-scale budget for product and automaton
            constructions.
        jobs (int): Default worker count for candidate evaluation.
        smt_solver (Optional[str]): Command line of an external SMT solver that
            accepts an SMT-LIB2 script path as its last argument.
    """
    seed: Optional[int] = Field(None, description="Oracle seed override")
    log_level: str = Field("INFO", description="Logging level")
    max_product_states: int = Field(DEFAULT_MAX_PRODUCT_STATES, ge=1, description="State budget")
    jobs: int = Field(1, ge=1, description="Default worker count")
    smt_solver: Optional[str] = Field(None, description="External SMT solver command")


def load_settings() -> Settings:
    """Load settings from ``.env`` and the environment."""
    load_dotenv()
    raw = {
        "seed": os.getenv("NATPATL_SEED"),
        "log_level": os.getenv("NATPATL_LOG_LEVEL"),
        "max_product_states": os.getenv("NATPATL_MAX_PRODUCT_STATES"),
        "jobs": os.getenv("NATPATL_JOBS"),
        "smt_solver": os.getenv("NATPATL_SMT_SOLVER"),
    }
    try:
        return Settings(**{key: value for key, value in raw.items() if value not in (None, "")})
    except ValidationError as e:
        logger.error(f"Invalid NATPATL_* environment: {e}")
        raise
