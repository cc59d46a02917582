import os
from typing import Any, Dict, List, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.errors import ConfigError

load_dotenv()


class Config:
    # Process-wide defaults; the pipeline config file and flags override them
    SEED = os.getenv("FPGUARD_SEED", "0")
    OUTPUT_DIR = os.getenv("FPGUARD_OUTPUT_DIR", "out")
    LOG_LEVEL = os.getenv("FPGUARD_LOG_LEVEL", "WARNING").upper()

    DEBUG = os.getenv("DEBUG", "False").lower() == "true"

    @classmethod
    def validate(cls) -> List[str]:
        errors = []

        try:
            int(cls.SEED)
        except ValueError:
            errors.append(f"FPGUARD_SEED must be an integer, got {cls.SEED!r}")

        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"FPGUARD_LOG_LEVEL is not a logging level: {cls.LOG_LEVEL!r}")

        return errors


class PipelineConfig(BaseModel):
    """Everything one pipeline run needs; loaded from a KEY=VALUE file, then flag overrides."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    output_dir: str = "out"
    logs_dirs: List[str] = Field(default_factory=list)
    traces_dirs: List[str] = Field(default_factory=list)
    # extra logs whose functions join the function-level training pool
    augment_logs_dirs: List[str] = Field(default_factory=list)
    signature_file: Optional[str] = None

    train_fraction: float = Field(default=0.9, gt=0.0, lt=1.0)
    neg_to_pos_ratio: int = Field(default=20, ge=1)
    positive_copies: int = Field(default=1, ge=1)

    embed_epochs: int = Field(default=100, ge=1)
    function_max_len: int = Field(default=512, ge=1)
    script_max_len: int = Field(default=4096, ge=1)

    tx_epochs: Optional[int] = Field(default=None, ge=1)
    tx_batch_size: Optional[int] = Field(default=None, ge=1)
    tx_embed_dim: Optional[int] = Field(default=None, ge=2)
    forest_trees: int = Field(default=200, ge=1)
    threshold: float = Field(default=0.5, ge=0.0, le=1.0)


_LIST_KEYS = ("logs_dirs", "traces_dirs", "augment_logs_dirs")


def _from_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().lower()
        if raw is None:
            continue
        if name in _LIST_KEYS:
            values[name] = [p.strip() for p in raw.split(",") if p.strip()]
        else:
            values[name] = raw.strip()
    return values


def load_pipeline_config(
    path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> PipelineConfig:
    """Defaults from ``Config``, then the file at ``path``, then non-None ``overrides``."""
    values: Dict[str, Any] = {"seed": Config.SEED, "output_dir": Config.OUTPUT_DIR}
    if path:
        values.update(_from_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _LIST_KEYS and not value:
            continue
        values[key] = value
    try:
        return PipelineConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigError(f"{where}: {first.get('msg', 'invalid value')}")
