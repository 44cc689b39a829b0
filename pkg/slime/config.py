"""Project defaults, environment overrides and the run configuration file."""

import logging
import os
import tomllib
from pathlib import Path
from typing import List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from slime.errors import ConfigError
from slime.models import DEFAULT_EXCLUDED, IGConfig, StatsConfig, TrainConfig

load_dotenv()

logger = logging.getLogger("config")

# ==================== DEFAULTS ====================

# Cross-validation
N_FOLDS = 5

# Attribution (truncation length lives in TrainConfig.max_tokens)
COMPLETENESS_RTOL = 1e-3
COMPLETENESS_ATOL = 1e-6

# Count-based validation
ALPHA = 0.05
EXACT_MWU_BELOW = 8  # exact enumeration when min(n1, n2) is smaller than this

# Output
OUTPUT_DIR = "slime_out"

# Environment (SLIME_SEED is read at override time)
LOG_LEVEL = os.getenv("SLIME_LOG_LEVEL", "INFO").upper()
MAX_WORKERS = int(os.getenv("SLIME_MAX_WORKERS", "1"))

# ==================================================


class CorpusSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Path
    format: Literal["plain-dir", "jsonl"] = "jsonl"


class DictionarySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Path
    excluded: List[str] = sorted(DEFAULT_EXCLUDED)


class AttributionSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    import_path: Optional[Path] = None


class ValidationSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(ALPHA, gt=0, lt=1)


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: Path = Path(OUTPUT_DIR)


class PipelineConfig(BaseModel):
    """Everything one pipeline run needs.

    The master ``seed`` is the only source of randomness: it is copied into
    ``train.seed`` and ``stats.seed`` and drives the fold assignment.
    """

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    folds: int = Field(N_FOLDS, ge=2)
    max_workers: int = Field(MAX_WORKERS, ge=1)
    corpus: CorpusSection
    dictionary: DictionarySection
    train: TrainConfig = Field(default_factory=TrainConfig)
    ig: IGConfig = Field(default_factory=IGConfig)
    stats: StatsConfig = Field(default_factory=StatsConfig)
    validation: ValidationSection = Field(default_factory=ValidationSection)
    attribution: AttributionSection = Field(default_factory=AttributionSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _propagate_seed(self):
        self.train.seed = self.seed
        self.stats.seed = self.seed
        return self


_PATH_FIELDS = (("corpus", "path"), ("dictionary", "path"), ("attribution", "import_path"), ("output", "dir"))


def _format_validation_error(err: ValidationError) -> str:
    lines = []
    for item in err.errors():
        field = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{field}: {item['msg']}")
    return "; ".join(lines)


def _resolve_paths(raw: dict, base_dir: Path) -> None:
    for section, key in _PATH_FIELDS:
        block = raw.get(section)
        if isinstance(block, dict) and isinstance(block.get(key), str):
            path = Path(block[key]).expanduser()
            block[key] = str(path if path.is_absolute() else base_dir / path)


def check_paths(cfg: PipelineConfig, fields: tuple = (("corpus", "path"), ("dictionary", "path"))) -> None:
    """Raise ConfigError naming the first referenced input path that does not exist."""
    for section, key in fields:
        value = getattr(getattr(cfg, section), key)
        if value is None:
            raise ConfigError(f"{section}.{key}: required for this subcommand")
        if not Path(value).exists():
            raise ConfigError(f"{section}.{key}: path does not exist: {value}")


def build_config(raw: dict, base_dir: Optional[Path] = None) -> PipelineConfig:
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    output = raw.setdefault("output", {})
    if isinstance(output, dict):
        output.setdefault("dir", OUTPUT_DIR)
    _resolve_paths(raw, base_dir or Path.cwd())
    try:
        return PipelineConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from None


def load_config(path: Path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    cfg = build_config(raw, path.resolve().parent)
    logger.debug(f"Loaded config from {path}")
    return cfg


def apply_overrides(cfg: PipelineConfig, seed: Optional[int] = None, out: Optional[Path] = None) -> PipelineConfig:
    """Layer CLI flags and SLIME_SEED over the file values (flag wins)."""
    data = cfg.model_dump()
    env_seed = os.getenv("SLIME_SEED")
    if seed is None and env_seed:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"SLIME_SEED: not an integer: {env_seed!r}") from None
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["output"]["dir"] = Path(out)
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from None
