"""Every hyper-parameter of the merge and split passes, in one place.

Values come from the built-in defaults, then an optional JSON file, then command-line
flags, each layer overriding the previous one.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from resplit.errors import ConfigError
from resplit.merge_transform import MergeConfig
from resplit.split_transform import SplitConfig

CONFIG_ENV_VAR = "RESPLIT_CONFIG"


class AnalysisConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    merge: MergeConfig = Field(default_factory=MergeConfig)
    split: SplitConfig = Field(default_factory=SplitConfig)
    order: Literal["merge-split", "split-merge"] = "merge-split"

    def snapshot(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    def with_overrides(
        self,
        merge: dict[str, Any] | None = None,
        split: dict[str, Any] | None = None,
        order: str | None = None,
    ) -> AnalysisConfig:
        """A copy with the given non-None values replaced, validated again."""
        data = self.snapshot()
        data["merge"].update({k: v for k, v in (merge or {}).items() if v is not None})
        data["split"].update({k: v for k, v in (split or {}).items() if v is not None})
        if order is not None:
            data["order"] = order
        try:
            return AnalysisConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid configuration: {e}") from e


def config_hash(cfg: AnalysisConfig) -> str:
    canonical = json.dumps(cfg.snapshot(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def load_config(path: str | Path | None = None) -> AnalysisConfig:
    """Load a JSON config file; without a path, ``$RESPLIT_CONFIG`` or the defaults.

    Raises:
        ConfigError: The file cannot be read or does not validate.
    """
    path = path or os.getenv(CONFIG_ENV_VAR)
    if not path:
        return AnalysisConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        return AnalysisConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid config file {path}: {e}") from e
