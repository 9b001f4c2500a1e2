"""Run configuration: dataclass defaults, TOML file, env vars, flag overrides.

Precedence is flags > environment > file > defaults. The effective config is
hashed into the run manifest so replays can detect drift.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "RESEARCHER_"

# Provider credentials are read from these variables at call time, never stored.
ENDPOINT_VAR = "RESEARCHER_LLM_ENDPOINT"
API_KEY_VAR = "RESEARCHER_LLM_API_KEY"
MODEL_VAR = "RESEARCHER_LLM_MODEL"

DEFAULT_CONFIG_FILENAME = "researcher.toml"


@dataclass(frozen=True)
class ContainerConfig:
    """Where sandboxed commands execute: a container runtime or a local process."""

    runtime: str = "local"  # "local" | "docker"
    image: str = "python:3.11-slim"
    cpu_limit: float = 2.0
    memory_limit_mb: int = 4096
    wall_time_limit_s: int = 600


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    max_attempts: int = 3
    full_experiment_loopbacks: int = 1
    page_len: int = 50
    tool_call_budget: int = 200
    retry_limit: int = 3
    backoff_base_s: float = 0.5

    # Temperature defaults: review panels are fixed at 1.0, code agents run cool.
    code_temperature: float = 0.2
    review_temperature: float = 1.0
    model_id: str = "default-model"

    # Knowledge acquisition.
    min_repos: int = 5
    max_repos: int = 8
    criterion_weights: dict[str, float] = field(
        default_factory=lambda: {
            "recency": 0.2,
            "stars": 0.2,
            "readme_quality": 0.2,
            "relevance": 0.2,
            "citation_impact": 0.2,
        }
    )

    # Concept survey retrieval.
    retrieval_top_k: int = 6

    # Experiment budgets.
    prototype_max_epochs: int = 2
    prototype_subset_fraction: float = 0.1
    full_epochs: int = 10
    experiment_timeout_s: int = 300

    # Documentation.
    structure_iterations: int = 2
    revision_passes: int = 2

    # Evaluation panel.
    panel_judges: tuple[str, ...] = ("judge-a", "judge-b", "judge-c", "judge-d", "judge-e")
    assessments_per_judge: int = 16

    container: ContainerConfig = field(default_factory=ContainerConfig)

    # Optional override for the assets directory (templates, guidelines).
    assets_dir: str | None = None

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["panel_judges"] = list(self.panel_judges)
        return data

    def content_hash(self) -> str:
        """Stable hash of the effective configuration (no paths, no secrets)."""
        data = self.to_dict()
        data.pop("assets_dir", None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_FLOAT_FIELDS = {
    "backoff_base_s",
    "code_temperature",
    "review_temperature",
    "prototype_subset_fraction",
}
_STR_FIELDS = {"model_id", "assets_dir"}


def _coerce(name: str, raw: str) -> Any:
    if name in _STR_FIELDS:
        return raw
    if name in _FLOAT_FIELDS:
        return float(raw)
    return int(raw)


def _env_overrides(env: Mapping[str, str]) -> dict[str, Any]:
    scalar_names = {
        f.name
        for f in dataclasses.fields(RunConfig)
        if f.name not in ("criterion_weights", "panel_judges", "container")
    }
    found: dict[str, Any] = {}
    for name in scalar_names:
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            found[name] = _coerce(name, raw)
    return found


def _apply(base: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    updates: dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "container" and isinstance(value, Mapping):
            updates["container"] = dataclasses.replace(base.container, **dict(value))
        elif key == "panel_judges":
            updates["panel_judges"] = tuple(value)
        elif key in known:
            updates[key] = value
        else:
            raise ValueError(f"unknown configuration key: {key}")
    return dataclasses.replace(base, **updates) if updates else base


def load_config(
    path: str | Path | None = None,
    *,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Build the effective RunConfig.

    ``path`` may name a TOML file; when omitted, ``researcher.toml`` in the
    working directory is used if present. ``overrides`` come from CLI flags
    and win over everything.
    """
    env = os.environ if env is None else env
    config = RunConfig()

    file_path: Path | None = None
    if path is not None:
        file_path = Path(path)
        if not file_path.is_file():
            raise FileNotFoundError(f"config file not found: {file_path}")
    else:
        candidate = Path(DEFAULT_CONFIG_FILENAME)
        if candidate.is_file():
            file_path = candidate
    if file_path is not None:
        with open(file_path, "rb") as fh:
            config = _apply(config, tomllib.load(fh))

    config = _apply(config, _env_overrides(env))
    if overrides:
        config = _apply(config, overrides)
    return config
