"""Run configuration shared by the CLI stages, loadable from a JSON file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .keyframes import DEFAULT_K_MAX, DEFAULT_K_MIN, SelectionKind, SelectionMethod
from .motion import FlowParams
from .umap import UmapParams

ALL_METHOD_NAMES = tuple(kind.value for kind in SelectionKind)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset_root: Path
    detections_path: Path
    embeddings_path: Path
    output_dir: Path
    methods: tuple[str, ...] = ALL_METHOD_NAMES
    blur_fraction: float = 0.2
    confidence_floor: float = 0.8
    k_min: int = DEFAULT_K_MIN
    k_max: int = DEFAULT_K_MAX
    umap: UmapParams = field(default_factory=UmapParams)
    flow: FlowParams = field(default_factory=FlowParams)
    seed: int = 0
    workers: int | None = None
    normalize_embeddings: bool = False
    dataset_id: str | None = None

    def __post_init__(self):
        if self.k_min < 2:
            raise ConfigError("k_min must be at least 2")
        if self.k_min > self.k_max:
            raise ConfigError("k_min must not exceed k_max")
        if not 0.0 <= self.blur_fraction < 1.0:
            raise ConfigError("blur_fraction must lie in [0,1)")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ConfigError("confidence_floor must lie in [0,1]")
        for name in self.methods:
            try:
                SelectionKind(name)
            except ValueError:
                raise ConfigError(f"unknown selection method {name!r}") from None

    @property
    def dataset_name(self) -> str:
        return self.dataset_id or Path(self.dataset_root).name

    def selection_methods(self) -> list[SelectionMethod]:
        return [SelectionMethod(kind=SelectionKind(name), seed=self.seed)
                for name in self.methods]


def _sub_params(cls, data: dict, what: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {what} fields: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what} settings: {exc}") from exc


def load_config(path: Path | str, **overrides) -> RunConfig:
    """Read a RunConfig from JSON; keyword overrides win over file values."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")

    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config fields: {sorted(unknown)}")

    # Relative paths resolve against the config file's directory.
    base = path.parent

    def as_path(key):
        if key not in data:
            raise ConfigError(f"{path}: missing required field {key!r}")
        p = Path(data[key])
        return p if p.is_absolute() else base / p

    kwargs = dict(data)
    for key in ("dataset_root", "detections_path", "embeddings_path", "output_dir"):
        kwargs[key] = as_path(key)
    if "methods" in kwargs:
        kwargs["methods"] = tuple(kwargs["methods"])
    if "umap" in kwargs:
        kwargs["umap"] = _sub_params(UmapParams, kwargs["umap"], "umap")
    if "flow" in kwargs:
        kwargs["flow"] = _sub_params(FlowParams, kwargs["flow"], "flow")
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def config_to_json(config: RunConfig) -> str:
    data = {
        "dataset_root": str(config.dataset_root),
        "detections_path": str(config.detections_path),
        "embeddings_path": str(config.embeddings_path),
        "output_dir": str(config.output_dir),
        "methods": list(config.methods),
        "blur_fraction": config.blur_fraction,
        "confidence_floor": config.confidence_floor,
        "k_min": config.k_min,
        "k_max": config.k_max,
        "umap": {f.name: getattr(config.umap, f.name) for f in fields(UmapParams)},
        "flow": {f.name: getattr(config.flow, f.name) for f in fields(FlowParams)},
        "seed": config.seed,
        "workers": config.workers,
        "normalize_embeddings": config.normalize_embeddings,
        "dataset_id": config.dataset_id,
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
