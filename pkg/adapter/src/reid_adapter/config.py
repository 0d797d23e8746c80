"""Adapter configuration; the JSON schema mirrors the field names below."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class AdapterError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    detector_ref: str = "toy"
    encoder_ref: str = "toy"
    encoder_id: str = "toy-rp64"
    confidence_floor: float = 0.8
    input_size: int = 224
    normalization_mean: tuple[float, float, float] = IMAGENET_MEAN
    normalization_std: tuple[float, float, float] = IMAGENET_STD
    batch_size: int = 16

    def __post_init__(self):
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise AdapterError("confidence_floor must lie in [0,1]")
        if self.input_size < 1:
            raise AdapterError("input_size must be positive")
        if self.batch_size < 1:
            raise AdapterError("batch_size must be positive")
        if len(self.normalization_mean) != 3 or len(self.normalization_std) != 3:
            raise AdapterError("normalization mean/std must have 3 channels")


def load_config(path: Path | str) -> AdapterConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise AdapterError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise AdapterError(f"{path}: invalid JSON: {exc}") from exc
    known = {f.name for f in fields(AdapterConfig)}
    unknown = set(data) - known
    if unknown:
        raise AdapterError(f"{path}: unknown config fields: {sorted(unknown)}")
    for key in ("normalization_mean", "normalization_std"):
        if key in data:
            data[key] = tuple(data[key])
    try:
        return AdapterConfig(**data)
    except TypeError as exc:
        raise AdapterError(f"{path}: {exc}") from exc
