"""reid_adapter: runs an object detector and an image encoder over frame
directories and emits detections.jsonl and .emb files in the wildreid
interchange formats, so the pipeline itself stays model-free.
"""

from .config import AdapterConfig, load_config
from .pipeline import detect, embed

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "load_config", "detect", "embed"]
