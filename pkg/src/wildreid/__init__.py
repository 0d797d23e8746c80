"""wildreid: key-frame extraction and individual re-identification for
wildlife video.

The pipeline turns raw frames plus externally produced detections and
embeddings into a small set of high-quality key frames per video, matches
those against a gallery of known individuals by cosine similarity, and
evaluates identification accuracy across selection strategies.
"""

from .core import (BoundingBox, DataFormatError, EmbeddingRecord, FrameRecord,
                   FrameStatus, VideoManifest, crop_frame, load_detections,
                   load_labels, load_manifest)
from .evaluate import (DecisionRule, McNemarResult, VideoDecision, decide_threshold,
                       decide_vote, mcnemar_exact, pairwise_significance,
                       video_accuracy)
from .keyframes import (KeyFrameSet, SelectionKind, SelectionMethod, kmeans,
                        kmedoids, pca, select_keyframes, silhouette_score)
from .motion import (FlowField, FlowParams, blur_filter, farneback_flow,
                     motion_scores, polynomial_expansion, to_gray)
from .reid import (ImageAccuracy, MatchResult, best_match, cosine_similarity,
                   image_accuracy)
from .store import EmbeddingStore, read_store, write_store
from .umap import UmapParams, umap_reduce

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "DataFormatError", "DecisionRule", "EmbeddingRecord",
    "EmbeddingStore", "FlowField", "FlowParams", "FrameRecord", "FrameStatus",
    "ImageAccuracy", "KeyFrameSet", "MatchResult", "McNemarResult",
    "SelectionKind", "SelectionMethod", "UmapParams", "VideoDecision",
    "VideoManifest", "best_match", "blur_filter", "cosine_similarity",
    "crop_frame", "decide_threshold", "decide_vote", "farneback_flow",
    "image_accuracy", "kmeans", "kmedoids", "load_detections", "load_labels",
    "load_manifest", "mcnemar_exact", "motion_scores", "pairwise_significance",
    "pca", "polynomial_expansion", "read_store", "select_keyframes",
    "silhouette_score", "to_gray", "umap_reduce", "video_accuracy",
    "write_store",
]
