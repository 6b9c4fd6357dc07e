"""Boxed object-detection datasets from count-only labels.

Images annotated with nothing but "this picture contains N objects" are run
through region proposals, an adaptive IoU merge loop that stops at exactly N
boxes, and a classifier gate; confirmed boxes become VOC-style XML plus a
patch database used to simulate occlusion in the training set.
"""

from .annotations import Annotation, LabeledBox, ManifestEntry, read_manifest, read_xml, write_manifest, write_xml
from .confirm import ClassScore, ConfirmPolicy, HistogramModel, confirm_boxes, train_baseline
from .extraction import ExtractConfig, ExtractResult, extract, filter_proposals, merge_pass, merge_until, threshold_step
from .geometry import Box, iou, union_box
from .metrics import Detection, MetricsReport, average_precision, compute_report, match_detections
from .occlusion import OcclusionSpec, composite, harvest_patch, make_mask, simulate_occlusion
from .patchdb import Patch, PatchDb
from .proposals import ProposeConfig, propose, similarity
from .raster import crop, load_image, resize_preserve_aspect, save_image
from .segmentation import oversegment
from .synth import SceneSpec, Sprite, generate_corpus, generate_scene

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "Box",
    "ClassScore",
    "ConfirmPolicy",
    "Detection",
    "ExtractConfig",
    "ExtractResult",
    "HistogramModel",
    "LabeledBox",
    "ManifestEntry",
    "MetricsReport",
    "OcclusionSpec",
    "Patch",
    "PatchDb",
    "ProposeConfig",
    "SceneSpec",
    "Sprite",
    "average_precision",
    "composite",
    "compute_report",
    "confirm_boxes",
    "crop",
    "extract",
    "filter_proposals",
    "generate_corpus",
    "generate_scene",
    "harvest_patch",
    "iou",
    "load_image",
    "make_mask",
    "match_detections",
    "merge_pass",
    "merge_until",
    "oversegment",
    "propose",
    "read_manifest",
    "read_xml",
    "resize_preserve_aspect",
    "save_image",
    "similarity",
    "simulate_occlusion",
    "threshold_step",
    "train_baseline",
    "union_box",
    "write_manifest",
    "write_xml",
]
