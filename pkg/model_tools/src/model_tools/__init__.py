"""One-time preparation tools for the segmentation pipeline.

Exports CLIP-style backbones to ONNX interchange files (with a pure-numpy
reference evaluator to validate and run them when onnxruntime is absent),
precomputes OVPE prompt-embedding files, and converts public RGB-D
captures into the pipeline's manifest layout. Communicates with the
pipeline exclusively through these file formats.
"""

from .clip_export import DownloadError, export_backbone, export_model
from .datasets import (UnsupportedLayoutError, convert_dataset, convert_pose,
                       sample_labeled_mesh)
from .onnx_eval import ReferenceSession, make_session
from .prompts import export_prompts, write_ovpe

__version__ = "0.1.0"
