"""Minimal open-vocabulary 3D segmentation.

RGB-D frames go in; a segmented, language-labeled point cloud comes out.
The pipeline accumulates a world-frame cloud, segments it geometrically by
region growing, reprojects each segment into its observing frames, embeds
scaled crops into an image/text feature space, and picks one feature per
segment by entropy over a prompt list. The studies module reproduces the
comparative experiments (crop scaling, fusion vs. upper bound,
entropy-list sensitivity) on synthetic data or real scenes.
"""

from .cloud import CloudPoint, LabeledCloud, accumulate, voxel_downsample
from .embedders import Embedder, MockEmbedder, OnnxEmbedder
from .errors import (DegenerateFusionError, DuplicateLabelError,
                     EmptyCloudError, ManifestError, MissingArtifactError,
                     OvsegError, StageError)
from .features import (ConceptDistribution, PromptList, build_prompt_list,
                       classify, concept_distribution, entropy,
                       normalize_feature, read_prompt_file, write_prompt_file)
from .fusion import (STRATEGIES, StrategyResult, ViewBundle, apply_strategy,
                     build_view_bundle, classify_mode, fuse_average,
                     fuse_weighted, select_max_score, select_min_entropy,
                     upper_bound_correct)
from .geometry import (CameraIntrinsics, Frame, PixelObservation, Pose,
                       backproject, project, project_points, visible,
                       visible_mask)
from .manifest import Manifest, RunConfig, load_manifest
from .metrics import (ClassificationRecord, object_accuracy,
                      segmentation_metrics, timing_report, transfer_labels,
                      upper_bound_accuracy, view_accuracy)
from .pipeline import run_pipeline
from .segmentation import (PointGeometry, Segmentation, estimate_geometry,
                           region_grow)
from .views import BoundingBox, SegmentView, associate, collect_views, crop, scale_bbox

__version__ = "0.1.0"
