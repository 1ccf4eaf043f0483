"""Unsupervised object localization from self-supervised transformer patch features.

The toolkit consumes per-image feature exports (see tensorio for the wire
formats), localizes one object per image by low-degree seed selection and
expansion, provides an attention-map baseline, groups discovered boxes into
pseudo-classes, and evaluates with CorLoc, AP, odAP and CorRet.
"""

from .assignment import hungarian
from .attnseg import HeadSelection, head_box, select_head_box
from .boxes import DegenerateBoxError, PixelBox
from .cluster import ClusterClassMap, ClusterModel, kmeans, match_clusters, retrieve_neighbors
from .datasets import (
    AnnotationSet,
    DatasetFilter,
    Detection,
    apply_filter,
    parse_coco,
    parse_voc,
    read_predictions,
    write_predictions,
)
from .evalmetrics import EvalReport, average_precision, corloc, corret, iou, od_ap
from .kernels import BACKEND as KERNEL_BACKEND
from .localize import (
    PatchMask,
    SeedSet,
    build_mask,
    connected_components,
    expand_seed,
    extract_box,
    localize,
    localize_details,
    select_seed,
)
from .patchgraph import (
    DegreeMap,
    SimilarityMode,
    degree_map,
    degree_map_symqk,
    inverse_degree_field,
    similarity_sign,
    similarity_sign_symqk,
)
from .tensorio import (
    AttentionStack,
    CropDescriptor,
    FeatureMap,
    ImageManifest,
    read_attention_stack,
    read_crop_descriptors,
    read_feature_map,
    read_manifest,
    write_attention_stack,
    write_crop_descriptors,
    write_feature_map,
    write_manifest,
)

__version__ = "0.1.0"
