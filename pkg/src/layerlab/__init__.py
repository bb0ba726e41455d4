"""layerlab: data engine for layered 2.5D character models.

Turns layered character archives (triangulated ArtMeshes with drawing
order) into pixel-perfect supervision: visibility masks, voted and
propagated part labels, drawing-order pseudo-depth, complete per-class
RGBA layers, front/back strata, layered PSD exports, and evaluation
metrics; plus a local annotation service.
"""

from .archive import (
    load_manifest,
    parse_model,
    save_manifest,
    save_model,
    serialize_model,
)
from .depth import (
    BACK,
    FRONT,
    PseudoDepthMap,
    Strata,
    fill_holes,
    kmeans2_1d,
    kmeans_1d,
    pseudo_depth,
    render_depth_map,
    stratify_layer,
)
from .errors import LayerLabError
from .labeling import (
    Label,
    LabelAssignment,
    LabelMap,
    ScoreStack,
    Source,
    max_pool_labels,
    propagate_labels,
    render_label_map,
    set_manual_label,
    snap_labels,
    vote_seed_labels,
)
from .layers import SemanticLayer, extract_all_layers, extract_layer, pad_gaussian, reconstruct
from .metrics import (
    MetricsReport,
    metric_depth,
    metric_dice_loss,
    metric_mask_mse,
    metric_psnr_ssim,
)
from .model import (
    ArtMesh,
    CharacterModel,
    DatasetManifest,
    DeformParameter,
    ManifestEntry,
    TextureAtlas,
    validate_manifest,
)
from .psd import PsdLayerEntry, export_psd, packbits_decode, packbits_encode, write_psd
from .raster import (
    AlphaMap,
    RGBAImage,
    VisibilityMask,
    apply_pose,
    generate_orientation_grid,
    over,
    rasterize_mesh,
    render_composite,
    visibility_masks,
)
from .taxonomy import BACKGROUND, UNLABELED, Taxonomy, class_color, default_taxonomy

__version__ = "0.1.0"
