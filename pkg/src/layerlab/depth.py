"""Drawing-order pseudo-depth, depth maps, stratification, hole filling.

Pseudo-depth is the min-max normalization of integer draw orders into
[0,1]; it is a stratification signal, not metric 3D depth. K=2 clustering
of depth values splits self-occluding classes (fore-hair vs back-hair)
into front/back strata, and the overlap between the strata's footprints
is exported as a hole mask for inpainting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInput, UnknownClass
from .model import CharacterModel
from .raster import rasterize_mesh

DEPTH_INVALID = -1.0

BACK, FRONT = 0, 1


@dataclass(eq=False)
class PseudoDepthMap:
    """Per-pixel normalized depth with a validity mask.

    Invalid pixels store -1 so arrays stay NaN-free.
    """

    depth: np.ndarray  # H×W float64, -1 where invalid
    valid: np.ndarray  # H×W bool

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depth.shape != self.valid.shape:
            raise ValueError("depth and validity shapes differ")


@dataclass(eq=False)
class Strata:
    """Front/back split of one class's layer.

    assignments: -1 outside the class alpha mask, 0 BACK, 1 FRONT.
    hole_mask marks back-stratum content that the front stratum covers,
    i.e. the pixels newly exposed when the front stratum is lifted.
    """

    class_index: int
    assignments: np.ndarray  # H×W int8
    centroids: tuple[float, float]  # ascending
    hole_mask: np.ndarray  # H×W bool
    back_mesh_ids: tuple[int, ...] = ()
    front_mesh_ids: tuple[int, ...] = ()

    @property
    def is_split(self) -> bool:
        return bool(self.front_mesh_ids)


def pseudo_depth(model: CharacterModel) -> dict[int, float]:
    """Min-max normalized drawing order, mesh id -> d in [0,1].

    d = (z - z_min) / (z_max - z_min); a single-mesh model degenerates to
    d = 0 with a warning.
    """
    orders = np.array([m.draw_order for m in model.meshes], dtype=np.float64)
    if len(orders) == 1:
        warnings.warn("single-mesh model: pseudo-depth degenerates to 0")
        return {model.meshes[0].id: 0.0}
    z_min = orders.min()
    z_max = orders.max()
    d = (orders - z_min) / (z_max - z_min)
    return {m.id: float(d[i]) for i, m in enumerate(model.meshes)}


def render_depth_map(
    model: CharacterModel, class_index: Optional[int] = None
) -> PseudoDepthMap:
    """Per pixel, the depth of the topmost contributing mesh.

    A mesh contributes wherever its sampled alpha is positive, matching
    render_composite's semantics. With a class index, only that class's
    meshes are considered (mesh labels must be assigned).
    """
    if class_index is not None:
        model.taxonomy.check_index(class_index)
        if class_index < 0:
            raise UnknownClass("class index must be a real class")
    depths = pseudo_depth(model)
    width, height = model.canvas_size
    depth = np.full((height, width), DEPTH_INVALID, dtype=np.float64)
    valid = np.zeros((height, width), dtype=bool)
    for mesh in model.meshes_by_order():
        if class_index is not None and mesh.label != class_index:
            continue
        amap, _ = rasterize_mesh(model, mesh.id)
        footprint = amap.alpha > 0.0
        depth[footprint] = depths[mesh.id]
        valid |= footprint
    return PseudoDepthMap(depth=depth, valid=valid)


def _threshold_scan(sorted_values: np.ndarray) -> tuple[float, int]:
    """Exact 1-D 2-means via exhaustive threshold scan over sorted values.

    Returns (objective, split index); values[:split+1] form the low
    cluster. Only boundaries between strictly increasing neighbors are
    considered. O(n) after sorting via prefix sums.
    """
    n = len(sorted_values)
    prefix = np.concatenate([[0.0], np.cumsum(sorted_values)])
    prefix_sq = np.concatenate([[0.0], np.cumsum(sorted_values**2)])

    def sse(i: int, j: int) -> float:
        # Sum of squared deviations of values[i..j] from their mean.
        count = j - i + 1
        total = prefix[j + 1] - prefix[i]
        return float(prefix_sq[j + 1] - prefix_sq[i] - total * total / count)

    best = (np.inf, -1)
    for split in range(n - 1):
        if sorted_values[split] == sorted_values[split + 1]:
            continue
        objective = sse(0, split) + sse(split + 1, n - 1)
        if objective < best[0]:
            best = (objective, split)
    return best


def _lloyd(values: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Lloyd's iterations from (min, max) init; returns final centroids."""
    c0, c1 = float(values.min()), float(values.max())
    for _ in range(max_iter):
        right = values > (c0 + c1) / 2.0  # boundary ties go to the low cluster
        if right.all() or not right.any():
            break
        n0, n1 = float(values[~right].mean()), float(values[right].mean())
        if (n0, n1) == (c0, c1):
            break
        c0, c1 = n0, n1
    return c0, c1


def _objective(values: np.ndarray, c0: float, c1: float) -> float:
    d0 = (values - c0) ** 2
    d1 = (values - c1) ** 2
    return float(np.minimum(d0, d1).sum())


def kmeans2_1d(
    values: Sequence[float], seed: Optional[int] = None
) -> tuple[tuple[float, float], np.ndarray]:
    """Two-means clustering of 1-D values with a globally optimal objective.

    Runs Lloyd's iterations from the deterministic (min, max) init, then
    checks the result against the exhaustive sorted-threshold optimum and
    takes whichever split is better (the optimum is itself a Lloyd fixed
    point, but Lloyd alone can stall on a worse stable split). The seed is
    accepted for interface stability and unused: initialization is
    deterministic.

    Returns (centroids ascending, assignments of each input value to
    cluster 0/1). Raises DegenerateInput when fewer than two values or
    all values equal.
    """
    del seed
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size < 2:
        raise DegenerateInput("need at least two values to split")
    if arr.min() == arr.max():
        raise DegenerateInput("all values equal; nothing to split")

    c0, c1 = _lloyd(arr)
    lloyd_objective = _objective(arr, c0, c1)

    order = np.argsort(arr, kind="stable")
    sorted_values = arr[order]
    scan_objective, split = _threshold_scan(sorted_values)
    if scan_objective < lloyd_objective - 1e-12 * max(1.0, lloyd_objective):
        low = sorted_values[: split + 1]
        high = sorted_values[split + 1:]
        c0, c1 = float(low.mean()), float(high.mean())

    midpoint = (c0 + c1) / 2.0
    assignments = (arr > midpoint).astype(np.int8)
    # Recompute centroids from the final assignment so they are exact means.
    c0 = float(arr[assignments == 0].mean())
    c1 = float(arr[assignments == 1].mean())
    return (c0, c1), assignments


def kmeans_1d(
    values: Sequence[float], k: int, seed: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Exact 1-D k-means by dynamic programming over sorted prefixes.

    O(k n^2); intended for small inputs such as per-mesh depth values when
    more than two strata are requested. Returns (centroids ascending,
    assignments in input order).
    """
    del seed
    if k == 2:
        centroids, assignments = kmeans2_1d(values)
        return np.array(centroids), assignments
    arr = np.asarray(values, dtype=np.float64).ravel()
    n = arr.size
    if k < 1:
        raise DegenerateInput("k must be at least 1")
    if n < k or len(np.unique(arr)) < k:
        raise DegenerateInput(f"cannot split {n} values into {k} clusters")
    order = np.argsort(arr, kind="stable")
    s = arr[order]
    prefix = np.concatenate([[0.0], np.cumsum(s)])
    prefix_sq = np.concatenate([[0.0], np.cumsum(s**2)])

    def sse(i: int, j: int) -> float:
        count = j - i + 1
        total = prefix[j + 1] - prefix[i]
        return float(prefix_sq[j + 1] - prefix_sq[i] - total * total / count)

    cost = np.full((k + 1, n + 1), np.inf)
    back = np.zeros((k + 1, n + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for clusters in range(1, k + 1):
        for end in range(clusters, n + 1):
            for start in range(clusters - 1, end):
                c = cost[clusters - 1, start] + sse(start, end - 1)
                if c < cost[clusters, end]:
                    cost[clusters, end] = c
                    back[clusters, end] = start
    bounds = [n]
    for clusters in range(k, 0, -1):
        bounds.append(int(back[clusters, bounds[-1]]))
    bounds.reverse()  # 0 = b0 < b1 < ... < bk = n

    centroids = np.array([s[bounds[i]:bounds[i + 1]].mean() for i in range(k)])
    sorted_assign = np.empty(n, dtype=np.int8)
    for i in range(k):
        sorted_assign[bounds[i]:bounds[i + 1]] = i
    assignments = np.empty(n, dtype=np.int8)
    assignments[order] = sorted_assign
    return centroids, assignments


def stratify_layer(
    model: CharacterModel,
    class_index: int,
    depth_map: PseudoDepthMap,
    alpha: np.ndarray,
    mesh_level: bool = False,
) -> Strata:
    """Split one class's layer into front/back strata by depth clustering.

    Clusters the per-pixel depth values inside the alpha mask by default;
    mesh_level=True clusters the class meshes' own depth values instead
    (one sample per mesh). FRONT is the cluster with the larger centroid.
    Pixel assignments follow the nearer centroid. The hole mask is the
    overlap of the back and front strata's amodal footprints.

    Degenerate depth (constant) yields a single BACK stratum with an empty
    hole mask.
    """
    model.taxonomy.check_index(class_index)
    if class_index < 0:
        raise UnknownClass("class index must be a real class")
    alpha = np.asarray(alpha)
    mask = (alpha > 0.0) & depth_map.valid
    if not mask.any():
        raise DegenerateInput(f"class {class_index} has an empty alpha mask")

    class_meshes = [m for m in model.meshes if m.label == class_index]
    depths = pseudo_depth(model)

    if mesh_level:
        values = np.array([depths[m.id] for m in class_meshes], dtype=np.float64)
    else:
        values = depth_map.depth[mask]

    assignments = np.full(alpha.shape, -1, dtype=np.int8)
    try:
        (c0, c1), _ = kmeans2_1d(values)
    except DegenerateInput:
        assignments[mask] = BACK
        value = float(values[0]) if values.size else 0.0
        return Strata(
            class_index=class_index,
            assignments=assignments,
            centroids=(value, value),
            hole_mask=np.zeros(alpha.shape, dtype=bool),
            back_mesh_ids=tuple(m.id for m in class_meshes),
            front_mesh_ids=(),
        )

    midpoint = (c0 + c1) / 2.0
    assignments[mask] = np.where(depth_map.depth[mask] > midpoint, FRONT, BACK)

    back_ids = tuple(m.id for m in class_meshes if depths[m.id] <= midpoint)
    front_ids = tuple(m.id for m in class_meshes if depths[m.id] > midpoint)

    height, width = alpha.shape
    back_support = np.zeros((height, width), dtype=bool)
    front_support = np.zeros((height, width), dtype=bool)
    for mid in back_ids:
        back_support |= rasterize_mesh(model, mid)[0].alpha > 0.0
    for mid in front_ids:
        front_support |= rasterize_mesh(model, mid)[0].alpha > 0.0

    return Strata(
        class_index=class_index,
        assignments=assignments,
        centroids=(c0, c1),
        hole_mask=back_support & front_support,
        back_mesh_ids=back_ids,
        front_mesh_ids=front_ids,
    )


def _downsample(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average 2×2 blocks of weighted values; odd sizes are edge-padded."""
    h, w = weights.shape
    ph, pw = h + (h & 1), w + (w & 1)
    if (ph, pw) != (h, w):
        pv = np.zeros((ph, pw) + values.shape[2:], dtype=values.dtype)
        pw_arr = np.zeros((ph, pw), dtype=weights.dtype)
        pv[:h, :w] = values
        pw_arr[:h, :w] = weights
        values, weights = pv, pw_arr
    vw = values * weights[..., None]
    vw = vw.reshape(ph // 2, 2, pw // 2, 2, -1).sum(axis=(1, 3))
    wsum = weights.reshape(ph // 2, 2, pw // 2, 2).sum(axis=(1, 3))
    out = np.zeros_like(vw)
    nonzero = wsum > 0
    out[nonzero] = vw[nonzero] / wsum[nonzero][:, None]
    return out, (wsum > 0).astype(weights.dtype)


def fill_holes(layer: np.ndarray, hole_mask: np.ndarray) -> np.ndarray:
    """Push-pull fill of hole pixels from the surrounding known content.

    Downsamples averages of known pixels into a pyramid, then fills each
    unknown pixel from the coarsest level that has coverage above it
    (box upsampling). Known pixels are returned bit-exactly unchanged;
    a uniform known region fills with exactly that value.

    `layer` is H×W×C (any channel count); `hole_mask` is H×W bool.
    """
    layer = np.asarray(layer, dtype=np.float64)
    hole_mask = np.asarray(hole_mask, dtype=bool)
    if hole_mask.shape != layer.shape[:2]:
        raise ValueError("hole mask does not match the layer canvas")
    out = layer.copy()
    if not hole_mask.any():
        return out
    known = ~hole_mask
    if not known.any():
        return out

    flat_known = layer[known]
    if np.all(flat_known.min(axis=0) == flat_known.max(axis=0)):
        out[hole_mask] = flat_known[0]
        return out

    # Push: pyramid of (average of known pixels, coverage).
    levels = [(layer * known[..., None], known.astype(np.float64))]
    values, weights = levels[0]
    while values.shape[0] > 1 or values.shape[1] > 1:
        values, weights = _downsample(values, weights)
        levels.append((values, weights))
        if weights.all():
            break

    # Pull: fill unknown pixels from the first covered ancestor cell.
    filled = known.copy()
    result = out
    for level in range(1, len(levels)):
        if filled.all():
            break
        values, weights = levels[level]
        scale = 2**level
        ys, xs = np.nonzero(~filled)
        cell_y = ys // scale
        cell_x = xs // scale
        has_value = weights[cell_y, cell_x] > 0
        result[ys[has_value], xs[has_value]] = values[cell_y[has_value], cell_x[has_value]]
        filled[ys[has_value], xs[has_value]] = True
    return result
