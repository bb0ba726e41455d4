"""Independent reference implementations used as test oracles.

These deliberately avoid the library's code paths: per-pixel loops and
direct formula evaluation instead of incremental/vectorized algorithms.
"""

from __future__ import annotations

import numpy as np

from layerlab.model import CharacterModel
from layerlab.raster import rasterize_mesh


def point_in_triangle(px: float, py: float, v0, v1, v2) -> bool:
    """Coverage rule at one point: positive edge functions with the
    top-left rule on exact boundaries (documented fill rule)."""
    area2 = (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0])
    if area2 == 0.0:
        return False
    if area2 < 0.0:
        v1, v2 = v2, v1
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        e = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
        if e > 0.0:
            continue
        if e < 0.0:
            return False
        dx, dy = b[0] - a[0], b[1] - a[1]
        if not ((dy == 0.0 and dx > 0.0) or dy < 0.0):
            return False
    return True


def coverage_bruteforce(width: int, height: int, vertices, triangles) -> np.ndarray:
    out = np.zeros((height, width), dtype=bool)
    for y in range(height):
        for x in range(width):
            px, py = x + 0.5, y + 0.5
            for tri in triangles:
                if point_in_triangle(px, py, *(vertices[i] for i in tri)):
                    out[y, x] = True
                    break
    return out


def composite_bruteforce(model: CharacterModel, visible=None) -> np.ndarray:
    """Straight-alpha painter's algorithm, evaluated per pixel from the
    front: walks meshes front-to-back accumulating coverage directly."""
    width, height = model.canvas_size
    rasters = {}
    for mesh in model.meshes:
        if visible is not None and mesh.id not in visible:
            continue
        amap, rgb = rasterize_mesh(model, mesh.id)
        rasters[mesh.id] = (amap.alpha, rgb)
    out = np.zeros((height, width, 4))
    ordered = sorted(rasters, key=lambda mid: -model.mesh(mid).draw_order)
    for y in range(height):
        for x in range(width):
            remaining = 1.0
            rgb_acc = np.zeros(3)
            a_acc = 0.0
            for mid in ordered:
                alpha, rgb = rasters[mid]
                a = alpha[y, x]
                if a == 0.0:
                    continue
                rgb_acc += remaining * a * rgb[y, x]
                a_acc += remaining * a
                remaining *= 1.0 - a
                if remaining == 0.0:
                    break
            out[y, x, :3] = rgb_acc / a_acc if a_acc > 0.0 else 0.0
            out[y, x, 3] = a_acc
    return out


def visibility_bruteforce(model: CharacterModel, tau: float, alphas) -> dict[int, np.ndarray]:
    """Direct transmittance product per mesh (no shared accumulator)."""
    masks = {}
    for mesh in model.meshes:
        survival = alphas[mesh.id].copy()
        for other in model.meshes:
            if other.draw_order > mesh.draw_order:
                survival = survival * (1.0 - alphas[other.id])
        masks[mesh.id] = survival >= tau
    return masks


def vote_bruteforce(model: CharacterModel, scores: np.ndarray, masks) -> dict[int, tuple[int, float]]:
    """Mean/argmax per mesh via explicit pixel iteration."""
    n_classes = scores.shape[2]
    out = {}
    for mesh in model.meshes:
        ys, xs = np.nonzero(masks[mesh.id])
        if len(ys) == 0:
            out[mesh.id] = (-1, 0.0)
            continue
        sums = np.zeros(n_classes)
        for y, x in zip(ys, xs):
            sums += scores[y, x]
        means = sums / len(ys)
        best = 0
        for c in range(1, n_classes):
            if means[c] > means[best]:
                best = c
        out[mesh.id] = (best, float(means[best]))
    return out


def kmeans2_threshold_objective(values: np.ndarray) -> float:
    """Exhaustive best within-cluster sum of squares over sorted splits."""
    s = np.sort(np.asarray(values, dtype=np.float64))
    best = np.inf
    for i in range(len(s) - 1):
        left, right = s[: i + 1], s[i + 1 :]
        obj = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
        best = min(best, obj)
    return float(best)


def within_cluster_ss(values, centroids, assignments) -> float:
    values = np.asarray(values, dtype=np.float64)
    total = 0.0
    for v, a in zip(values, assignments):
        total += (v - centroids[a]) ** 2
    return total


def _tokens_scanner(name: str) -> set[str]:
    """Character-walk tokenizer: split at non-alphanumerics, lower->upper
    transitions, acronym ends, and letter<->digit boundaries."""
    pieces = []
    current = ""
    prev = ""
    for i, ch in enumerate(name):
        if not ch.isalnum():
            if current:
                pieces.append(current)
            current = ""
            prev = ch
            continue
        boundary = False
        if current:
            if prev.islower() and ch.isupper():
                boundary = True
            elif prev.isupper() and ch.isupper() and i + 1 < len(name) and name[i + 1].islower():
                boundary = True
            elif prev.isalpha() != ch.isalpha():
                boundary = True
        if boundary:
            pieces.append(current)
            current = ""
        current += ch
        prev = ch
    if current:
        pieces.append(current)
    return {p.lower() for p in pieces if len(p) >= 3}


def propagate_oracle(model: CharacterModel, labeled: dict[int, int], weights) -> dict[int, tuple[int, str]]:
    """Scripted three-stage propagation walk; returns mesh -> (class, stage)
    for every mesh it resolves. Voters are only the initially labeled meshes."""
    from collections import defaultdict

    names = {m.id: m.name for m in model.meshes}
    paths = {m.id: m.hierarchy_path for m in model.meshes}
    tokens = {mid: _tokens_scanner(names[mid]) for mid in names}

    def majority(candidates) -> tuple[int, float] | None:
        if not candidates:
            return None
        votes = defaultdict(float)
        for mid in candidates:
            votes[labeled[mid]] += weights.get(mid, 0.0)
        if all(v == 0.0 for v in votes.values()):
            votes = defaultdict(float)
            for mid in candidates:
                votes[labeled[mid]] += 1.0
        ranked = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[0][0], ranked[0][1]

    resolved = {}
    for mesh in model.meshes:
        if mesh.id in labeled:
            continue
        shared = [mid for mid in labeled if mid != mesh.id and tokens[mid] & tokens[mesh.id]]
        outcome = majority(shared)
        if outcome is not None:
            resolved[mesh.id] = (outcome[0], "STRING")
            continue
        siblings = [mid for mid in labeled if mid != mesh.id and paths[mid] == paths[mesh.id]]
        outcome = majority(siblings)
        if outcome is not None:
            resolved[mesh.id] = (outcome[0], "SIBLING")
            continue
        path = paths[mesh.id]
        prefixes = [path[:i] for i in range(len(path) - 1, -1, -1)] if path else [()]
        for prefix in prefixes:
            descendants = [
                mid for mid in labeled
                if mid != mesh.id and paths[mid][: len(prefix)] == prefix
            ]
            outcome = majority(descendants)
            if outcome is not None:
                resolved[mesh.id] = (outcome[0], "PARENT")
                break
    return resolved


def psnr_scalar(x: np.ndarray, y: np.ndarray) -> float:
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return 100.0
    return min(-10.0 * np.log10(mse), 100.0)


def ssim_scalar(x: np.ndarray, y: np.ndarray, sigma=1.5, radius=5, k1=0.01, k2=0.03) -> float:
    """Direct sliding-window SSIM over fully interior windows, per channel."""
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    g /= g.sum()
    kernel = np.outer(g, g)
    c1, c2 = k1**2, k2**2
    h, w = x.shape[:2]
    values = []
    for c in range(x.shape[2]):
        xc, yc = x[:, :, c], y[:, :, c]
        win_vals = []
        for cy in range(radius, h - radius):
            for cx in range(radius, w - radius):
                wx = xc[cy - radius : cy + radius + 1, cx - radius : cx + radius + 1]
                wy = yc[cy - radius : cy + radius + 1, cx - radius : cx + radius + 1]
                mu_x = float((kernel * wx).sum())
                mu_y = float((kernel * wy).sum())
                var_x = float((kernel * wx * wx).sum()) - mu_x**2
                var_y = float((kernel * wy * wy).sum()) - mu_y**2
                cov = float((kernel * wx * wy).sum()) - mu_x * mu_y
                win_vals.append(
                    ((2 * mu_x * mu_y + c1) * (2 * cov + c2))
                    / ((mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))
                )
        values.append(np.mean(win_vals))
    return float(np.mean(values))
