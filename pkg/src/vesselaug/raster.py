"""Tree rasterization and binary mask post-processing."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .colonize import GrowthParams, VesselTree, assign_radii, grow, prune_short_branches
from .errors import DimensionMismatch

RADIUS_SLACK = 1e-9

STRUCTURES = {
    "cross": ndimage.generate_binary_structure(2, 1),
    "square": np.ones((3, 3), dtype=bool),
}


def _structure(se) -> np.ndarray:
    if isinstance(se, str):
        try:
            return STRUCTURES[se]
        except KeyError:
            raise ValueError(f"unknown structuring element {se!r}") from None
    se = np.asarray(se, dtype=bool)
    if se.shape != (3, 3):
        raise ValueError("structuring element must be 3x3")
    return se


def _stamp_capsules(img, a, b, ra, rb):
    """Paint capsules a[i]-b[i] with end radii ra[i], rb[i], batched by window size."""
    h, w = img.shape
    rmax = np.maximum(ra, rb) + RADIUS_SLACK
    x0 = np.maximum(np.floor(np.minimum(a[:, 0], b[:, 0]) - rmax), 0).astype(np.int64)
    x1 = np.minimum(np.ceil(np.maximum(a[:, 0], b[:, 0]) + rmax), w - 1).astype(np.int64)
    y0 = np.maximum(np.floor(np.minimum(a[:, 1], b[:, 1]) - rmax), 0).astype(np.int64)
    y1 = np.minimum(np.ceil(np.maximum(a[:, 1], b[:, 1]) + rmax), h - 1).astype(np.int64)
    keep = (x0 <= x1) & (y0 <= y1)
    # windows are rounded up to a multiple of 4 so similar capsules share one batch;
    # the extra pixels lie outside the tight box and can never be hit
    size = np.maximum(x1 - x0 + 1, y1 - y0 + 1)
    bucket = (size + 3) // 4 * 4
    for k in np.unique(bucket[keep]):
        idx = np.flatnonzero(keep & (bucket == k))
        offs = np.arange(k, dtype=np.float64)
        xs = (x0[idx, None] + offs)[:, None, :]
        ys = (y0[idx, None] + offs)[:, :, None]
        ax, ay = a[idx, 0, None, None], a[idx, 1, None, None]
        abx = (b[idx, 0] - a[idx, 0])[:, None, None]
        aby = (b[idx, 1] - a[idx, 1])[:, None, None]
        len2 = abx * abx + aby * aby
        safe = np.where(len2 > 0, len2, 1.0)
        t = np.where(len2 > 0, np.clip(((xs - ax) * abx + (ys - ay) * aby) / safe, 0.0, 1.0), 0.0)
        qx = ax + t * abx
        qy = ay + t * aby
        r = ra[idx, None, None] + t * (rb[idx] - ra[idx])[:, None, None]
        hit = np.hypot(xs - qx, ys - qy) <= r + RADIUS_SLACK
        hit &= (xs < w) & (ys < h)
        s, yy, xx = np.nonzero(hit)
        img[y0[idx][s] + yy, x0[idx][s] + xx] = 1.0


def rasterize(t: VesselTree, width: int, height: int) -> np.ndarray:
    """Paint every parent-child segment as a tapered capsule on a ``height x width`` canvas.

    A pixel is painted when its center lies within the linearly interpolated
    radius of the closest point on the segment axis.  Node disks are stamped
    too, so a root-only tree still shows up.
    """
    if len(t) == 0:
        raise ValueError("tree is empty")
    img = np.zeros((height, width), dtype=np.float64)
    pos, radii = t.positions, t.radii
    par = np.where(t.parents >= 0, t.parents, np.arange(len(t)))
    _stamp_capsules(img, pos[par], pos, radii[par], radii)
    return img


def threshold(img: np.ndarray, t: float) -> np.ndarray:
    if not 0 <= t <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    return np.asarray(img) > t


def label_components(m: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    rank = 1 if connectivity == 4 else 2
    return ndimage.label(np.asarray(m, dtype=bool), structure=ndimage.generate_binary_structure(2, rank))


def largest_component(m: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Keep the biggest component; ties go to the one whose first pixel comes first in row-major order."""
    labels, count = label_components(m, connectivity)
    if count == 0:
        return np.zeros_like(labels, dtype=bool)
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    sizes[0] = 0
    ids, first = np.unique(flat, return_index=True)
    first_at = np.full(count + 1, flat.size)
    first_at[ids] = first
    best = max(range(1, count + 1), key=lambda k: (sizes[k], -first_at[k]))
    return labels == best


def erode(m: np.ndarray, se="cross", iterations: int = 1) -> np.ndarray:
    """Binary erosion; pixels beyond the border count as background."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    m = np.asarray(m, dtype=bool)
    if iterations == 0:
        return m.copy()
    return ndimage.binary_erosion(m, structure=_structure(se), iterations=iterations, border_value=0)


def dilate(m: np.ndarray, se="cross", iterations: int = 1, border_value: bool = False) -> np.ndarray:
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    out = np.asarray(m, dtype=bool).copy()
    structure = _structure(se)
    for _ in range(iterations):
        padded = np.pad(out, 1, constant_values=border_value)
        h, w = out.shape
        grown = np.zeros_like(out)
        for dy in range(3):
            for dx in range(3):
                if structure[dy, dx]:
                    grown |= padded[dy : dy + h, dx : dx + w]
        out = grown
    return out


def fit_to_roi(m: np.ndarray, roi: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=bool)
    roi = np.asarray(roi, dtype=bool)
    if m.shape != roi.shape:
        raise DimensionMismatch(f"mask {m.shape} vs roi {roi.shape}")
    return m & roi


def make_structure_mask(
    roi: np.ndarray,
    params: GrowthParams,
    attractor_count: int = 3000,
    *,
    erosion_iterations: int = 1,
    se="cross",
    connectivity: int = 8,
    min_branch_length: float = 0.0,
    return_tree: bool = False,
):
    """Grow, paint and clean up one synthetic vessel mask inside ``roi``.

    Chain: grow -> Murray radii -> rasterize -> threshold(0) -> largest
    component -> erosion -> ROI fit, then the largest component is taken again
    because erosion or ROI trimming can split the vessel tree.
    """
    roi = np.asarray(roi, dtype=bool)
    tree = grow(roi, params, attractor_count)
    tree = prune_short_branches(tree, min_branch_length)
    tree = assign_radii(tree, params.leaf_radius, params.murray_exponent)
    h, w = roi.shape
    mask = threshold(rasterize(tree, w, h), 0.0)
    mask = largest_component(mask, connectivity)
    mask = erode(mask, se, erosion_iterations)
    mask = fit_to_roi(mask, roi)
    mask = largest_component(mask, connectivity)
    if return_tree:
        return mask, tree
    return mask
