"""Space colonization growth of 2-D vessel skeletons and Murray radius assignment.

Coordinates are continuous pixels, ``(x, y) = (column, row)``.  Pixel ``(c, r)``
covers ``[c - 0.5, c + 0.5) x [r - 0.5, r + 0.5)`` so its center is ``(c, r)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DegenerateDirection, EmptyRoi, InsufficientArea

DUPLICATE_TOL = 1e-6
DEGENERATE_NORM = 1e-9


@dataclass(frozen=True)
class GrowthParams:
    attraction_radius: float = 5.0
    kill_radius: float = 5.0
    segment_length: float = 20.0
    max_nodes: int = 2000
    perturb_sigma: float = 2.0
    leaf_radius: float = 1.0
    murray_exponent: float = 3.0
    seed: int = 0
    # (x, y); None places the root on the ROI's left side
    root: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("attraction_radius", "kill_radius", "segment_length", "leaf_radius", "murray_exponent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        if self.perturb_sigma < 0:
            raise ValueError("perturb_sigma must be >= 0")


@dataclass
class AttractorSet:
    points: np.ndarray  # (n, 2) float64
    alive: np.ndarray  # (n,) bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.alive = np.asarray(self.alive, dtype=bool).reshape(-1)
        if len(self.points) != len(self.alive):
            raise ValueError("points and alive must have equal length")

    @classmethod
    def from_points(cls, points) -> AttractorSet:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return cls(points, np.ones(len(points), dtype=bool))

    def __len__(self):
        return len(self.points)

    def copy(self) -> AttractorSet:
        return AttractorSet(self.points.copy(), self.alive.copy())


class TreeNode(NamedTuple):
    position: tuple[float, float]
    parent: int | None
    radius: float


@dataclass
class VesselTree:
    positions: np.ndarray  # (n, 2)
    parents: np.ndarray  # (n,) int, -1 marks the root
    radii: np.ndarray = field(default=None)  # (n,), zeros until assign_radii

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.parents = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        if self.radii is None:
            self.radii = np.zeros(len(self.positions))
        self.radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        if not (len(self.positions) == len(self.parents) == len(self.radii)):
            raise ValueError("positions, parents and radii must have equal length")

    def __len__(self):
        return len(self.positions)

    @property
    def nodes(self) -> list[TreeNode]:
        return [
            TreeNode((float(p[0]), float(p[1])), None if q < 0 else int(q), float(r))
            for p, q, r in zip(self.positions, self.parents, self.radii)
        ]

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(len(self))]
        for i, p in enumerate(self.parents):
            if p >= 0:
                kids[p].append(i)
        return kids

    def segment_lengths(self) -> np.ndarray:
        child = np.flatnonzero(self.parents >= 0)
        delta = self.positions[child] - self.positions[self.parents[child]]
        return np.hypot(delta[:, 0], delta[:, 1])

    def validate(self) -> None:
        """Raise ValueError unless the parent pointers form a single rooted tree."""
        roots = np.flatnonzero(self.parents < 0)
        if len(self) and len(roots) != 1:
            raise ValueError(f"expected exactly one root, found {len(roots)}")
        idx = np.arange(len(self))
        bad = (self.parents >= idx) | (self.parents < -1)
        if np.any(bad[self.parents >= 0]) or np.any(self.parents >= len(self)):
            raise ValueError("parent index must refer to an earlier node")

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"x": float(p[0]), "y": float(p[1]), "parent": None if q < 0 else int(q), "radius": float(r)}
                for p, q, r in zip(self.positions, self.parents, self.radii)
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> VesselTree:
        nodes = doc["nodes"]
        return cls(
            [(n["x"], n["y"]) for n in nodes],
            [-1 if n["parent"] is None else n["parent"] for n in nodes],
            [n.get("radius", 0.0) for n in nodes],
        )


def _rng(seed: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), *tag]))


def _foreground_centers(roi: np.ndarray) -> np.ndarray:
    rc = np.argwhere(np.asarray(roi, dtype=bool))
    return rc[:, ::-1].astype(np.float64)


def sample_attractors(roi: np.ndarray, count: int, seed: int) -> AttractorSet:
    """Draw ``count`` distinct foreground pixel centers of ``roi`` uniformly."""
    if count < 1:
        raise ValueError("count must be >= 1")
    centers = _foreground_centers(roi)
    if len(centers) == 0:
        raise EmptyRoi("ROI has no foreground pixels")
    if len(centers) < count:
        raise InsufficientArea(f"ROI has {len(centers)} foreground pixels, need {count}")
    pick = _rng(seed, 0).choice(len(centers), size=count, replace=False)
    return AttractorSet.from_points(centers[pick])


def inside_mask(points: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Which points fall in a foreground pixel of ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    col = np.floor(points[:, 0] + 0.5)
    row = np.floor(points[:, 1] + 0.5)
    h, w = mask.shape
    ok = (col >= 0) & (col < w) & (row >= 0) & (row < h)
    out = np.zeros(len(points), dtype=bool)
    out[ok] = mask[row[ok].astype(np.intp), col[ok].astype(np.intp)]
    return out


def perturb_attractors(a: AttractorSet, sigma: float, seed: int, roi: np.ndarray) -> AttractorSet:
    """Jitter live attractors by N(0, sigma^2) per axis, snapping escapees back into ``roi``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = a.copy()
    if sigma == 0 or len(a) == 0:
        return out
    noise = _rng(seed, 1).normal(0.0, sigma, size=(len(a), 2))
    live = out.alive
    out.points[live] += noise[live]
    outside = live & ~inside_mask(out.points, roi)
    if np.any(outside):
        # the nearest foreground center to an outside point always has a
        # background 4-neighbour, so the search can skip interior pixels
        fg = np.asarray(roi, dtype=bool)
        centers = _foreground_centers(fg & ~ndimage.binary_erosion(fg, border_value=0))
        if len(centers) == 0:
            raise EmptyRoi("ROI has no foreground pixels")
        _, nearest = cKDTree(centers).query(out.points[outside])
        out.points[outside] = centers[nearest]
    return out


def _sq_dist(points: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    dx = points[:, None, 0] - nodes[None, :, 0]
    dy = points[:, None, 1] - nodes[None, :, 1]
    return dx * dx + dy * dy


def associate_attractors(a: AttractorSet, t: VesselTree, d: float) -> dict[int, int]:
    """Map each live attractor to its nearest node when that node is closer than ``d``."""
    if len(t) == 0:
        raise ValueError("tree is empty")
    live = np.flatnonzero(a.alive)
    if live.size == 0:
        return {}
    d2 = _sq_dist(a.points[live], t.positions)
    nearest = np.argmin(d2, axis=1)  # first minimum, so ties go to the lowest index
    best = d2[np.arange(len(live)), nearest]
    hit = best < d * d
    return {int(i): int(j) for i, j in zip(live[hit], nearest[hit])}


def _unit_mean(vectors: np.ndarray) -> np.ndarray:
    norms = np.hypot(vectors[:, 0], vectors[:, 1])
    units = np.zeros_like(vectors)
    nz = norms > 0
    units[nz] = vectors[nz] / norms[nz, None]
    mean = units.mean(axis=0)
    n = float(np.hypot(mean[0], mean[1]))
    if n < DEGENERATE_NORM:
        raise DegenerateDirection(f"mean direction norm {n:.3g}")
    return mean / n


def growth_directions(t: VesselTree, assoc: dict[int, int], attractors: AttractorSet) -> dict[int, np.ndarray]:
    """Unit growth direction per influenced node; nodes whose pulls cancel are left out."""
    by_node: dict[int, list[int]] = {}
    for ai, ni in assoc.items():
        by_node.setdefault(ni, []).append(ai)
    out = {}
    for ni in sorted(by_node):
        vecs = attractors.points[by_node[ni]] - t.positions[ni]
        try:
            out[ni] = _unit_mean(vecs)
        except DegenerateDirection:
            continue
    return out


def default_root(roi: np.ndarray) -> tuple[float, float]:
    """Foreground pixel center nearest the midpoint of the ROI bounding box's left edge."""
    rc = np.argwhere(np.asarray(roi, dtype=bool))
    if len(rc) == 0:
        raise EmptyRoi("ROI has no foreground pixels")
    target = np.array([rc[:, 1].min(), (rc[:, 0].min() + rc[:, 0].max()) / 2.0])
    centers = rc[:, ::-1].astype(np.float64)
    d2 = ((centers - target) ** 2).sum(axis=1)
    x, y = centers[int(np.argmin(d2))]
    return float(x), float(y)


def colonize(
    attractors: AttractorSet,
    root: tuple[float, float],
    params: GrowthParams,
    log: list | None = None,
) -> tuple[VesselTree, AttractorSet]:
    """Run the associate / grow / prune loop from a single root node.

    Returns the tree and the final attractor liveness.  When ``log`` is a list,
    one dict per iteration is appended with the node indices added, the
    attractors pruned, and the attractors retired by stall handling.
    """
    attractors = attractors.copy()
    pts, alive = attractors.points, attractors.alive
    m = params.max_nodes
    d2_attr = params.attraction_radius**2
    d2_kill = params.kill_radius**2
    seg = params.segment_length

    pos = np.empty((m, 2))
    parents = np.full(m, -1, dtype=np.int64)
    pos[0] = root
    n = 1

    # nearest node per attractor, maintained incrementally
    near = np.zeros(len(pts), dtype=np.int64)
    near_d2 = _sq_dist(pts, pos[:1])[:, 0] if len(pts) else np.zeros(0)

    iteration = 0
    while n < m:
        live = np.flatnonzero(alive)
        if live.size == 0:
            break
        influenced = live[near_d2[live] < d2_attr]
        if influenced.size == 0:
            # nothing can move: no node gets closer without growth
            break
        iteration += 1
        owners = near[influenced]
        vec = pts[influenced] - pos[owners]
        norm = np.hypot(vec[:, 0], vec[:, 1])
        unit = np.zeros_like(vec)
        nz = norm > 0
        unit[nz] = vec[nz] / norm[nz, None]
        uniq, inv = np.unique(owners, return_inverse=True)
        sums = np.zeros((len(uniq), 2))
        np.add.at(sums, inv, unit)
        counts = np.bincount(inv, minlength=len(uniq))
        mean = sums / counts[:, None]
        mnorm = np.hypot(mean[:, 0], mean[:, 1])
        ok = mnorm >= DEGENERATE_NORM
        grow_from = uniq[ok]
        cand = pos[grow_from] + seg * (mean[ok] / mnorm[ok, None])

        added: list[int] = []
        if len(cand):
            clear = _sq_dist(cand, pos[:n]).min(axis=1) > DUPLICATE_TOL**2
            # candidates of the same iteration may also coincide; first one wins
            close = _sq_dist(cand, cand) <= DUPLICATE_TOL**2
            blocked = np.zeros(len(cand), dtype=bool)
            for ci in np.flatnonzero(clear):
                if n >= m:
                    break
                if blocked[ci]:
                    continue
                blocked |= close[ci]
                pos[n] = cand[ci]
                parents[n] = grow_from[ci]
                added.append(n)
                n += 1

        entry = {"iteration": iteration, "added": added, "pruned": [], "stalled": []}
        if not added:
            alive[influenced] = False
            entry["stalled"] = influenced.tolist()
        else:
            new = np.asarray(added)
            d2 = _sq_dist(pts[live], pos[new])
            j = np.argmin(d2, axis=1)
            best = d2[np.arange(len(live)), j]
            better = best < near_d2[live]
            near[live[better]] = new[j[better]]
            near_d2[live[better]] = best[better]
            killed = live[near_d2[live] < d2_kill]
            alive[killed] = False
            entry["pruned"] = killed.tolist()
        if log is not None:
            log.append(entry)

    tree = VesselTree(pos[:n].copy(), parents[:n].copy())
    return tree, attractors


def grow(roi: np.ndarray, params: GrowthParams, attractor_count: int = 3000, log: list | None = None) -> VesselTree:
    """Sample, perturb and colonize attractors inside ``roi``."""
    attractors = sample_attractors(roi, attractor_count, params.seed)
    attractors = perturb_attractors(attractors, params.perturb_sigma, params.seed, roi)
    root = params.root if params.root is not None else default_root(roi)
    tree, _ = colonize(attractors, root, params, log=log)
    return tree


def assign_radii(t: VesselTree, leaf_radius: float, n: float = 3.0) -> VesselTree:
    """Murray's law, leaves to root: ``r_parent**n = sum(r_child**n)``."""
    radii = np.zeros(len(t))
    kids = t.children()
    # children always carry larger indices than their parent
    for i in range(len(t) - 1, -1, -1):
        ks = kids[i]
        if not ks:
            radii[i] = leaf_radius
        elif len(ks) == 1:
            radii[i] = radii[ks[0]]
        else:
            radii[i] = float(np.sum(radii[ks] ** n)) ** (1.0 / n)
    return VesselTree(t.positions.copy(), t.parents.copy(), radii)


def prune_short_branches(t: VesselTree, min_length: float) -> VesselTree:
    """Drop terminal branches shorter than ``min_length`` (one pass, root kept)."""
    if min_length <= 0 or len(t) <= 1:
        return t
    kids = t.children()
    seglen = np.zeros(len(t))
    child = np.flatnonzero(t.parents >= 0)
    seglen[child] = t.segment_lengths()
    drop = np.zeros(len(t), dtype=bool)
    for leaf in (i for i in range(len(t)) if not kids[i]):
        chain, length, i = [], 0.0, leaf
        while t.parents[i] >= 0 and len(kids[i]) <= 1:
            chain.append(i)
            length += seglen[i]
            i = t.parents[i]
        if length < min_length and len(kids[i]) > 1:
            drop[chain] = True
    keep = np.flatnonzero(~drop)
    remap = np.full(len(t), -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    parents = np.where(t.parents[keep] >= 0, remap[np.maximum(t.parents[keep], 0)], -1)
    return VesselTree(t.positions[keep], parents, t.radii[keep])

