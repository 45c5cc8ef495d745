"""Segmentation metrics, overlays, thin/thick vessel scoring and summary statistics."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage, special, stats

from .errors import DimensionMismatch, LengthMismatch, SingleClass, TooFewDomains, ZeroVariance

THIN_TAU = 1.2

TP_COLOR = (144, 238, 144)  # lightgreen
FP_COLOR = (240, 128, 128)  # lightcoral
FN_COLOR = (173, 216, 230)  # lightblue
TN_COLOR = (255, 255, 255)

REPORT_COLUMNS = ("dsc", "acc", "sp", "recall", "precision", "auc", "dsc_thin", "dsc_thick")
UNDEFINED = "NA"


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays if a is not None}
    if len(shapes) > 1:
        raise DimensionMismatch(f"shape mismatch: {sorted(shapes)}")


def confusion(pred: np.ndarray, gt: np.ndarray, roi: np.ndarray | None = None) -> ConfusionCounts:
    _same_shape(pred, gt, roi)
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    inside = np.ones_like(pred) if roi is None else np.asarray(roi, dtype=bool)
    tp = int(np.count_nonzero(pred & gt & inside))
    fp = int(np.count_nonzero(pred & ~gt & inside))
    fn = int(np.count_nonzero(~pred & gt & inside))
    tn = int(np.count_nonzero(inside)) - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def basic_metrics(c: ConfusionCounts) -> dict[str, float | None]:
    """DSC, accuracy, specificity, recall and precision; ``None`` where a denominator is zero.

    DSC is 1.0 when prediction and ground truth are both empty.
    """
    dsc_den = 2 * c.tp + c.fp + c.fn
    return {
        "dsc": 2 * c.tp / dsc_den if dsc_den else 1.0,
        "acc": _ratio(c.tp + c.tn, c.total),
        "sp": _ratio(c.tn, c.tn + c.fp),
        "recall": _ratio(c.tp, c.tp + c.fn),
        "precision": _ratio(c.tp, c.tp + c.fp),
    }


def auc_roc(prob: np.ndarray, gt: np.ndarray, roi: np.ndarray | None = None) -> float:
    """Exact ROC AUC from the Mann-Whitney rank sum, ties at midrank."""
    _same_shape(prob, gt, roi)
    scores = np.asarray(prob, dtype=np.float64)
    labels = np.asarray(gt, dtype=bool)
    if roi is not None:
        inside = np.asarray(roi, dtype=bool)
        scores, labels = scores[inside], labels[inside]
    scores, labels = scores.ravel(), labels.ravel()
    n_pos = int(np.count_nonzero(labels))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"need both classes, got {n_pos} positive / {n_neg} negative pixels")
    ranks = stats.rankdata(scores, method="average")
    u = math.fsum(ranks[labels]) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def error_overlay(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """uint8 RGB picture of TP (light green), FP (light red), FN (light blue) on white."""
    _same_shape(pred, gt)
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    out = np.empty(pred.shape + (3,), dtype=np.uint8)
    out[...] = TN_COLOR
    out[pred & gt] = TP_COLOR
    out[pred & ~gt] = FP_COLOR
    out[~pred & gt] = FN_COLOR
    return out


# Zhang-Suen neighbour order: P2..P9 = N, NE, E, SE, S, SW, W, NW
_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _zs_tables() -> tuple[np.ndarray, np.ndarray]:
    first = np.zeros(256, dtype=bool)
    second = np.zeros(256, dtype=bool)
    for code in range(256):
        p = [(code >> k) & 1 for k in range(8)]
        b = sum(p)
        a = sum(p[k] == 0 and p[(k + 1) % 8] == 1 for k in range(8))
        if not (2 <= b <= 6 and a == 1):
            continue
        p2, p4, p6, p8 = p[0], p[2], p[4], p[6]
        first[code] = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
        second[code] = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
    return first, second


ZS_FIRST, ZS_SECOND = _zs_tables()


def neighbour_codes(padded: np.ndarray) -> np.ndarray:
    """8-bit neighbourhood code for every interior pixel of a 1-padded image."""
    h, w = padded.shape[0] - 2, padded.shape[1] - 2
    code = np.zeros((h, w), dtype=np.intp)
    for k, (dy, dx) in enumerate(_OFFSETS):
        code |= padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w].astype(np.intp) << k
    return code


def _pixel_code(img: np.ndarray, r: int, c: int) -> int:
    code = 0
    for k, (dy, dx) in enumerate(_OFFSETS):
        if img[r + dy, c + dx]:
            code |= 1 << k
    return code


def skeletonize(m: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning.

    Each sub-iteration collects deletable pixels in parallel, then deletes them
    in row-major order, re-testing any pixel whose earlier neighbour was just
    removed.  Plain parallel deletion erases 2x2 blocks entirely; the re-test
    keeps every component alive.
    """
    img = np.pad(np.asarray(m, dtype=bool), 1)
    w = img.shape[1] - 2
    while True:
        changed = False
        for table in (ZS_FIRST, ZS_SECOND):
            inner = img[1:-1, 1:-1]
            cand = inner & table[neighbour_codes(img)]
            if not cand.any():
                continue
            changed = True
            cp = np.pad(cand, 1)
            earlier = cp[:-2, :-2] | cp[:-2, 1:-1] | cp[:-2, 2:] | cp[1:-1, :-2]
            # a candidate without an earlier candidate neighbour sees an unchanged neighbourhood
            dependent = (cand & earlier).ravel()
            for idx in np.flatnonzero(cand.ravel()):
                r, c = divmod(int(idx), w)
                if dependent[idx] and not table[_pixel_code(img, r + 1, c + 1)]:
                    continue
                img[r + 1, c + 1] = False
        if not changed:
            break
    return img[1:-1, 1:-1].copy()


def radius_map(m: np.ndarray) -> np.ndarray:
    """Euclidean distance from each foreground pixel to the nearest background pixel.

    Pixels outside the image count as background.
    """
    padded = np.pad(np.asarray(m, dtype=bool), 1)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def partition_thin_thick(m: np.ndarray, tau: float = THIN_TAU) -> tuple[np.ndarray, np.ndarray]:
    """Split vessel pixels by the centreline radius of their nearest skeleton pixel."""
    m = np.asarray(m, dtype=bool)
    if not m.any():
        return np.zeros_like(m), np.zeros_like(m)
    skel = skeletonize(m)
    radius = radius_map(m)
    thin_skel = skel & (radius <= tau)
    thick_skel = skel & ~thin_skel
    far = np.full(m.shape, np.inf)
    d_thin = ndimage.distance_transform_edt(~thin_skel) if thin_skel.any() else far
    d_thick = ndimage.distance_transform_edt(~thick_skel) if thick_skel.any() else far
    thin = m & (d_thin <= d_thick)
    return thin, m & ~thin


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A & B| / (|A| + |B|), 1.0 when both are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    den = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if den == 0:
        return 1.0
    return 2 * int(np.count_nonzero(a & b)) / den


def dsc_partitioned(pred: np.ndarray, gt: np.ndarray, tau: float = THIN_TAU) -> dict[str, float]:
    _same_shape(pred, gt)
    p_thin, p_thick = partition_thin_thick(pred, tau)
    t_thin, t_thick = partition_thin_thick(gt, tau)
    return {"dsc_thin": dice(p_thin, t_thin), "dsc_thick": dice(p_thick, t_thick)}


def domain_centers(labels: Sequence[str], features: np.ndarray) -> dict[str, np.ndarray]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) != len(labels):
        raise ValueError("features must be a 2-D array with one row per label")
    centers = {}
    for name in sorted(set(labels)):
        rows = [i for i, lab in enumerate(labels) if lab == name]
        centers[name] = features[rows].mean(axis=0)
    return centers


def domain_inter_distance(labels: Sequence[str], features: np.ndarray) -> float:
    """Mean Euclidean distance between domain centres over all unordered domain pairs."""
    centers = domain_centers(labels, features)
    if len(centers) < 2:
        raise TooFewDomains(f"need at least 2 domains, got {len(centers)}")
    dists = [float(np.linalg.norm(centers[a] - centers[b])) for a, b in combinations(sorted(centers), 2)]
    return math.fsum(dists) / len(dists)


class TTestResult(NamedTuple):
    t: float
    p_two_sided: float
    dof: int


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"paired samples need equal lengths, got {a.shape} and {b.shape}")
    n = len(a)
    if n < 2:
        raise LengthMismatch("need at least 2 pairs")
    d = a - b
    if np.all(d == d[0]):
        raise ZeroVariance("all paired differences are equal")
    mean = math.fsum(d) / n
    sd = math.sqrt(math.fsum((d - mean) ** 2) / (n - 1))
    t = mean / (sd / math.sqrt(n))
    dof = n - 1
    p = float(2.0 * special.stdtr(dof, -abs(t)))
    return TTestResult(t, min(p, 1.0), dof)


@dataclass
class MetricsReport:
    rows: list[tuple[str, dict[str, float | None]]] = field(default_factory=list)

    def add(self, image: str, values: dict[str, float | None]) -> None:
        self.rows.append((image, dict(values)))

    def means(self) -> dict[str, float | None]:
        out = {}
        for col in REPORT_COLUMNS:
            vals = [v[col] for _, v in self.rows if v.get(col) is not None]
            out[col] = math.fsum(vals) / len(vals) if vals else None
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("image," + ",".join(REPORT_COLUMNS) + "\n")

        def fmt(v):
            return UNDEFINED if v is None else f"{v:.6f}"

        for name, vals in self.rows + [("MEAN", self.means())]:
            buf.write(name + "," + ",".join(fmt(vals.get(c)) for c in REPORT_COLUMNS) + "\n")
        return buf.getvalue()
