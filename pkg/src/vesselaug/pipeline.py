"""Batch commands: generate masks, augment images, evaluate, and statistics helpers.

Every command returns plain Python data and writes its artifacts
deterministically: per-item seeds come from :func:`item_seed`, workers may
finish in any order but files are committed in index order, and logs carry no
wall-clock data unless timings are requested.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import imageio, losses
from .config import DatasetManifest, PipelineConfig, item_seed, thread_count
from .errors import DataError, EmptyRoi, MissingPair, NoMixers, SingleClass
from .metrics import (
    MetricsReport,
    auc_roc,
    basic_metrics,
    confusion,
    domain_centers,
    domain_inter_distance,
    dsc_partitioned,
    error_overlay,
    paired_t_test,
)
from .raster import make_structure_mask
from .styleaug import pixmix

log = logging.getLogger(__name__)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _run(fn: Callable, jobs: Sequence, threads: int | None = None) -> list:
    """Map ``fn`` over ``jobs``; results come back in job order regardless of pool size."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


# -- gen ---------------------------------------------------------------------


@lru_cache(maxsize=8)
def _load_roi(path: str, resize: tuple[int, int] | None) -> np.ndarray:
    roi = imageio.read_mask(path)
    if resize is not None:
        roi = imageio.resize_mask(roi, *resize)
    return roi


def _gen_one(job) -> tuple[bytes, str, float]:
    roi_path, cfg, seed = job
    start = time.perf_counter()
    roi = _load_roi(roi_path, cfg.resize)
    if not roi.any():
        raise EmptyRoi(f"{roi_path}: ROI has no foreground pixels")
    mask, tree = make_structure_mask(
        roi,
        replace(cfg.growth, seed=seed),
        cfg.attractor_count,
        erosion_iterations=cfg.erosion_iterations,
        se=cfg.structuring_element,
        connectivity=cfg.connectivity,
        min_branch_length=cfg.min_branch_length,
        return_tree=True,
    )
    return imageio.mask_png(mask), tree.to_json() + "\n", time.perf_counter() - start


def gen_filename(dataset: str, index: int) -> str:
    return f"{dataset}_gen_{index:04d}.png"


def cmd_gen(
    manifests: Sequence[DatasetManifest],
    cfg: PipelineConfig,
    out_dir,
    *,
    threads: int | None = None,
    timings: bool = False,
) -> dict:
    """Write ``masks_per_dataset`` synthetic masks (+ tree JSON) per dataset and a run log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs, items = [], []
    for ds in manifests:
        rois = ds.rois()
        if cfg.masks_per_dataset and not rois:
            raise DataError(f"dataset {ds.name!r} has no ROI paths")
        for index in range(cfg.masks_per_dataset):
            roi = str(rois[index % len(rois)])
            seed = item_seed(cfg.master_seed, ds.name, index)
            jobs.append((roi, cfg, seed))
            items.append({"dataset": ds.name, "index": index, "seed": seed, "roi": roi})

    results = _run(_gen_one, jobs, threads)
    for item, (png, tree_json, seconds) in zip(items, results):
        name = gen_filename(item["dataset"], item["index"])
        (out / name).write_bytes(png)
        tree_name = Path(name).with_suffix(".json").name
        (out / tree_name).write_text(tree_json)
        item.update(mask=name, tree=tree_name)
        if timings:
            item["seconds"] = round(seconds, 6)
    run_log = {"command": "gen", "master_seed": cfg.master_seed, "config": cfg.to_dict(), "items": items}
    (out / "run_log.json").write_text(dump_json(run_log))
    log.info("gen: wrote %d masks to %s", len(items), out)
    return run_log


# -- augment -------------------------------------------------------------------


@lru_cache(maxsize=64)
def _load_rgb(path: str) -> np.ndarray:
    return imageio.read_rgb(path)


def _augment_one(job) -> bytes:
    image_path, mixer_paths, style, seed = job
    x = _load_rgb(image_path)
    h, w = x.shape[:2]
    mixers = [imageio.resize_rgb(_load_rgb(p), w, h) for p in mixer_paths]
    return imageio.rgb_png(pixmix(x, mixers, replace(style, seed=seed)))


def cmd_augment(
    manifests: Sequence[DatasetManifest],
    mixers_dir,
    cfg: PipelineConfig,
    out_dir,
    *,
    threads: int | None = None,
) -> dict:
    """One PixMix output per input image; labels are copied alongside unchanged.

    ``mixers_dir="self"`` mixes each image with the other images of its dataset.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    self_mode = str(mixers_dir) == "self"
    shared: list[str] = []
    if not self_mode:
        shared = [str(p) for p in imageio.list_images(mixers_dir)]
        if not shared:
            raise NoMixers(f"{mixers_dir}: no images found")

    jobs, items = [], []
    for ds in manifests:
        images = [str(e.image) for e in ds.entries if e.image is not None]
        for index, entry in enumerate(e for e in ds.entries if e.image is not None):
            if self_mode:
                mixer_paths = [p for p in images if p != str(entry.image)] or [str(entry.image)]
            else:
                mixer_paths = shared
            seed = item_seed(cfg.master_seed, ds.name, index)
            jobs.append((str(entry.image), tuple(mixer_paths), cfg.style, seed))
            items.append({"dataset": ds.name, "index": index, "seed": seed, "source": str(entry.image), "entry": entry})

    results = _run(_augment_one, jobs, threads)
    for item, png in zip(items, results):
        entry = item.pop("entry")
        name = f"{entry.image.stem}_aug.png"
        (out / "images" / name).write_bytes(png)
        item["image"] = f"images/{name}"
        if entry.mask is not None:
            (out / "masks").mkdir(exist_ok=True)
            label = f"{entry.image.stem}_aug{entry.mask.suffix}"
            shutil.copyfile(entry.mask, out / "masks" / label)
            item["mask"] = f"masks/{label}"
    run_log = {
        "command": "augment",
        "master_seed": cfg.master_seed,
        "mixers": "self" if self_mode else [Path(p).name for p in shared],
        "style": asdict(cfg.style),
        "items": items,
    }
    (out / "run_log.json").write_text(dump_json(run_log))
    return run_log


# -- eval ----------------------------------------------------------------------


def _by_stem(directory) -> dict[str, Path]:
    return {p.stem: p for p in imageio.list_images(directory)}


def pair_files(pred_dir, gt_dir, roi_dir=None) -> list[tuple[str, Path, Path, Path | None]]:
    preds, gts = _by_stem(pred_dir), _by_stem(gt_dir)
    rois = _by_stem(roi_dir) if roi_dir is not None else {}
    missing = sorted(set(preds) ^ set(gts))
    if roi_dir is not None:
        missing += sorted(s for s in preds if s in gts and s not in rois)
    if missing:
        raise MissingPair("unmatched files: " + ", ".join(missing))
    return [(s, preds[s], gts[s], rois.get(s)) for s in sorted(preds)]


def evaluate_pair(prob, gt, roi=None, *, binarize_threshold=0.5, thin=False, tau=1.2) -> dict:
    """Metric row for one prediction (probabilities in [0, 1]) against a binary label."""
    pred = prob > binarize_threshold
    row: dict = dict(basic_metrics(confusion(pred, gt, roi)))
    try:
        row["auc"] = auc_roc(prob, gt, roi)
    except SingleClass:
        row["auc"] = None
    row["dsc_thin"] = row["dsc_thick"] = None
    if thin:
        inside = np.ones_like(gt) if roi is None else roi
        row.update(dsc_partitioned(pred & inside, gt & inside, tau))
    return row


def _eval_one(job):
    stem, pred_path, gt_path, roi_path, threshold, thin, tau, want_overlay = job
    prob = imageio.read_gray(pred_path)
    gt = imageio.read_mask(gt_path)
    roi = imageio.read_mask(roi_path) if roi_path is not None else None
    row = evaluate_pair(prob, gt, roi, binarize_threshold=threshold, thin=thin, tau=tau)
    overlay = None
    if want_overlay:
        pred = prob > threshold
        if roi is not None:
            pred, gt = pred & roi, gt & roi
        overlay = imageio.png_bytes(error_overlay(pred, gt))
    return stem, row, overlay


def cmd_eval(
    pred_dir,
    gt_dir,
    roi_dir,
    cfg: PipelineConfig,
    report_path,
    *,
    overlay_dir=None,
    thin: bool = False,
    threads: int | None = None,
) -> MetricsReport:
    pairs = pair_files(pred_dir, gt_dir, roi_dir)
    jobs = [
        (s, p, g, r, cfg.binarize_threshold, thin, cfg.thin_threshold_tau, overlay_dir is not None)
        for s, p, g, r in pairs
    ]
    report = MetricsReport()
    if overlay_dir is not None:
        Path(overlay_dir).mkdir(parents=True, exist_ok=True)
    for stem, row, overlay in _run(_eval_one, jobs, threads):
        report.add(stem, row)
        if overlay is not None:
            (Path(overlay_dir) / f"{stem}_overlay.png").write_bytes(overlay)
    Path(report_path).parent.mkdir(parents=True, exist_ok=True)
    Path(report_path).write_text(report.to_csv())
    return report


# -- distance / ttest ------------------------------------------------------------


def read_features(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty feature table")
    if rows[0][0].strip().lower() == "domain":
        rows = rows[1:]
    labels = [r[0].strip() for r in rows]
    try:
        feats = np.array([[float(v) for v in r[1:]] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if feats.ndim != 2 or feats.shape[1] == 0:
        raise DataError(f"{path}: rows must share a nonzero feature dimension")
    return labels, feats


def cmd_distance(features_csv, out=None) -> dict:
    labels, feats = read_features(features_csv)
    value = domain_inter_distance(labels, feats)
    domains = sorted(domain_centers(labels, feats))
    result = {
        "inter_distance": value,
        "n_domains": len(domains),
        "n_pairs": len(list(combinations(domains, 2))),
        "domains": domains,
    }
    if out is not None:
        Path(out).write_text(dump_json(result))
    return result


def read_scores(path, column: str = "dsc") -> dict[str, float] | list[float]:
    """Scores from a report CSV (keyed by image, MEAN row dropped) or a bare column of numbers."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no scores")
    header = [c.strip() for c in rows[0]]
    if "image" in header:
        if column not in header:
            raise DataError(f"{path}: no column {column!r}")
        ki, vi = header.index("image"), header.index(column)
        out = {}
        for r in rows[1:]:
            if r[ki] == "MEAN" or r[vi] in ("", "NA"):
                continue
            out[r[ki]] = float(r[vi])
        return out
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    try:
        return [float(r[0]) for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_ttest(a_csv, b_csv, column: str = "dsc") -> dict:
    a = read_scores(a_csv, column)
    b = read_scores(b_csv, column)
    if isinstance(a, dict) and isinstance(b, dict):
        keys = sorted(a)
        if set(keys) != set(b):
            raise MissingPair("unmatched images: " + ", ".join(sorted(set(a) ^ set(b))))
        a, b = [a[k] for k in keys], [b[k] for k in keys]
    elif isinstance(a, dict) or isinstance(b, dict):
        raise DataError("both inputs must be reports or both plain score lists")
    res = paired_t_test(a, b)
    return {"t": res.t, "p": res.p_two_sided, "dof": res.dof, "n": len(a)}


# -- losses ------------------------------------------------------------------------


def cmd_losses(
    arrays: dict[str, np.ndarray],
    *,
    gp_paired: float = 0.0,
    gp_unpaired: float = 0.0,
    weights: losses.LossWeights = losses.LossWeights(),
    convention: str = "nll",
    multiscale: Iterable[np.ndarray] = (),
) -> dict:
    """Evaluate every loss whose inputs are present in ``arrays``.

    Recognised keys: ``gen``/``real`` (L1), ``d_fake_paired``/``d_fake_unpaired``
    (generator adversarial terms and fake discriminator terms), ``d_real``,
    ``seg_pred``/``seg_gt`` (BCE).
    """
    out: dict = {"convention": convention, "score_eps": losses.SCORE_EPS}
    has = arrays.__contains__
    if has("gen") and has("real"):
        out["l1"] = losses.l1_consistency(arrays["gen"], arrays["real"])
    if has("d_fake_paired"):
        out["adv_paired"] = losses.adv_generator(arrays["d_fake_paired"], convention)
    if has("d_fake_unpaired"):
        out["adv_unpaired"] = losses.adv_generator(arrays["d_fake_unpaired"], convention)
    if {"l1", "adv_paired", "adv_unpaired"} <= out.keys():
        out["generator_total"] = losses.generator_total(out["l1"], out["adv_paired"], out["adv_unpaired"], weights)
    if has("d_real") and has("d_fake_paired") and has("d_fake_unpaired"):
        comps = losses.discriminator_components(
            arrays["d_real"], arrays["d_fake_paired"], arrays["d_fake_unpaired"], convention
        )
        out.update(comps._asdict())
        out["gp_paired"], out["gp_unpaired"] = gp_paired, gp_unpaired
        out["discriminator_total"] = losses.discriminator_total(comps, gp_paired, gp_unpaired, weights)
    multiscale = list(multiscale)
    if multiscale:
        out["multiscale"] = losses.multiscale_aggregate(multiscale)
    if has("seg_pred") and has("seg_gt"):
        out["bce"] = losses.bce_segmentation(arrays["seg_pred"], arrays["seg_gt"])
    if not all(math.isfinite(v) for v in out.values() if isinstance(v, float)):
        raise DataError("non-finite loss value")
    out["weights"] = asdict(weights)
    return out
