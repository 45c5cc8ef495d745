"""Pipeline configuration, dataset manifests and per-item seeds.

Precedence, lowest to highest: built-in defaults, the config file (JSON or
TOML), ``--set key=value`` overrides, then dedicated command-line flags.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .colonize import GrowthParams
from .errors import DataError, DimensionMismatch
from .imageio import image_size
from .styleaug import StyleConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

THREADS_ENV = "DGSSA_THREADS"


@dataclass(frozen=True)
class PipelineConfig:
    growth: GrowthParams = field(default_factory=GrowthParams)
    style: StyleConfig = field(default_factory=StyleConfig)
    masks_per_dataset: int = 100
    attractor_count: int = 3000
    erosion_iterations: int = 1
    structuring_element: str = "cross"
    connectivity: int = 8
    min_branch_length: float = 0.0
    thin_threshold_tau: float = 1.2
    binarize_threshold: float = 0.5
    master_seed: int = 0
    # (width, height) for generated masks; None keeps the ROI resolution
    resize: tuple[int, int] | None = None

    def __post_init__(self):
        if self.masks_per_dataset < 0:
            raise ValueError("masks_per_dataset must be >= 0")
        if self.attractor_count < 1:
            raise ValueError("attractor_count must be >= 1")
        if self.erosion_iterations < 0:
            raise ValueError("erosion_iterations must be >= 0")
        if self.structuring_element not in ("cross", "square"):
            raise ValueError("structuring_element must be 'cross' or 'square'")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.thin_threshold_tau < 0:
            raise ValueError("thin_threshold_tau must be >= 0")
        if not 0 <= self.binarize_threshold <= 1:
            raise ValueError("binarize_threshold must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    data = dict(data)
    if cls is GrowthParams and data.get("root") is not None:
        data["root"] = tuple(data["root"])
    if cls is StyleConfig and "photoaug_ops" in data:
        data["photoaug_ops"] = {k: tuple(v) for k, v in data["photoaug_ops"].items()}
    if cls is PipelineConfig:
        if "growth" in data:
            data["growth"] = _build(GrowthParams, data["growth"])
        if "style" in data:
            data["style"] = _build(StyleConfig, data["style"])
        if data.get("resize") is not None:
            data["resize"] = tuple(data["resize"])
    return cls(**data)


def config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data)


# dict-valued settings that a file or override replaces wholesale
_REPLACED = {"photoaug_ops"}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in _REPLACED:
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    return json.loads(path.read_text())


def parse_override(item: str) -> dict:
    """``"growth.segment_length=4"`` -> ``{"growth": {"segment_length": 4}}``."""
    if "=" not in item:
        raise ValueError(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def load_config(path=None, overrides: dict | None = None, sets: list[str] = ()) -> PipelineConfig:
    data = PipelineConfig().to_dict()
    if path is not None:
        data = _merge(data, read_config_file(path))
    for item in sets:
        data = _merge(data, parse_override(item))
    if overrides:
        data = _merge(data, overrides)
    return config_from_dict(data)


def item_seed(master_seed: int, dataset: str, index: int) -> int:
    """Stable 64-bit seed for one batch item."""
    key = f"{master_seed}\x1f{dataset}\x1f{index}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        return max(n, 1)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ManifestEntry:
    image: Path | None
    mask: Path | None = None
    roi: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[ManifestEntry, ...]
    roi: Path | None = None  # dataset-wide ROI

    def rois(self) -> list[Path]:
        found = [e.roi for e in self.entries if e.roi is not None]
        if not found and self.roi is not None:
            found = [self.roi]
        return found


def load_manifest(path) -> DatasetManifest:
    """Read a JSON manifest; relative paths resolve against the manifest's folder.

    ``{"name": "...", "roi": optional, "entries": [{"image", "mask", "roi"}, ...]}``
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent

    def resolve(p):
        if p is None:
            return None
        q = Path(p)
        q = q if q.is_absolute() else base / q
        if not q.exists():
            raise DataError(f"{path}: missing file {q}")
        return q

    entries = []
    for raw in doc.get("entries", []):
        entry = ManifestEntry(resolve(raw.get("image")), resolve(raw.get("mask")), resolve(raw.get("roi")))
        sizes = {image_size(p) for p in (entry.image, entry.mask, entry.roi) if p is not None}
        if len(sizes) > 1:
            raise DimensionMismatch(f"{path}: entry {raw} has mismatched sizes {sorted(sizes)}")
        entries.append(entry)
    name = doc.get("name") or path.stem
    return DatasetManifest(name, tuple(entries), resolve(doc.get("roi")))

