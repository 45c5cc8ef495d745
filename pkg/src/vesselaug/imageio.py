"""PNG codecs and the flat binary array format.

Binary arrays: ``b"DGSA"``, little-endian u32 rank, one u32 per dimension,
zero padding up to the next multiple of 16 bytes, then little-endian float32
values in C order.  Rank 1 and 2 headers are exactly 16 bytes.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

MAGIC = b"DGSA"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".gif", ".ppm")


def _open(path) -> Image.Image:
    img = Image.open(path)
    img.load()
    return img


def image_size(path) -> tuple[int, int]:
    """(width, height) without decoding pixel data."""
    with Image.open(path) as img:
        return img.size


def read_gray(path) -> np.ndarray:
    """8-bit grayscale as float64 in [0, 1] (v / 255)."""
    return np.asarray(_open(path).convert("L"), dtype=np.float64) / 255.0


def read_mask(path) -> np.ndarray:
    """Foreground is any 8-bit value above 127."""
    return np.asarray(_open(path).convert("L")) > 127


def read_rgb(path) -> np.ndarray:
    return np.asarray(_open(path).convert("RGB"), dtype=np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255 rounding half up."""
    return np.floor(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def mask_png(m: np.ndarray) -> bytes:
    return png_bytes(np.where(np.asarray(m, dtype=bool), 255, 0).astype(np.uint8))


def rgb_png(img: np.ndarray) -> bytes:
    return png_bytes(to_uint8(img))


def write_mask(path, m: np.ndarray) -> None:
    Path(path).write_bytes(mask_png(m))


def write_rgb(path, img: np.ndarray) -> None:
    Path(path).write_bytes(rgb_png(img))


def resize_rgb(img: np.ndarray, width: int, height: int) -> np.ndarray:
    if img.shape[1] == width and img.shape[0] == height:
        return img
    pil = Image.fromarray(to_uint8(img)).resize((width, height), Image.BILINEAR)
    return np.asarray(pil, dtype=np.float64) / 255.0


def resize_mask(m: np.ndarray, width: int, height: int) -> np.ndarray:
    if m.shape[1] == width and m.shape[0] == height:
        return m
    pil = Image.fromarray(np.where(m, 255, 0).astype(np.uint8)).resize((width, height), Image.NEAREST)
    return np.asarray(pil) > 127


def encode_array(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f4")
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    header += b"\0" * (-len(header) % 16)
    return header + np.ascontiguousarray(arr).tobytes()


def decode_array(data: bytes) -> np.ndarray:
    if data[:4] != MAGIC:
        raise DataError("not a DGSA array (bad magic)")
    try:
        (rank,) = struct.unpack_from("<I", data, 4)
        dims = struct.unpack_from(f"<{rank}I", data, 8)
        start = 8 + 4 * rank
        start += -start % 16
        count = int(np.prod(dims)) if rank else 1
        body = np.frombuffer(data, dtype="<f4", count=count, offset=start)
    except (struct.error, ValueError) as exc:
        raise DataError(f"truncated DGSA array: {exc}") from None
    return body.reshape(dims).astype(np.float64)


def write_array(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_array(arr))


def read_array(path) -> np.ndarray:
    """Load a DGSA binary array, or a PNG as intensities in [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == MAGIC:
        return decode_array(data)
    img = Image.open(io.BytesIO(data))
    img.load()
    if img.mode in ("RGB", "RGBA", "P"):
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return np.asarray(img.convert("L"), dtype=np.float64) / 255.0


def list_images(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
