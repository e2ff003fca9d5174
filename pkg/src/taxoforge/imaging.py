"""Image sniffing, normalization and 64-bit average hashing.

Pillow is used for decoding and JPEG encoding only. Resizing and hashing
are integer arithmetic on numpy arrays so results do not depend on the
Pillow version.
"""

import enum
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from taxoforge.errors import DecodeError, Unconvertible

JPEG_QUALITY = 90


class ImageFormat(enum.Enum):
    JPEG = "JPEG"
    PNG = "PNG"
    GIF_STATIC = "GIF_STATIC"
    GIF_ANIMATED = "GIF_ANIMATED"
    BMP = "BMP"
    UNSUPPORTED = "UNSUPPORTED"


CONVERTIBLE = {ImageFormat.JPEG, ImageFormat.PNG, ImageFormat.GIF_STATIC, ImageFormat.BMP}


@dataclass(frozen=True)
class PixelBuffer:
    """Row-major RGB8 image held as a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected (h, w, 3) pixels, got shape {p.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "PixelBuffer":
        arr = np.frombuffer(data, dtype=np.uint8)
        if arr.size != width * height * 3:
            raise ValueError("pixel data length must equal width*height*3")
        return cls(arr.reshape(height, width, 3).copy())


def _gif_descriptor_count(data: bytes, stop_at: int = 2) -> int:
    """Walk the GIF block structure and count image descriptors.

    Truncated files count whatever was seen before the data ran out.
    """
    n = len(data)
    if n < 13:
        return 0
    flags = data[10]
    pos = 13
    if flags & 0x80:
        pos += 3 * (2 << (flags & 0x07))
    count = 0

    def skip_sub_blocks(p):
        while p < n:
            size = data[p]
            p += 1
            if size == 0:
                return p
            p += size
        return n

    while pos < n and count < stop_at:
        block = data[pos]
        if block == 0x2C:
            count += 1
            if pos + 10 > n:
                break
            local = data[pos + 9]
            pos += 10
            if local & 0x80:
                pos += 3 * (2 << (local & 0x07))
            pos += 1  # LZW minimum code size
            pos = skip_sub_blocks(pos)
        elif block == 0x21:
            pos = skip_sub_blocks(pos + 2)
        elif block == 0x3B:
            break
        else:
            break
    return count


def sniff_format(data: bytes) -> ImageFormat:
    if data[:3] == b"\xff\xd8\xff":
        return ImageFormat.JPEG
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return ImageFormat.PNG
    if data[:6] in (b"GIF87a", b"GIF89a"):
        if _gif_descriptor_count(data) >= 2:
            return ImageFormat.GIF_ANIMATED
        return ImageFormat.GIF_STATIC
    if data[:2] == b"BM":
        return ImageFormat.BMP
    return ImageFormat.UNSUPPORTED


def decode(data: bytes) -> PixelBuffer:
    fmt = sniff_format(data)
    if fmt not in CONVERTIBLE:
        raise Unconvertible(f"cannot convert {fmt.value} image")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info):
                # flatten transparency onto white
                rgba = im.convert("RGBA")
                bg = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
                rgb = Image.alpha_composite(bg, rgba).convert("RGB")
            else:
                rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError, Image.DecompressionBombError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from None
    return PixelBuffer(arr.copy())


def _edges(size: int, parts: int) -> np.ndarray:
    """Start offsets floor(i*size/parts) for i in 0..parts-1."""
    return (np.arange(parts, dtype=np.int64) * size) // parts


def _block_sums(a: np.ndarray, rows: int, cols: int):
    """Sum ``a`` (h, w, ...) over a rows x cols grid partitioned with
    floor(i*h/rows); returns sums and per-block areas. Needs h >= rows and
    w >= cols so no block is empty."""
    h, w = a.shape[:2]
    r0, c0 = _edges(h, rows), _edges(w, cols)
    sums = np.add.reduceat(np.add.reduceat(a.astype(np.int64), r0, axis=0), c0, axis=1)
    heights = np.diff(np.append(r0, h))
    widths = np.diff(np.append(c0, w))
    area = np.outer(heights, widths)
    return sums, area


def scaled_size(width: int, height: int, max_dim: int) -> tuple[int, int]:
    """Target size after bounding the longer side by max_dim. Never upscales.

    Uses exact rational arithmetic: round_half_up(w * max_dim / longest).
    """
    longest = max(width, height)
    if longest <= max_dim:
        return width, height

    def scale(v):
        return max(1, (2 * v * max_dim + longest) // (2 * longest))

    return scale(width), scale(height)


def box_resize(img: PixelBuffer, width: int, height: int) -> PixelBuffer:
    """Downscale by averaging each source region (rounded half up)."""
    if (width, height) == (img.width, img.height):
        return img
    if width > img.width or height > img.height:
        raise ValueError("box_resize only shrinks")
    sums, area = _block_sums(img.pixels, height, width)
    area = area[:, :, None]
    out = (2 * sums + area) // (2 * area)
    return PixelBuffer(out.astype(np.uint8))


def encode_jpeg(img: PixelBuffer, quality: int = JPEG_QUALITY) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, "RGB").save(buf, format="JPEG", quality=quality, progressive=False, optimize=False)
    return buf.getvalue()


def prepare(data: bytes, max_dim: int = 500) -> tuple[PixelBuffer, bytes]:
    """Decode and bound an image; returns the resized pixels (what gets
    hashed) and their baseline-JPEG encoding."""
    img = decode(data)
    w, h = scaled_size(img.width, img.height, max_dim)
    img = box_resize(img, w, h)
    return img, encode_jpeg(img)


def normalize(data: bytes, max_dim: int = 500) -> bytes:
    return prepare(data, max_dim)[1]


def luma(img: PixelBuffer) -> np.ndarray:
    p = img.pixels.astype(np.int64)
    return (299 * p[:, :, 0] + 587 * p[:, :, 1] + 114 * p[:, :, 2] + 500) // 1000


def average_hash(img: PixelBuffer) -> int:
    """64-bit average hash; bit 63 is block (0, 0), bit 0 is block (7, 7).

    Images narrower or shorter than 8 px are first pixel-replicated by
    ceil(8 / side) along that axis.
    """
    lum = luma(img)
    h, w = lum.shape
    if h < 8:
        lum = np.repeat(lum, -(-8 // h), axis=0)
    if w < 8:
        lum = np.repeat(lum, -(-8 // w), axis=1)
    sums, area = _block_sums(lum, 8, 8)
    means = sums // area
    m = int(means.sum()) // 64
    bits = 0
    for v in (means > m).ravel():
        bits = (bits << 1) | int(v)
    return bits


def hash_hex(h: int) -> str:
    return f"{h:016x}"


def hamming(a: int, b: int) -> int:
    return bin((a ^ b) & 0xFFFFFFFFFFFFFFFF).count("1")
