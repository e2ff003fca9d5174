import io
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from conftest import gif_bytes, jpeg_bytes, pattern, png_bytes
from taxoforge.errors import DecodeError, Unconvertible
from taxoforge.imaging import (
    ImageFormat,
    PixelBuffer,
    average_hash,
    box_resize,
    decode,
    hamming,
    normalize,
    prepare,
    scaled_size,
    sniff_format,
)


def ahash_oracle(pixels) -> int:
    """Literal loop-by-loop evaluation of the hash recipe on nested lists."""
    h, w = len(pixels), len(pixels[0])
    lum = [[(299 * r + 587 * g + 114 * b + 500) // 1000 for r, g, b in row] for row in pixels]
    if h < 8:
        f = -(-8 // h)
        lum = [row for row in lum for _ in range(f)]
        h *= f
    if w < 8:
        f = -(-8 // w)
        lum = [[v for v in row for _ in range(f)] for row in lum]
        w *= f
    means = []
    for i in range(8):
        for j in range(8):
            rows = range(i * h // 8, (i + 1) * h // 8)
            cols = range(j * w // 8, (j + 1) * w // 8)
            total = sum(lum[y][x] for y in rows for x in cols)
            means.append(total // (len(rows) * len(cols)))
    m = sum(means) // 64
    bits = 0
    for b, v in enumerate(means):
        if v > m:
            bits |= 1 << (63 - b)
    return bits


def buf(arr):
    return PixelBuffer(np.asarray(arr, dtype=np.uint8))


def test_sniff_magic_bytes():
    assert sniff_format(b"\xff\xd8\xff\xe0rest") is ImageFormat.JPEG
    assert sniff_format(png_bytes(np.zeros((2, 2, 3)))) is ImageFormat.PNG
    assert sniff_format(b"BM" + b"\x00" * 40) is ImageFormat.BMP
    assert sniff_format(b"<html>") is ImageFormat.UNSUPPORTED
    assert sniff_format(b"") is ImageFormat.UNSUPPORTED


def test_sniff_gif_frames():
    one, two = gif_bytes(1), gif_bytes(2)
    # crafted fixtures are real GIFs
    assert Image.open(io.BytesIO(one)).n_frames == 1
    assert Image.open(io.BytesIO(two)).n_frames == 2
    assert sniff_format(one) is ImageFormat.GIF_STATIC
    assert sniff_format(two) is ImageFormat.GIF_ANIMATED


def test_sniff_gif_ignores_descriptor_bytes_inside_blocks():
    data = gif_bytes(1, comment=b",,,,,,")
    assert data.count(b"\x2c") > 2
    assert sniff_format(data) is ImageFormat.GIF_STATIC


def test_normalize_downscale_dims():
    out = normalize(png_bytes(np.full((400, 1000, 3), 90)), 500)
    assert Image.open(io.BytesIO(out)).size == (500, 200)


def test_normalize_never_upscales():
    out = normalize(jpeg_bytes(300, 200), 500)
    im = Image.open(io.BytesIO(out))
    assert im.format == "JPEG" and im.size == (300, 200)


def test_normalize_rejects_animated_and_unknown():
    with pytest.raises(Unconvertible):
        normalize(gif_bytes(2))
    with pytest.raises(Unconvertible):
        normalize(b"not an image at all")


def test_normalize_static_gif_and_corrupt_body():
    assert Image.open(io.BytesIO(normalize(gif_bytes(1)))).size == (1, 1)
    with pytest.raises(DecodeError):
        normalize(b"\xff\xd8\xff" + b"\x00" * 50)


@pytest.mark.parametrize(
    "w,h,m,expected",
    [(1000, 400, 500, (500, 200)), (300, 200, 500, (300, 200)), (1001, 3, 500, (500, 1)), (3, 2000, 500, (1, 500)),
     (750, 333, 500, (500, 222))],
)
def test_scaled_size(w, h, m, expected):
    # 750x333: f = 2/3, 333*2/3 = 222 exactly; 1001x3: 3*500/1001 = 1.498 -> 1
    assert scaled_size(w, h, m) == expected


def test_normalize_is_idempotent_on_dims():
    first = normalize(png_bytes(pattern(640, 960, seed=3)), 500)
    second = normalize(first, 500)
    assert Image.open(io.BytesIO(first)).size == Image.open(io.BytesIO(second)).size == (500, 333)


def test_normalize_writes_baseline_jpeg():
    out = normalize(png_bytes(pattern(64, 64)), 500)
    assert b"\xff\xc0" in out and b"\xff\xc2" not in out


def box_oracle(arr, tw, th):
    h, w = len(arr), len(arr[0])
    out = []
    for y in range(th):
        row = []
        for x in range(tw):
            ys = range(y * h // th, (y + 1) * h // th)
            xs = range(x * w // tw, (x + 1) * w // tw)
            area = len(ys) * len(xs)
            px = []
            for c in range(3):
                s = sum(int(arr[yy][xx][c]) for yy in ys for xx in xs)
                px.append((2 * s + area) // (2 * area))
            row.append(px)
        out.append(row)
    return out


def test_box_resize_matches_oracle():
    rng = np.random.default_rng(7)
    arr = rng.integers(0, 256, size=(13, 21, 3), dtype=np.uint8)
    got = box_resize(buf(arr), 8, 5).pixels.tolist()
    assert got == box_oracle(arr.tolist(), 8, 5)


def test_uniform_image_hashes_to_zero():
    for shape in [(8, 8), (17, 31), (3, 5), (100, 100)]:
        arr = np.full(shape + (3,), 128)
        assert average_hash(buf(arr)) == 0


def test_half_black_half_white():
    arr = np.zeros((16, 16, 3))
    arr[:, 8:] = 255
    assert average_hash(buf(arr)) == 0x0F0F0F0F0F0F0F0F
    assert ahash_oracle(arr.astype(int).tolist()) == 0x0F0F0F0F0F0F0F0F


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_hash_matches_oracle(h, w, seed):
    arr = np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    assert average_hash(buf(arr)) == ahash_oracle(arr.tolist())


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.sampled_from([2, 3]), st.integers(0, 2**32 - 1))
def test_hash_invariant_under_replication(hm, wm, k, seed):
    arr = np.random.default_rng(seed).integers(0, 256, size=(8 * hm, 8 * wm, 3), dtype=np.uint8)
    up = np.repeat(np.repeat(arr, k, axis=0), k, axis=1)
    assert average_hash(buf(arr)) == average_hash(buf(up))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-10, 50))
def test_hash_invariant_under_brightness_offset(seed, c):
    arr = np.random.default_rng(seed).integers(10, 201, size=(24, 16, 3))
    assert average_hash(buf(arr)) == average_hash(buf(arr + c))


def test_hamming():
    a = 0x0123456789ABCDEF
    assert hamming(a, a) == 0
    assert hamming(0, 0xFFFFFFFFFFFFFFFF) == 64
    assert hamming(0x0F0F0F0F0F0F0F0F, 0) == 32


def test_hamming_is_a_metric():
    rng = random.Random(11)
    for _ in range(500):
        a, b, c = (rng.getrandbits(64) for _ in range(3))
        assert hamming(a, b) == hamming(b, a)
        assert hamming(a, c) <= hamming(a, b) + hamming(b, c)
        assert (hamming(a, b) == 0) == (a == b)


def test_prepare_hash_survives_upscaled_source():
    small = pattern(200, 200, seed=5)
    big = np.repeat(np.repeat(small, 2, axis=0), 2, axis=1)
    ps, _ = prepare(png_bytes(small))
    pb, _ = prepare(png_bytes(big))
    assert average_hash(ps) == average_hash(pb)


def test_decode_flattens_alpha():
    im = Image.new("RGBA", (4, 4), (0, 0, 0, 0))
    b = io.BytesIO()
    im.save(b, format="PNG")
    assert decode(b.getvalue()).pixels.tolist()[0][0] == [255, 255, 255]
