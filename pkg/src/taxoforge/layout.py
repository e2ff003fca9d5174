"""On-disk dataset layout: one directory per category, one JPEG per image.

Hidden entries (names starting with ".") are ignored everywhere.
"""

import os
import re
import tempfile
import threading
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from taxoforge.errors import SanitizeEmpty

_seq_lock = threading.Lock()
_DISALLOWED = re.compile(r"[^a-z0-9_-]")


def round_half_up(x: float, places: int = 2) -> float:
    """Round half up to ``places`` decimals.

    The rounding applies to the exact value of the double ``x``, so a
    quotient such as 186213 / 40 (stored just below 4655.325) gives 4655.32.
    """
    q = Decimal(float(x)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    return float(q)


def sanitize(category: str) -> str:
    s = category.lower().replace(" ", "_")
    return _DISALLOWED.sub("", s)


@dataclass(frozen=True)
class ImageRecord:
    url: str
    hash: int
    category: str
    rel_path: str


@dataclass(frozen=True)
class DatasetStats:
    size_bytes: int
    pictures: int
    categories: int
    avg_pictures: float

    def to_dict(self):
        return asdict(self)


def store_image(root, category: str, jpeg: bytes, hash_: int, url: str = "") -> ImageRecord:
    name = sanitize(category)
    if not name:
        raise SanitizeEmpty(f"category {category!r} sanitizes to an empty name")
    cat_dir = Path(root) / name
    cat_dir.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=cat_dir, prefix=".", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(jpeg)
        with _seq_lock:
            seq = 0
            while (cat_dir / f"{hash_:016x}_{seq}.jpg").exists():
                seq += 1
            fname = f"{hash_:016x}_{seq}.jpg"
            os.replace(tmp, cat_dir / fname)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return ImageRecord(url=url, hash=hash_, category=category, rel_path=f"{name}/{fname}")


def _category_dirs(root):
    with os.scandir(root) as it:
        return sorted(
            (e for e in it if e.is_dir(follow_symlinks=True) and not e.name.startswith(".")),
            key=lambda e: e.name,
        )


def category_images(root, category: str) -> list[str]:
    """Sorted .jpg file names in one category directory."""
    d = Path(root) / category
    if not d.is_dir():
        return []
    with os.scandir(d) as it:
        return sorted(
            e.name for e in it if e.is_file() and e.name.endswith(".jpg") and not e.name.startswith(".")
        )


def stats(root) -> DatasetStats:
    size = pictures = 0
    dirs = _category_dirs(root)
    for d in dirs:
        with os.scandir(d.path) as it:
            for e in it:
                if e.name.endswith(".jpg") and not e.name.startswith(".") and e.is_file():
                    pictures += 1
                    size += e.stat().st_size
    avg = round_half_up(pictures / len(dirs)) if dirs else 0.0
    return DatasetStats(size_bytes=size, pictures=pictures, categories=len(dirs), avg_pictures=avg)


def category_sets(roots) -> list[set]:
    out = []
    for root in roots:
        root = Path(root)
        out.append({sanitize(d.name) for d in _category_dirs(root)} if root.is_dir() else set())
    return out
