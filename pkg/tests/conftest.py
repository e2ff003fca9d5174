import base64
import hashlib
import io
import struct
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from taxoforge.mockserver import MockServer


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels.astype(np.uint8), "RGB").save(buf, format="PNG")
    return buf.getvalue()


def jpeg_bytes(width, height, color=(120, 60, 30)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="JPEG")
    return buf.getvalue()


def pattern(height, width, seed=0) -> np.ndarray:
    """Blocky random RGB image whose dims are multiples of 8."""
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    return np.repeat(np.repeat(cells, height // 8, axis=0), width // 8, axis=1)


def gif_frame(comment: bytes = b"") -> bytes:
    gce = b"\x21\xf9\x04\x00\x0a\x00\x00\x00"
    ext = b""
    if comment:
        ext = b"\x21\xfe" + bytes([len(comment)]) + comment + b"\x00"
    descriptor = b"\x2c" + struct.pack("<HHHH", 0, 0, 1, 1) + b"\x00"
    data = b"\x02\x02\x44\x01\x00"
    return ext + gce + descriptor + data


def gif_bytes(frames: int, comment: bytes = b"") -> bytes:
    """Hand-assembled 1x1 GIF89a with ``frames`` image descriptors."""
    header = b"GIF89a" + struct.pack("<HH", 1, 1) + b"\x80\x00\x00"
    gct = b"\x00\x00\x00\xff\xff\xff"
    body = b"".join(gif_frame(comment) for _ in range(frames))
    return header + gct + body + b"\x3b"


@pytest.fixture
def mock_server():
    servers = []

    def factory(fixture=None, **kw):
        srv = MockServer(fixture, **kw).start()
        servers.append(srv)
        return srv

    yield factory
    for srv in servers:
        srv.stop()


def taxon(key, name, rank, parent=None):
    return {"key": key, "scientificName": name, "rank": rank, "parentKey": parent}


def build_world(n_species=10, images_per_species=3, orders=("Anseriformes", "Galliformes"), extinct=(), extra=None):
    """Fixture for a mock server: a class with ``orders`` and species spread
    round-robin over them, one gallery per species with distinct PNG images.

    Returns (fixture, species list of (key, name, order)).
    """
    taxa = [taxon(1, "Aves", "CLASS")]
    for i, order in enumerate(orders):
        taxa.append(taxon(10 + i, order, "ORDER", 1))
    species, galleries, images = [], {}, {}
    for s in range(n_species):
        key = 1000 + s
        order_idx = s % len(orders)
        name = f"Avis species{s:02d}"
        taxa.append(taxon(key, name, "SPECIES", 10 + order_idx))
        species.append((key, name, orders[order_idx]))
        urls = []
        for j in range(images_per_species):
            fname = f"s{s}_{j}.png"
            images[fname] = base64.b64encode(png_bytes(pattern(64, 96, seed=1 + s * 100 + j))).decode()
            urls.append(f"/img/{fname}")
        galleries[name] = urls
    profiles = {str(k): [{"extinct": k in extinct}] for k, _, _ in species}
    fixture = {"taxa": taxa, "profiles": profiles, "galleries": galleries, "images": images}
    if extra:
        extra(fixture)
    return fixture, species


def world_config(srv, root, **overrides):
    raw = {
        "api_base": srv.url("/species/"),
        "root_taxon": 1,
        "dataset_root": str(root),
        "engines": [{"name": "gallery", "url_template": srv.url("/gallery?q={query}&offset={offset}&n=2"),
                     "page_size": 2}],
        "per_species_budget": 10,
        "workers": 1,
        "http": {"retries_5xx": 1, "backoff_base_ms": 0, "timeout_ms": 5000},
        "classifier": {"kind": "constant", "label": "bird", "score": 1.0},
    }
    raw.update(overrides)
    return raw


def tree_checksums(root) -> dict:
    root = Path(root)
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*.jpg")) if p.is_file()
    }


# one PASS/FAIL line per acceptance criterion in the terminal summary

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    key = (number, title)
    failed = call.excinfo is not None and call.excinfo.typename != "Skipped"
    if call.when == "call" or failed:
        _criteria[key] = _criteria.get(key, True) and not failed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), ok in sorted(_criteria.items()):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
