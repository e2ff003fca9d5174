import threading
import pytest

from taxoforge.errors import SanitizeEmpty
from taxoforge.layout import category_sets, round_half_up, sanitize, stats, store_image

H = 0x0123456789ABCDEF


def test_store_image_path(tmp_path):
    rec = store_image(tmp_path, "Anseriformes", b"jpeg", H, "http://x/a.jpg")
    assert rec.rel_path == "anseriformes/0123456789abcdef_0.jpg"
    assert (tmp_path / rec.rel_path).read_bytes() == b"jpeg"
    assert rec.url == "http://x/a.jpg" and rec.category == "Anseriformes"


def test_sanitize_rule():
    assert sanitize("Ånséri formes!") == "nsri_formes"
    assert sanitize("Passeri-formes 2") == "passeri-formes_2"
    with pytest.raises(SanitizeEmpty):
        store_image("/tmp", "!!!", b"", H)


def test_store_image_seq_on_repeat(tmp_path):
    a = store_image(tmp_path, "Anseriformes", b"1", H)
    b = store_image(tmp_path, "Anseriformes", b"2", H)
    assert a.rel_path.endswith("_0.jpg") and b.rel_path.endswith("_1.jpg")


def test_store_image_concurrent_same_hash(tmp_path):
    out = []
    threads = [threading.Thread(target=lambda: out.append(store_image(tmp_path, "c", b"x", H))) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(r.rel_path for r in out) == [f"c/{H:016x}_{i}.jpg" for i in range(8)]
    assert not [p for p in (tmp_path / "c").iterdir() if p.suffix != ".jpg"]


def test_stats_counts(tmp_path):
    payloads = [b"a" * 10, b"b" * 20, b"c" * 30]
    for i, p in enumerate(payloads):
        store_image(tmp_path, "Only", p, i)
    (tmp_path / "only" / "notes.txt").write_text("ignored")
    (tmp_path / "state.tflog").write_bytes(b"123")
    (tmp_path / ".tmp").mkdir()
    s = stats(tmp_path)
    assert (s.pictures, s.categories, s.size_bytes) == (3, 1, 60)
    assert s.avg_pictures == 3.0


def test_stats_empty(tmp_path):
    assert stats(tmp_path).to_dict() == {"size_bytes": 0, "pictures": 0, "categories": 0, "avg_pictures": 0.0}


@pytest.mark.parametrize(
    "pictures,categories,expected",
    [(11788, 14, 842.00), (48558, 21, 2312.29), (186213, 40, 4655.32)],
)
def test_paper_table_averages(pictures, categories, expected):
    assert round_half_up(pictures / categories) == expected


def test_round_half_up_boundaries():
    assert round_half_up(1 / 8) == 0.13
    assert round_half_up(3.125) == 3.13
    assert round_half_up(0.004999) == 0.0
    # 4655.325 is not representable; the stored double lies just below it
    assert round_half_up(186213 / 40) == 4655.32


def test_category_sets(tmp_path):
    a, b, empty = tmp_path / "a", tmp_path / "b", tmp_path / "e"
    empty.mkdir()
    for cat in ("Anseriformes", "Galliformes"):
        store_image(a, cat, b"x", 1)
    store_image(b, "Anseriformes", b"x", 1)
    store_image(b, "Strigiformes", b"x", 1)
    sa, sb, se = category_sets([a, b, empty])
    assert sa == {"anseriformes", "galliformes"} and sb == {"anseriformes", "strigiformes"}
    assert se == set()
    assert "anseriformes" in sa & sb


def test_layout_round_trip(tmp_path):
    cats = ["Anseriformes", "Pelecani formes", "Ånséri formes!"]
    for i, c in enumerate(cats):
        store_image(tmp_path, c, b"x", i)
    assert category_sets([tmp_path])[0] == {sanitize(c) for c in cats}
