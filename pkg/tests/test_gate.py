import sys
import threading

import pytest
from hypothesis import given, strategies as st

from conftest import jpeg_bytes
from taxoforge.config import ClassifierSpec
from taxoforge.errors import BackendFailure
from taxoforge.gate import (
    Classification,
    CommandBackend,
    ConstantBackend,
    FolderBackend,
    OracleBackend,
    accept,
    classify,
    file_digest,
    make_backend,
    make_classification,
)

IMG = jpeg_bytes(8, 8)


def test_constant_backend():
    c = classify(ConstantBackend("bird", 0.9), IMG)
    assert c.scores == (("bird", 0.9), ("not bird", 0.1))


def test_oracle_backend_by_name(tmp_path):
    f = tmp_path / "x.jpg"
    f.write_bytes(IMG)
    c = classify(OracleBackend({"x.jpg": "not bird"}, labels=["bird"]), f)
    assert c.scores == (("not bird", 1.0), ("bird", 0.0))


def test_oracle_backend_by_digest(tmp_path):
    f = tmp_path / "x.jpg"
    f.write_bytes(IMG)
    c = classify(OracleBackend({file_digest(f): "bird"}, labels=["not bird"]), IMG)
    assert c.scores == (("bird", 1.0), ("not bird", 0.0))


def test_oracle_without_answer_fails():
    with pytest.raises(BackendFailure):
        classify(OracleBackend({}), IMG)


def test_folder_backend(tmp_path):
    d = tmp_path / "anseriformes"
    d.mkdir()
    (d / "a.jpg").write_bytes(IMG)
    c = classify(FolderBackend(["galliformes", "passeriformes"]), d / "a.jpg")
    assert c.top(1) == ["anseriformes"]
    assert c.labels == ["anseriformes", "galliformes", "passeriformes"]


def echo_backend(tmp_path, reply: str):
    model = tmp_path / "answers.tsv"
    model.write_text(reply, encoding="utf-8")
    return CommandBackend([sys.executable, "-m", "taxoforge.tools.echo_classifier"], str(model))


def test_command_backend_echo(tmp_path):
    with echo_backend(tmp_path, "bird\t0.73\nnot bird\t0.27\n") as b:
        for _ in range(3):
            assert classify(b, IMG).scores == (("bird", 0.73), ("not bird", 0.27))
        assert len(b._children) == 1  # one long-lived child, not one per image


def test_command_backend_one_child_per_thread(tmp_path):
    with echo_backend(tmp_path, "not bird\t0.6\nbird\t0.4\n") as b:
        results = []

        def work():
            for _ in range(3):
                results.append(classify(b, IMG).top(1))

        threads = [threading.Thread(target=work) for _ in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [["not bird"]] * 9
        assert len(b._children) == 3


def test_command_backend_failures(tmp_path):
    with echo_backend(tmp_path, "bird 0.5\n") as b:
        with pytest.raises(BackendFailure):
            classify(b, IMG)
    with echo_backend(tmp_path, "bird\t1.5\n") as b:
        with pytest.raises(BackendFailure):
            classify(b, IMG)
    dead = CommandBackend([sys.executable, "-c", "pass"])
    with pytest.raises(BackendFailure):
        classify(dead, IMG)
    dead.close()


def test_classification_normalized_order():
    c = make_classification([("b", 0.2), ("a", 0.2), ("z", 0.9), ("c", 0.0)])
    assert c.labels == ["z", "a", "b", "c"]
    with pytest.raises(BackendFailure):
        make_classification([("a", 0.1), ("a", 0.2)])


@given(st.dictionaries(st.text(max_size=5), st.floats(0, 1), max_size=8), st.randoms())
def test_classification_invariant_under_backend_order(scores, rnd):
    pairs = list(scores.items())
    rnd.shuffle(pairs)
    c = make_classification(pairs)
    assert c == make_classification(sorted(scores.items()))
    keys = [(-s, lab) for lab, s in c.scores]
    assert keys == sorted(keys)
    assert len(set(c.labels)) == len(c.labels)


def test_accept_rules():
    assert accept(make_classification([("bird", 0.9), ("not bird", 0.1)]), "bird", 0.5)
    assert accept(Classification((("bird", 0.5),)), "bird", 0.5)
    assert not accept(Classification((("not bird", 1.0),)), "bird", 0.5)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_accept_monotone(score, t1, t2):
    c = Classification((("bird", score),))
    lo, hi = sorted((t1, t2))
    if accept(c, "bird", hi):
        assert accept(c, "bird", lo)


def test_make_backend(tmp_path):
    assert isinstance(make_backend(ClassifierSpec("constant", "bird", 0.7)), ConstantBackend)
    assert isinstance(make_backend(ClassifierSpec("folder")), FolderBackend)
    m = tmp_path / "m.json"
    m.write_text('{"a.jpg": "bird"}')
    assert isinstance(make_backend(ClassifierSpec("oracle", manifest=str(m))), OracleBackend)
    with pytest.raises(BackendFailure):
        make_backend(ClassifierSpec("command"))
