"""Pluggable image classifier used to keep or drop downloaded images.

A backend is any object with ``score(path) -> iterable of (label, score)``.
``classify`` turns those raw scores into a Classification: unique labels,
sorted by score descending and then by label.
"""

import hashlib
import json
import logging
import os
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Union

from taxoforge.errors import BackendFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Classification:
    scores: tuple  # ((label, score), ...)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.scores]

    def score(self, label: str) -> Optional[float]:
        for lab, s in self.scores:
            if lab == label:
                return s
        return None

    def top(self, k: int) -> list[str]:
        return self.labels[:k]


def make_classification(pairs) -> Classification:
    seen = {}
    for label, score in pairs:
        label = str(label)
        try:
            score = float(score)
        except (TypeError, ValueError):
            raise BackendFailure(f"non-numeric score for {label!r}: {score!r}") from None
        if not 0.0 <= score <= 1.0:
            raise BackendFailure(f"score for {label!r} outside [0, 1]: {score}")
        if label in seen:
            raise BackendFailure(f"duplicate label {label!r}")
        seen[label] = score
    ordered = sorted(seen.items(), key=lambda kv: (-kv[1], kv[0]))
    return Classification(tuple(ordered))


def accept(c: Classification, positive_label: str, threshold: float) -> bool:
    s = c.score(positive_label)
    return s is not None and s >= threshold


class Backend(Protocol):
    def score(self, path: Path): ...


def classify(backend, image: Union[bytes, os.PathLike, str]) -> Classification:
    """Classify a JPEG given as bytes or as a path on disk.

    Any failure inside the backend surfaces as BackendFailure.
    """
    if isinstance(image, (bytes, bytearray)):
        fd, tmp = tempfile.mkstemp(suffix=".jpg")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(image)
            return classify(backend, tmp)
        finally:
            os.unlink(tmp)
    try:
        raw = list(backend.score(Path(image).resolve()))
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(f"{type(backend).__name__}: {exc}") from exc
    return make_classification(raw)


class ConstantBackend:
    """Scores every image ``label=score`` and ``not <label>=1-score``."""

    def __init__(self, label: str = "bird", score: float = 1.0):
        self.label = label
        self.value = score

    def score(self, path):
        return [(self.label, self.value), (f"not {self.label}", round(1.0 - self.value, 12))]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class OracleBackend:
    """Looks the answer up in a manifest of {file name or sha256: label}.

    The matching label scores 1.0, every other known label 0.0.
    """

    def __init__(self, manifest: dict, labels=(), default: Optional[str] = None):
        self.manifest = dict(manifest)
        self.default = default
        known = set(labels) | set(self.manifest.values())
        if default is not None:
            known.add(default)
        self.known = sorted(known)

    @classmethod
    def from_file(cls, path, **kw):
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), **kw)

    def score(self, path):
        path = Path(path)
        label = self.manifest.get(path.name)
        if label is None:
            label = self.manifest.get(file_digest(path), self.default)
        if label is None:
            raise BackendFailure(f"oracle has no label for {path.name}")
        return [(lab, 1.0 if lab == label else 0.0) for lab in self.known]


class FolderBackend:
    """Oracle for evaluation: the label is the image's parent directory."""

    def __init__(self, labels=()):
        self.labels = sorted(set(labels))

    def score(self, path):
        truth = Path(path).parent.name
        labels = set(self.labels) | {truth}
        return [(lab, 1.0 if lab == truth else 0.0) for lab in labels]


class CommandBackend:
    """Talks to a long-lived child process, one per calling thread.

    Protocol: the child is started as ``command + [model]``. For every
    request the parent writes the absolute image path and a newline; the
    child answers with ``label<TAB>score`` lines and then an empty line.
    """

    def __init__(self, command, model: str = ""):
        self.command = list(command)
        self.model = str(model)
        self._local = threading.local()
        self._children = []
        self._lock = threading.Lock()

    def _child(self):
        proc = getattr(self._local, "proc", None)
        if proc is None or proc.poll() is not None:
            argv = self.command + ([self.model] if self.model else [])
            proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1, encoding="utf-8"
            )
            self._local.proc = proc
            with self._lock:
                self._children.append(proc)
        return proc

    def score(self, path):
        proc = self._child()
        try:
            proc.stdin.write(f"{Path(path).resolve()}\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._local.proc = None
            raise BackendFailure(f"classifier process gone: {exc}") from None
        pairs = []
        while True:
            line = proc.stdout.readline()
            if line == "":
                self._local.proc = None
                raise BackendFailure("classifier process closed its output")
            line = line.rstrip("\r\n")
            if not line:
                return pairs
            label, sep, value = line.rpartition("\t")
            if not sep:
                raise BackendFailure(f"bad classifier line: {line!r}")
            pairs.append((label, value))

    def close(self):
        with self._lock:
            children, self._children = self._children, []
        for proc in children:
            try:
                proc.stdin.close()
                proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_backend(spec, labels=()):
    """Build a backend from a config.ClassifierSpec."""
    if spec.kind == "constant":
        return ConstantBackend(spec.label, spec.score)
    if spec.kind == "oracle":
        return OracleBackend.from_file(spec.manifest, labels=labels)
    if spec.kind == "folder":
        return FolderBackend(labels)
    if spec.kind == "command":
        if not spec.command:
            raise BackendFailure("classifier.command is empty")
        return CommandBackend(spec.command, spec.model)
    raise BackendFailure(f"unknown classifier kind {spec.kind!r}")
