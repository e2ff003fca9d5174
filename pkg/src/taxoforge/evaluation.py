"""Evaluation protocol: holdout isolation and restore, category-intersection
run planning, top-k accuracy and repeated runs."""

import json
import logging
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from taxoforge.errors import EmptyInput, MissingHoldout, TaxoforgeError, TrainerFailed
from taxoforge.gate import classify
from taxoforge.layout import category_images, category_sets, round_half_up
from taxoforge.prng import MASK64, fnv1a64, shuffle

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def default_holdout(root) -> Path:
    root = Path(root).resolve()
    return root.parent / f"{root.name}.holdout"


@dataclass
class SplitManifest:
    root: str
    holdout: str
    seed: int
    per_cat: int
    entries: list  # [(rel_path, holdout_path)], both relative
    shortfall: dict = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return Path(self.holdout) / MANIFEST_NAME

    def to_json(self) -> str:
        return json.dumps(
            {
                "root": self.root,
                "holdout": self.holdout,
                "seed": self.seed,
                "per_cat": self.per_cat,
                "entries": [list(e) for e in self.entries],
                "shortfall": self.shortfall,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    @classmethod
    def load(cls, path) -> "SplitManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(d["root"], d["holdout"], d["seed"], d["per_cat"],
                   [tuple(e) for e in d["entries"]], d.get("shortfall", {}))


def isolate_subset(root, per_cat: int = 5, seed: int = 0, holdout=None, categories=None) -> SplitManifest:
    """Move ``per_cat`` seeded-random images per category out of ``root``.

    Each category's sorted file list is shuffled with seed
    ``seed ^ fnv1a64(category)``; the first ``per_cat`` are moved to
    ``holdout/<category>/<name>``. The manifest is written before the
    first move so an interrupted split can still be restored.
    """
    root = Path(root).resolve()
    holdout = Path(holdout).resolve() if holdout else default_holdout(root)
    if (holdout / MANIFEST_NAME).exists():
        raise TaxoforgeError(f"{holdout} holds an unrestored split; run restore first")
    cats = sorted(categories) if categories is not None else sorted(category_sets([root])[0])

    entries, shortfall = [], {}
    for cat in cats:
        names = category_images(root, cat)
        picked = shuffle(names, (seed ^ fnv1a64(cat)) & MASK64)[:per_cat]
        if len(picked) < per_cat:
            shortfall[cat] = per_cat - len(picked)
        entries.extend((f"{cat}/{n}", f"{cat}/{n}") for n in sorted(picked))

    manifest = SplitManifest(str(root), str(holdout), seed & MASK64, per_cat, entries, shortfall)
    holdout.mkdir(parents=True, exist_ok=True)
    tmp = holdout / (MANIFEST_NAME + ".part")
    tmp.write_text(manifest.to_json(), encoding="utf-8")
    os.replace(tmp, manifest.path)
    for rel, hold in entries:
        dst = holdout / hold
        dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(root / rel), str(dst))
    if shortfall:
        log.info("categories short of %d images: %s", per_cat, shortfall)
    return manifest


def restore_subset(manifest) -> None:
    """Move every holdout file back. All files are checked before any move."""
    if not isinstance(manifest, SplitManifest):
        manifest = SplitManifest.load(manifest)
    root, holdout = Path(manifest.root), Path(manifest.holdout)
    for _, hold in manifest.entries:
        if not (holdout / hold).is_file():
            raise MissingHoldout(str(holdout / hold))
    for rel, hold in manifest.entries:
        dst = root / rel
        dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(holdout / hold), str(dst))
    if manifest.path.exists():
        manifest.path.unlink()
    if holdout.is_dir():
        for d in sorted(holdout.iterdir(), reverse=True):
            if d.is_dir() and not any(d.iterdir()):
                d.rmdir()
        if not any(holdout.iterdir()):
            holdout.rmdir()


@dataclass(frozen=True)
class Participant:
    name: str
    missing: frozenset

    @property
    def asterisk(self) -> bool:
        return bool(self.missing)


@dataclass(frozen=True)
class RunPlan:
    name: str
    reference_categories: frozenset
    participants: tuple

    def participant(self, name) -> Participant:
        return next(p for p in self.participants if p.name == name)

    def to_dict(self):
        return {
            "name": self.name,
            "reference_categories": sorted(self.reference_categories),
            "participants": [
                {"name": p.name, "missing": sorted(p.missing), "asterisk": p.asterisk} for p in self.participants
            ],
        }


def plan_runs(datasets) -> list[RunPlan]:
    """One run per dataset using its own categories as reference, largest
    first, then a final run "all" over the common categories."""
    datasets = sorted(((name, frozenset(cats)) for name, cats in datasets), key=lambda d: d[0])
    if not datasets:
        return []

    def make(name, reference):
        return RunPlan(name, reference, tuple(Participant(n, reference - cats) for n, cats in datasets))

    runs = [make(name, cats) for name, cats in sorted(datasets, key=lambda d: (-len(d[1]), d[0]))]
    common = frozenset.intersection(*(cats for _, cats in datasets))
    if not common:
        log.warning("datasets share no categories; run 'all' is empty")
    runs.append(make("all", common))
    return runs


def topk_accuracy(predictions, truths, k: int) -> float:
    """Percentage of samples whose truth is among the first k labels,
    rounded half up to 2 decimals."""
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths differ in length")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truths:
        raise EmptyInput("no samples to score")
    correct = sum(1 for c, t in zip(predictions, truths) if t in c.top(k))
    return round_half_up(100 * correct / len(truths))


def _mean(values) -> float:
    return round_half_up(sum(values) / len(values))


@dataclass
class ParticipantResult:
    name: str
    asterisk: bool
    missing: list
    samples: int = 0
    top1: list = field(default_factory=list)
    topk: list = field(default_factory=list)

    @property
    def top1_mean(self) -> Optional[float]:
        return _mean(self.top1) if self.top1 else None

    @property
    def topk_mean(self) -> Optional[float]:
        return _mean(self.topk) if self.topk else None


@dataclass
class EvalResult:
    run: str
    repeats: int
    top1_mean: Optional[float]
    top5_mean: Optional[float]
    k: int = 5
    participants: list = field(default_factory=list)

    def to_dict(self):
        return {
            "run": self.run,
            "repeats": self.repeats,
            "k": self.k,
            "top1_mean": self.top1_mean,
            "top5_mean": self.top5_mean,
            "participants": [
                {
                    "name": p.name,
                    "asterisk": p.asterisk,
                    "missing": p.missing,
                    "samples": p.samples,
                    "top1_mean": p.top1_mean,
                    "top5_mean": p.topk_mean,
                    "top1": p.top1,
                    "top5": p.topk,
                }
                for p in self.participants
            ],
        }

    def table(self) -> str:
        def fmt(v):
            return "-" if v is None else f"{v:.2f}"

        rows = [("dataset", "top-1", f"top-{self.k}")]
        rows += [(p.name + ("*" if p.asterisk else ""), fmt(p.top1_mean), fmt(p.topk_mean)) for p in self.participants]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [f"run {self.run} ({self.repeats} repeats)"]
        for r in rows:
            lines.append(f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}")
        return "\n".join(lines)


def run_trainer(command, image_dir, workdir) -> tuple[Path, Path]:
    graph = Path(workdir) / "output_graph.pb"
    labels = Path(workdir) / "output_labels.txt"
    argv = list(command) + ["--image_dir", str(image_dir), "--output_graph", str(graph), "--output_labels", str(labels)]
    proc = subprocess.run(argv)
    if proc.returncode != 0:
        raise TrainerFailed(f"training command exited with status {proc.returncode}")
    return graph, labels


def _reduced_view(root: Path, cats, into: Path) -> Path:
    view = into / "images"
    view.mkdir()
    for cat in sorted(cats):
        os.symlink(root / cat, view / cat, target_is_directory=True)
    return view


def run_eval(plan: RunPlan, roots: Mapping[str, os.PathLike], backend, per_cat: int = 5, repeats: int = 5,
             seed: int = 0, trainer=None, k: int = 5) -> EvalResult:
    """Score each participant of ``plan`` over ``repeats`` seeded splits.

    Only the plan's reference categories take part. With a ``trainer``
    command, every repeat trains on the reduced dataset first and
    ``backend`` must be a factory ``(graph_path, labels_path) -> backend``;
    otherwise ``backend`` is used as-is.
    """
    results = []
    for part in plan.participants:
        if part.name not in roots:
            continue
        root = Path(roots[part.name]).resolve()
        cats = sorted(plan.reference_categories & category_sets([root])[0])
        res = ParticipantResult(part.name, part.asterisk, sorted(part.missing))
        results.append(res)
        if not cats:
            log.warning("%s has none of the categories of run %s", part.name, plan.name)
            continue
        for r in range(repeats):
            manifest = isolate_subset(root, per_cat, (seed + r) & MASK64, categories=cats)
            try:
                with tempfile.TemporaryDirectory(prefix="taxoforge-eval-") as work:
                    scorer = backend
                    if trainer:
                        view = _reduced_view(root, cats, Path(work))
                        scorer = backend(*run_trainer(trainer, view, work))
                    holdout = Path(manifest.holdout)
                    preds, truths = [], []
                    for _, hold in manifest.entries:
                        preds.append(classify(scorer, holdout / hold))
                        truths.append(hold.split("/", 1)[0])
                    if hasattr(scorer, "close") and scorer is not backend:
                        scorer.close()
            finally:
                restore_subset(manifest)
            res.samples = len(truths)
            if truths:
                res.top1.append(topk_accuracy(preds, truths, 1))
                res.topk.append(topk_accuracy(preds, truths, k))

    scored = [p for p in results if p.top1]
    top1 = _mean([p.top1_mean for p in scored]) if scored else None
    topk = _mean([p.topk_mean for p in scored]) if scored else None
    return EvalResult(plan.name, repeats, top1, topk, k, results)
