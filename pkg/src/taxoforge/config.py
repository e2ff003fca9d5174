"""JSON configuration loading.

Keys are lower_snake_case; ``apiBase`` is accepted as an alias of
``api_base``. A loaded Config is frozen and meant to be shared read-only.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional
from urllib.parse import urlparse

from taxoforge.errors import InvalidValue, MissingKey, ParseError
from taxoforge.model import EngineSpec, Rank

DEFAULT_CONFIG_PATH = "taxoforge.json"
CONFIG_ENV = "TAXOFORGE_CONFIG"

REQUIRED = ("api_base", "root_taxon", "dataset_root")
ALIASES = {"apiBase": "api_base"}


@dataclass(frozen=True)
class HttpPolicy:
    max_redirects: int = 5
    retries_5xx: int = 3
    backoff_base_ms: int = 250
    timeout_ms: int = 30000


@dataclass(frozen=True)
class ClassifierSpec:
    """Which filter backend to build; see taxoforge.gate.make_backend."""

    kind: str = "constant"
    label: str = "bird"
    score: float = 1.0
    command: tuple = ()
    model: str = ""
    manifest: str = ""


@dataclass(frozen=True)
class Config:
    api_base: str
    root_taxon: int
    dataset_root: Path
    group_rank: Rank = Rank.ORDER
    leaf_rank: Rank = Rank.SPECIES
    engines: tuple = ()
    max_dim: int = 500
    per_species_budget: int = 20
    positive_label: str = "bird"
    accept_threshold: float = 0.5
    workers: int = 4
    seed: int = 0
    http: HttpPolicy = field(default_factory=HttpPolicy)
    classifier: ClassifierSpec = field(default_factory=ClassifierSpec)
    trainer: tuple = ()

    @property
    def state_path(self) -> Path:
        return Path(self.dataset_root) / "state.tflog"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset_root"] = str(self.dataset_root)
        d["group_rank"] = self.group_rank.name
        d["leaf_rank"] = self.leaf_rank.name
        d["engines"] = [asdict(e) for e in self.engines]
        d["classifier"]["command"] = list(self.classifier.command)
        d["trainer"] = list(self.trainer)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _int(d, key, default, lo=0):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise InvalidValue(f"{key} must be an integer, got {v!r}")
    if v < lo:
        raise InvalidValue(f"{key} must be >= {lo}, got {v}")
    return v


def _rank(d, key, default):
    v = d.get(key, default)
    r = Rank.parse(v)
    if r is None:
        raise InvalidValue(f"{key}: unknown rank {v!r}")
    return r


def _engine(e) -> EngineSpec:
    if not isinstance(e, dict):
        raise InvalidValue(f"engine entry must be an object, got {e!r}")
    try:
        spec = EngineSpec(
            name=str(e["name"]),
            url_template=str(e["url_template"]),
            page_size=_int(e, "page_size", 20, lo=1),
        )
    except KeyError as exc:
        raise MissingKey(f"engines[].{exc.args[0]}") from None
    for placeholder in ("{query}", "{offset}"):
        if placeholder not in spec.url_template:
            raise InvalidValue(f"engine {spec.name}: url_template lacks {placeholder}")
    return spec


def config_from_dict(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise InvalidValue("config root must be a JSON object")
    d = dict(raw)
    for alias, key in ALIASES.items():
        if alias in d:
            d.setdefault(key, d.pop(alias))
    for key in REQUIRED:
        if key not in d:
            raise MissingKey(key)

    api_base = d["api_base"]
    parsed = urlparse(str(api_base))
    if not (parsed.scheme in ("http", "https") and parsed.netloc):
        raise InvalidValue(f"api_base is not an absolute URL: {api_base!r}")

    group_rank = _rank(d, "group_rank", "ORDER")
    leaf_rank = _rank(d, "leaf_rank", "SPECIES")
    if not group_rank.coarser_than(leaf_rank):
        raise InvalidValue("group_rank must be coarser than leaf_rank")

    threshold = d.get("accept_threshold", 0.5)
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not 0 <= threshold <= 1:
        raise InvalidValue(f"accept_threshold must be in [0, 1], got {threshold!r}")

    seed = _int(d, "seed", 0)
    if seed >= 1 << 64:
        raise InvalidValue("seed must fit in 64 bits")

    http_raw = d.get("http", {}) or {}
    http = HttpPolicy(
        max_redirects=_int(http_raw, "max_redirects", 5),
        retries_5xx=_int(http_raw, "retries_5xx", 3),
        backoff_base_ms=_int(http_raw, "backoff_base_ms", 250),
        timeout_ms=_int(http_raw, "timeout_ms", 30000),
    )

    c_raw = d.get("classifier", {}) or {}
    command = c_raw.get("command", [])
    if isinstance(command, str):
        command = command.split()
    classifier = ClassifierSpec(
        kind=c_raw.get("kind", "constant"),
        label=c_raw.get("label", d.get("positive_label", "bird")),
        score=float(c_raw.get("score", 1.0)),
        command=tuple(command),
        model=c_raw.get("model", ""),
        manifest=c_raw.get("manifest", ""),
    )
    if classifier.kind not in ("constant", "oracle", "folder", "command"):
        raise InvalidValue(f"unknown classifier kind {classifier.kind!r}")

    trainer = d.get("trainer", [])
    if isinstance(trainer, str):
        trainer = trainer.split()

    root_taxon = _int(d, "root_taxon", None, lo=1)
    return Config(
        api_base=str(api_base),
        root_taxon=root_taxon,
        dataset_root=Path(d["dataset_root"]),
        group_rank=group_rank,
        leaf_rank=leaf_rank,
        engines=tuple(_engine(e) for e in d.get("engines", [])),
        max_dim=_int(d, "max_dim", 500, lo=1),
        per_species_budget=_int(d, "per_species_budget", 20),
        positive_label=str(d.get("positive_label", "bird")),
        accept_threshold=float(threshold),
        workers=_int(d, "workers", 4, lo=1),
        seed=seed,
        http=http,
        classifier=classifier,
        trainer=tuple(trainer),
    )


def load_config(path) -> Config:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return config_from_dict(raw)


def resolve_config_path(flag: Optional[str]) -> Path:
    """--config flag, then $TAXOFORGE_CONFIG, then ./taxoforge.json."""
    if flag:
        return Path(flag)
    env = os.environ.get(CONFIG_ENV)
    if env:
        return Path(env)
    return Path(DEFAULT_CONFIG_PATH)
