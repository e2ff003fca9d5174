"""Feeder, parser and downloader stages of the image crawler."""

import enum
import logging
import threading
import time
from dataclasses import dataclass
from html.parser import HTMLParser
from typing import Callable, Optional
from urllib.parse import urljoin, urlsplit

from taxoforge.config import HttpPolicy
from taxoforge.errors import TaxoforgeError
from taxoforge.layout import round_half_up
from taxoforge.model import EngineSpec, SpeciesEntry
from taxoforge.net import download

log = logging.getLogger("taxoforge.crawler")


class _ImgSrcParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.srcs = []

    def handle_starttag(self, tag, attrs):
        if tag == "img":
            for name, value in attrs:
                if name == "src" and value and value.strip():
                    self.srcs.append(value.strip())
                    break

    handle_startendtag = handle_starttag


def parse_image_urls(html: bytes, base_url: str) -> list[str]:
    """Absolute http(s) URLs of all <img src> in document order, first
    occurrence only. Never raises on malformed input."""
    if isinstance(html, (bytes, bytearray)):
        text = bytes(html).decode("utf-8", errors="replace")
    else:
        text = str(html)
    parser = _ImgSrcParser()
    try:
        parser.feed(text)
        parser.close()
    except Exception:  # html.parser can choke on pathological markup
        log.debug("HTML parse aborted for %s", base_url, exc_info=True)
    out, seen = [], set()
    for src in parser.srcs:
        try:
            url = urljoin(base_url, src)
        except ValueError:
            continue
        if urlsplit(url).scheme not in ("http", "https") or url in seen:
            continue
        seen.add(url)
        out.append(url)
    return out


class Outcome(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    DUPLICATE = "duplicate"
    ERROR = "error"


@dataclass
class CrawlJob:
    entry: SpeciesEntry
    budget: int
    engine_cursor: tuple = (0, 0)


@dataclass
class CrawlReport:
    attempted: int = 0
    accepted: int = 0
    rejected: int = 0
    duplicates: int = 0
    errors: int = 0
    interrupted: bool = False

    def add(self, other: "CrawlReport"):
        self.attempted += other.attempted
        self.accepted += other.accepted
        self.rejected += other.rejected
        self.duplicates += other.duplicates
        self.errors += other.errors


Sink = Callable[[str, SpeciesEntry], Outcome]


def crawl_species(job: CrawlJob, engines, sink: Sink, policy: HttpPolicy = HttpPolicy(),
                  fetch=None, stop: Optional[threading.Event] = None) -> CrawlReport:
    """Page through each engine for ``job.entry`` and feed image URLs to
    ``sink`` until the budget is spent or the engines run dry.

    An engine is dry once a page has no URLs it has not already served. A
    failing page fetch counts as one attempted error and skips the engine.
    """
    fetch = fetch or (lambda url: download(url, policy))
    report = CrawlReport()
    query = job.entry.species_name
    start_engine, start_offset = job.engine_cursor
    for idx in range(start_engine, len(engines)):
        engine: EngineSpec = engines[idx]
        offset = start_offset if idx == start_engine else 0
        served = set()
        while job.budget > 0:
            job.engine_cursor = (idx, offset)
            page_url = engine.page_url(query, offset)
            try:
                html = fetch(page_url)
            except TaxoforgeError as exc:
                log.warning("engine %s page %s failed: %s", engine.name, page_url, exc)
                report.attempted += 1
                report.errors += 1
                break
            urls = parse_image_urls(html, page_url)
            if not urls or served.issuperset(urls):
                break
            served.update(urls)
            for url in urls:
                if job.budget <= 0:
                    break
                if stop is not None and stop.is_set():
                    report.interrupted = True
                    return report
                outcome = sink(url, job.entry)
                report.attempted += 1
                if outcome is Outcome.ACCEPTED:
                    report.accepted += 1
                    job.budget -= 1
                elif outcome is Outcome.REJECTED:
                    report.rejected += 1
                elif outcome is Outcome.DUPLICATE:
                    report.duplicates += 1
                else:
                    report.errors += 1
            offset += engine.page_size
        if job.budget <= 0:
            break
    return report


@dataclass(frozen=True)
class Progress:
    done: int
    total: int
    elapsed_ms: int

    def __post_init__(self):
        if not 0 <= self.done <= self.total:
            raise ValueError("need 0 <= done <= total")


def _hms(ms: int) -> str:
    s = ms // 1000
    return f"{s // 3600}:{s // 60 % 60:02d}:{s % 60:02d}"


def progress_line(p: Progress, label: str) -> str:
    if p.total:
        pct = round_half_up(p.done * 100 / p.total)
    else:
        pct = 100.0
    eta = _hms(p.elapsed_ms * (p.total - p.done) // p.done) if p.done else "--:--:--"
    return f"{label} {p.done}/{p.total} ({pct:.2f}%) elapsed={_hms(p.elapsed_ms)} eta={eta}"


class ProgressReporter:
    """Counts completed species and logs a progress line on every
    completion and every ``interval`` seconds."""

    def __init__(self, total: int, done: int = 0, label: str = "Crawler", interval: float = 10.0):
        self.total = total
        self.done = done
        self.label = label
        self.interval = interval
        self._t0 = time.monotonic()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = None

    def snapshot(self) -> Progress:
        with self._lock:
            return Progress(self.done, self.total, int((time.monotonic() - self._t0) * 1000))

    def emit(self):
        log.info(progress_line(self.snapshot(), self.label))

    def advance(self, n: int = 1):
        with self._lock:
            self.done = min(self.total, self.done + n)
        self.emit()

    def _tick(self):
        while not self._stop.wait(self.interval):
            self.emit()

    def __enter__(self):
        self._thread = threading.Thread(target=self._tick, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        if self._thread:
            self._thread.join()
