"""End-to-end crawl: taxonomy -> engines -> dedup -> imaging -> gate -> layout.

The crawl is resumable. Species and their progress live in the state store,
so a restarted crawl skips finished species and continues a partially
crawled one with its remaining budget.
"""

import logging
import os
import queue
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from taxoforge.config import Config
from taxoforge.crawler import CrawlJob, CrawlReport, Outcome, ProgressReporter, crawl_species
from taxoforge.errors import BackendFailure, DecodeError, TaxoforgeError, Unconvertible
from taxoforge.gate import accept, classify
from taxoforge.imaging import average_hash, prepare
from taxoforge.layout import store_image
from taxoforge.model import LivingStatus
from taxoforge.net import download
from taxoforge.store import StateStore
from taxoforge.taxonomy import TaxonomyClient

log = logging.getLogger(__name__)


class ImageSink:
    """Per-URL processing shared by all crawl workers.

    Order of checks: URL registry, download, decode/resize (animated and
    unknown formats are rejected), hash registry, classifier, write.
    """

    def __init__(self, config: Config, store: StateStore, backend, fetch=None):
        self.config = config
        self.store = store
        self.backend = backend
        self.root = Path(config.dataset_root)
        self.fetch = fetch or (lambda url: download(url, config.http))
        self.records = []
        self._lock = threading.Lock()

    def __call__(self, url, entry) -> Outcome:
        if not self.store.register_url(url):
            return Outcome.DUPLICATE
        try:
            data = self.fetch(url)
        except TaxoforgeError as exc:
            log.info("download failed %s: %s", url, exc)
            return Outcome.ERROR
        try:
            pixels, jpeg = prepare(data, self.config.max_dim)
        except (Unconvertible, DecodeError) as exc:
            log.info("rejected %s: %s", url, exc)
            return Outcome.REJECTED
        h = average_hash(pixels)
        if not self.store.register_hash(h):
            return Outcome.DUPLICATE

        tmp_dir = self.root / ".tmp"
        tmp_dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=tmp_dir, suffix=".jpg")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(jpeg)
            verdict = classify(self.backend, tmp)
        except BackendFailure as exc:
            log.warning("classifier failed on %s: %s", url, exc)
            return Outcome.REJECTED
        finally:
            os.unlink(tmp)
        if not accept(verdict, self.config.positive_label, self.config.accept_threshold):
            return Outcome.REJECTED

        record = store_image(self.root, entry.group_name, jpeg, h, url)
        self.store.bump_accepted(entry.species_key)
        with self._lock:
            self.records.append(record)
        return Outcome.ACCEPTED


def discover_species(config: Config, store: StateStore, client: TaxonomyClient = None):
    """Walk the taxonomy and resolve living status, unless the store
    already holds a species list from an earlier run."""
    if store.snapshot().species:
        return
    client = client or TaxonomyClient(config.api_base, config.http, workers=config.workers)
    entries = client.collect_species(config.root_taxon, config.leaf_rank, config.group_rank)
    log.info("collected %d species", len(entries))
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        statuses = list(pool.map(lambda e: client.resolve_status(e.species_key), entries))
    store.add_species(replace(e, status=s) for e, s in zip(entries, statuses))
    store.checkpoint()


def run_crawl(config: Config, store: StateStore, backend, stop: threading.Event = None,
              fetch=None, client: TaxonomyClient = None, progress_interval: float = 10.0) -> CrawlReport:
    stop = stop or threading.Event()
    discover_species(config, store, client)

    species = [st for st in store.snapshot().species.values() if st.entry.status is not LivingStatus.EXTINCT]
    done = sum(st.done for st in species)
    pending = queue.Queue()
    for st in species:
        if not st.done:
            pending.put(st)

    sink = ImageSink(config, store, backend, fetch)
    total = CrawlReport()
    total_lock = threading.Lock()

    def worker(progress):
        while not stop.is_set():
            try:
                st = pending.get_nowait()
            except queue.Empty:
                return
            budget = max(0, config.per_species_budget - st.accepted)
            job = CrawlJob(st.entry, budget)
            report = crawl_species(job, config.engines, sink, config.http, fetch=fetch, stop=stop)
            with total_lock:
                total.add(report)
            if report.interrupted:
                total.interrupted = True
                return
            store.mark_done(st.entry.species_key)
            store.checkpoint()
            progress.advance()

    try:
        with ProgressReporter(len(species), done, interval=progress_interval) as progress:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                for f in [pool.submit(worker, progress) for _ in range(config.workers)]:
                    f.result()
    finally:
        store.checkpoint()
    if stop.is_set() and not pending.empty():
        total.interrupted = True
    return total
