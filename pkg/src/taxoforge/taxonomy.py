"""Client for a GBIF-style species API.

Endpoints used, relative to ``api_base``::

    {key}                              -> one taxon
    {key}/children?limit=L&offset=O    -> paged child taxa
    {key}/speciesProfiles?limit&offset -> paged profile sources ({"extinct": bool?})
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional

from taxoforge.config import HttpPolicy
from taxoforge.errors import DecodeError, GroupMissing
from taxoforge.model import LivingStatus, Rank, SpeciesEntry, TaxonRecord
from taxoforge.net import get_json

log = logging.getLogger(__name__)

PAGE_LIMIT = 500


def _record(raw, parent_key=None) -> TaxonRecord:
    try:
        key = int(raw["key"])
        name = raw.get("scientificName") or raw.get("canonicalName") or ""
    except (KeyError, TypeError, ValueError, AttributeError):
        raise DecodeError(f"malformed taxon record: {raw!r}") from None
    if key <= 0:
        raise DecodeError(f"non-positive taxon key {key}")
    return TaxonRecord(key=key, scientific_name=str(name), rank=Rank.parse(raw.get("rank")), parent_key=parent_key)


def status_from_votes(votes: Iterable[Optional[bool]]) -> LivingStatus:
    """Majority of sources wins; absent votes (None) abstain.

    A tie, including one extinct vote against one alive, resolves to
    EXTINCT; no votes at all is UNKNOWN.
    """
    extinct = alive = 0
    for v in votes:
        if v is True:
            extinct += 1
        elif v is False:
            alive += 1
    if extinct > alive:
        return LivingStatus.EXTINCT
    if alive > extinct:
        return LivingStatus.ALIVE
    return LivingStatus.EXTINCT if extinct else LivingStatus.UNKNOWN


class TaxonomyClient:
    def __init__(self, api_base: str, policy: HttpPolicy = HttpPolicy(), page_limit: int = PAGE_LIMIT, workers: int = 1):
        self.api_base = api_base.rstrip("/") + "/"
        self.policy = policy
        self.page_limit = page_limit
        self.workers = max(1, workers)

    def _paged(self, path):
        offset = 0
        while True:
            url = f"{self.api_base}{path}?limit={self.page_limit}&offset={offset}"
            page = get_json(url, self.policy)
            if not isinstance(page, dict) or not isinstance(page.get("results"), list):
                raise DecodeError(f"unexpected page shape from {url}")
            results = page["results"]
            yield from results
            if page.get("endOfRecords", True) or not results:
                return
            offset += len(results)

    def fetch_taxon(self, key: int) -> TaxonRecord:
        raw = get_json(f"{self.api_base}{key}", self.policy)
        if not isinstance(raw, dict):
            raise DecodeError(f"unexpected taxon body for {key}")
        parent = raw.get("parentKey")
        return _record(raw, int(parent) if parent else None)

    def fetch_children(self, key: int) -> list[TaxonRecord]:
        if key <= 0:
            raise ValueError("taxon key must be positive")
        return [_record(r, parent_key=key) for r in self._paged(f"{key}/children")]

    def resolve_status(self, species_key: int) -> LivingStatus:
        votes = []
        for source in self._paged(f"{species_key}/speciesProfiles"):
            v = source.get("extinct") if isinstance(source, dict) else None
            votes.append(v if isinstance(v, bool) else None)
        return status_from_votes(votes)

    def collect_species(self, root_key: int, leaf_rank: Rank = Rank.SPECIES, group_rank: Rank = Rank.ORDER,
                        group_name: Optional[str] = None) -> list[SpeciesEntry]:
        """Depth-first walk from ``root_key`` emitting one entry per taxon at
        ``leaf_rank``, grouped under the nearest ancestor at ``group_rank``.

        ``group_name`` stands in for an ancestor above the root. Children
        lists are prefetched on a thread pool, but entries are always
        emitted in depth-first order.
        """
        if not group_rank.coarser_than(leaf_rank):
            raise ValueError("group_rank must be coarser than leaf_rank")
        root = self.fetch_taxon(root_key)
        out: dict[int, SpeciesEntry] = {}

        def emit(node, group):
            if not group:
                raise GroupMissing(node.key)
            out.setdefault(node.key, SpeciesEntry(node.key, node.scientific_name, group))

        def descends(node):
            return node.rank is None or node.rank < leaf_rank

        with ThreadPoolExecutor(max_workers=self.workers) as pool:

            def visit(node, group, children_future):
                children = children_future.result()
                prefetched = {c.key: pool.submit(self.fetch_children, c.key)
                              for c in children if c.rank != leaf_rank and descends(c)}
                for child in children:
                    child_group = child.scientific_name if child.rank == group_rank else group
                    if child.rank == leaf_rank:
                        emit(child, child_group)
                    elif child.key in prefetched:
                        visit(child, child_group, prefetched[child.key])

            group = root.scientific_name if root.rank == group_rank else group_name
            if root.rank == leaf_rank:
                emit(root, group)
            elif descends(root):
                visit(root, group, pool.submit(self.fetch_children, root.key))
        return list(out.values())


def fetch_children(api_base: str, taxon_key: int, policy: HttpPolicy = HttpPolicy(), page_limit: int = PAGE_LIMIT):
    return TaxonomyClient(api_base, policy, page_limit).fetch_children(taxon_key)


def collect_species(api_base: str, root_key: int, leaf_rank: Rank = Rank.SPECIES, group_rank: Rank = Rank.ORDER,
                    policy: HttpPolicy = HttpPolicy(), workers: int = 1, group_name: Optional[str] = None):
    client = TaxonomyClient(api_base, policy, workers=workers)
    return client.collect_species(root_key, leaf_rank, group_rank, group_name=group_name)


def resolve_status(api_base: str, species_key: int, policy: HttpPolicy = HttpPolicy()) -> LivingStatus:
    return TaxonomyClient(api_base, policy).resolve_status(species_key)
