"""Domain types shared by the taxonomy client, crawler and state store."""

import enum
from dataclasses import dataclass
from functools import total_ordering
from typing import Optional


@total_ordering
class Rank(enum.Enum):
    """Taxonomic rank, ordered coarse to fine (DOMAIN < ... < SPECIES)."""

    DOMAIN = 0
    KINGDOM = 1
    PHYLUM = 2
    CLASS = 3
    ORDER = 4
    FAMILY = 5
    GENUS = 6
    SPECIES = 7

    def __lt__(self, other):
        if not isinstance(other, Rank):
            return NotImplemented
        return self.value < other.value

    def coarser_than(self, other: "Rank") -> bool:
        return self < other

    @classmethod
    def parse(cls, name) -> Optional["Rank"]:
        """Return the rank for an API rank string, or None for ranks outside
        the eight main levels (SUBSPECIES, UNRANKED, ...)."""
        if isinstance(name, Rank):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            return None


class LivingStatus(str, enum.Enum):
    ALIVE = "ALIVE"
    EXTINCT = "EXTINCT"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class TaxonRecord:
    key: int
    scientific_name: str
    rank: Optional[Rank]
    parent_key: Optional[int] = None


@dataclass(frozen=True)
class SpeciesEntry:
    species_key: int
    species_name: str
    group_name: str
    status: LivingStatus = LivingStatus.UNKNOWN

    def to_dict(self):
        return {
            "species_key": self.species_key,
            "species_name": self.species_name,
            "group_name": self.group_name,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            species_key=int(d["species_key"]),
            species_name=d["species_name"],
            group_name=d["group_name"],
            status=LivingStatus(d.get("status", "UNKNOWN")),
        )


@dataclass(frozen=True)
class EngineSpec:
    """A paginated HTML gallery source.

    ``url_template`` is expanded with ``{query}`` (URL-quoted species name)
    and ``{offset}`` (0, page_size, 2*page_size, ...).
    """

    name: str
    url_template: str
    page_size: int = 20

    def page_url(self, query: str, offset: int) -> str:
        from urllib.parse import quote_plus

        return self.url_template.replace("{query}", quote_plus(query)).replace(
            "{offset}", str(offset)
        )
