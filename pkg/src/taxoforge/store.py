"""Durable crawl state as an append-only log plus in-memory sets.

Record framing (all integers little-endian)::

    u32 payload length | u8 tag | payload | u32 CRC32(tag + payload)

Tags: ``U`` URL (UTF-8), ``H`` average hash (u64), ``S`` species state
(UTF-8 JSON), ``C`` cursor (u64). A torn or bad final record is dropped on
replay; a bad record anywhere else raises CorruptLog.
"""

import copy
import json
import logging
import os
import struct
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from taxoforge.errors import CorruptLog
from taxoforge.model import SpeciesEntry

log = logging.getLogger(__name__)

LOG_NAME = "state.tflog"

_HEAD = struct.Struct("<IB")
_CRC = struct.Struct("<I")
_U64 = struct.Struct("<Q")
TAGS = {b"U"[0], b"H"[0], b"S"[0], b"C"[0]}


@dataclass
class SpeciesState:
    entry: SpeciesEntry
    done: bool = False
    accepted: int = 0


@dataclass
class StoreSnapshot:
    urls: set = field(default_factory=set)
    hashes: set = field(default_factory=set)
    species: dict = field(default_factory=dict)  # species_key -> SpeciesState
    cursor: int = 0


def encode_record(tag: bytes, payload: bytes) -> bytes:
    body = tag + payload
    return _HEAD.pack(len(payload), tag[0]) + payload + _CRC.pack(zlib.crc32(body))


def _species_payload(st: SpeciesState) -> bytes:
    d = st.entry.to_dict()
    d["done"] = st.done
    d["accepted"] = st.accepted
    return json.dumps(d, sort_keys=True).encode("utf-8")


def _apply(snap: StoreSnapshot, tag: int, payload: bytes):
    if tag == b"U"[0]:
        snap.urls.add(payload.decode("utf-8"))
    elif tag == b"H"[0]:
        snap.hashes.add(_U64.unpack(payload)[0])
    elif tag == b"S"[0]:
        d = json.loads(payload.decode("utf-8"))
        snap.species[int(d["species_key"])] = SpeciesState(
            SpeciesEntry.from_dict(d), bool(d.get("done")), int(d.get("accepted", 0))
        )
    elif tag == b"C"[0]:
        snap.cursor = _U64.unpack(payload)[0]


def replay_bytes(data: bytes) -> tuple[StoreSnapshot, int]:
    """Rebuild state from log bytes; also returns the offset just past the
    last good record."""
    snap = StoreSnapshot()
    pos, n = 0, len(data)
    while pos < n:
        if pos + _HEAD.size > n:
            break
        length, tag = _HEAD.unpack_from(data, pos)
        end = pos + _HEAD.size + length + _CRC.size
        if end > n:
            break
        body = data[pos + 4:end - _CRC.size]
        (crc,) = _CRC.unpack_from(data, end - _CRC.size)
        ok = crc == zlib.crc32(body) and tag in TAGS
        if ok:
            try:
                _apply(snap, tag, body[1:])
            except (ValueError, KeyError, struct.error, UnicodeDecodeError):
                ok = False
        if not ok:
            if end == n:
                break
            raise CorruptLog(pos)
        pos = end
    return snap, pos


def replay(path) -> StoreSnapshot:
    p = Path(path)
    if not p.exists():
        return StoreSnapshot()
    return replay_bytes(p.read_bytes())[0]


def serialize(snap: StoreSnapshot) -> bytes:
    out = bytearray()
    for url in sorted(snap.urls):
        out += encode_record(b"U", url.encode("utf-8"))
    for h in sorted(snap.hashes):
        out += encode_record(b"H", _U64.pack(h))
    for st in snap.species.values():
        out += encode_record(b"S", _species_payload(st))
    out += encode_record(b"C", _U64.pack(snap.cursor))
    return bytes(out)


class StateStore:
    """Thread-safe registry backed by the append-only log at ``path``.

    Every mutation is appended immediately; ``checkpoint`` makes the
    appended records durable.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        if self.path.exists():
            self._state, good = replay_bytes(self.path.read_bytes())
            if good != self.path.stat().st_size:
                log.warning("dropping torn tail of %s at offset %d", self.path, good)
                with open(self.path, "r+b") as fh:
                    fh.truncate(good)
        else:
            self._state = StoreSnapshot()
        self._fh = open(self.path, "ab")

    def _append(self, tag: bytes, payload: bytes):
        self._fh.write(encode_record(tag, payload))

    def register_url(self, url: str) -> bool:
        with self._lock:
            if url in self._state.urls:
                return False
            self._append(b"U", url.encode("utf-8"))
            self._state.urls.add(url)
            return True

    def register_hash(self, h: int) -> bool:
        with self._lock:
            if h in self._state.hashes:
                return False
            self._append(b"H", _U64.pack(h))
            self._state.hashes.add(h)
            return True

    def has_url(self, url) -> bool:
        with self._lock:
            return url in self._state.urls

    def has_hash(self, h) -> bool:
        with self._lock:
            return h in self._state.hashes

    def put_species(self, entry: SpeciesEntry, done: bool = False, accepted: int = 0):
        with self._lock:
            prev = self._state.species.get(entry.species_key)
            if prev is not None and prev.entry == entry and prev.done == done and prev.accepted == accepted:
                return
            if prev is not None and prev.done and not done:
                raise ValueError(f"species {entry.species_key} is already done")
            st = SpeciesState(entry, done, accepted)
            self._append(b"S", _species_payload(st))
            self._state.species[entry.species_key] = st

    def add_species(self, entries):
        """Record entries not seen before; existing ones keep their state."""
        with self._lock:
            for e in entries:
                if e.species_key not in self._state.species:
                    self.put_species(e)

    def species_state(self, key: int) -> Optional[SpeciesState]:
        with self._lock:
            st = self._state.species.get(key)
            return copy.copy(st) if st else None

    def set_accepted(self, key: int, accepted: int):
        with self._lock:
            st = self._state.species[key]
            self.put_species(st.entry, st.done, accepted)

    def bump_accepted(self, key: int) -> int:
        with self._lock:
            st = self._state.species.get(key)
            if st is None:
                return 0
            self.put_species(st.entry, st.done, st.accepted + 1)
            return st.accepted + 1

    def mark_done(self, key: int):
        with self._lock:
            st = self._state.species[key]
            if st.done:
                return
            self.put_species(st.entry, True, st.accepted)
            self._state.cursor += 1
            self._append(b"C", _U64.pack(self._state.cursor))

    @property
    def cursor(self) -> int:
        with self._lock:
            return self._state.cursor

    def checkpoint(self):
        with self._lock:
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def snapshot(self) -> StoreSnapshot:
        with self._lock:
            return copy.deepcopy(self._state)

    def close(self):
        with self._lock:
            if not self._fh.closed:
                self.checkpoint()
                self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
