"""Append-only local store for gateway rows.

Each record on disk is

    uint32 payload length | uint32 CRC32(payload) | payload (UTF-8 JSON)

in big-endian order. A record whose checksum fails is skipped; a record cut
short at the end of the file (torn write) ends the scan. Both cases log a
warning and never abort the scan.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import zlib
from pathlib import Path

logger = logging.getLogger(__name__)

HEADER = struct.Struct(">II")
MAX_RECORD = 1 << 20


def _row_key(row) -> tuple:
    return (row.timestamp, row.sensor_id)


def encode_record(payload: dict) -> bytes:
    data = json.dumps(payload, separators=(",", ":"), sort_keys=True).encode("utf-8")
    return HEADER.pack(len(data), zlib.crc32(data)) + data


def decode_records(blob: bytes, source: str = "<bytes>") -> tuple[list[dict], int]:
    """Decode every readable record; returns (payloads, warning count)."""
    out = []
    warnings = 0
    pos = 0
    while pos < len(blob):
        if len(blob) - pos < HEADER.size:
            logger.warning("%s: truncated record header at byte %d", source, pos)
            warnings += 1
            break
        length, crc = HEADER.unpack_from(blob, pos)
        start = pos + HEADER.size
        if length > MAX_RECORD:
            logger.warning("%s: implausible record length %d at byte %d", source, length, pos)
            warnings += 1
            break
        if start + length > len(blob):
            logger.warning("%s: truncated record at byte %d", source, pos)
            warnings += 1
            break
        data = blob[start:start + length]
        pos = start + length
        if zlib.crc32(data) != crc:
            logger.warning("%s: checksum mismatch at byte %d, record skipped", source, start - HEADER.size)
            warnings += 1
            continue
        try:
            out.append(json.loads(data.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError):
            logger.warning("%s: undecodable record at byte %d, skipped", source, start - HEADER.size)
            warnings += 1
    return out, warnings


class MemoryStore:
    """In-process store with the same interface as :class:`LocalStore`."""

    def __init__(self):
        self._rows = []

    def append(self, row) -> None:
        self._rows.append(row)

    def scan(self) -> list:
        return sorted(self._rows, key=_row_key)

    def __len__(self):
        return len(self._rows)


class LocalStore:
    """File-backed append-only row log; survives process restarts."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch(exist_ok=True)
        self.last_scan_warnings = 0

    def append(self, row) -> None:
        self.append_many([row])

    def append_many(self, rows) -> None:
        blob = b"".join(encode_record(r.to_dict()) for r in rows)
        with open(self.path, "ab") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())

    def scan(self) -> list:
        from flexsim.gateway import StoredRow

        payloads, self.last_scan_warnings = decode_records(self.path.read_bytes(), str(self.path))
        rows = []
        for p in payloads:
            try:
                rows.append(StoredRow.from_dict(p))
            except (KeyError, TypeError, ValueError):
                logger.warning("%s: record with bad fields skipped", self.path)
                self.last_scan_warnings += 1
        return sorted(rows, key=_row_key)

    def __len__(self):
        return len(self.scan())


def local_store_append(store, rows) -> None:
    for row in rows:
        store.append(row)


def local_store_scan(store) -> list:
    return store.scan()
