"""Per-author global activity aggregates as of an arbitrary timestamp.

Stands in for the cross-project commit maps: a CSV of commit events feeds an
immutable store that answers "how many commits / first-authored blobs /
distinct projects did this author have strictly before time t". Strictly:
an event at exactly t is invisible, so a PR's own commits never count toward
its creator's track record.
"""

from __future__ import annotations

import csv
import gzip
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import AuthorActivityEvent

CSV_COLUMNS = ("author_id", "timestamp", "project_id", "blobs_authored")


class ActivityParseError(ValueError):
    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ActivitySnapshot:
    author_id: str
    as_of: int
    total_commits: int
    total_blobs: int
    total_projects: int


class _AuthorIndex:
    """Sorted event times with prefix sums for O(log n) snapshots."""

    __slots__ = ("times", "blob_prefix", "project_prefix")

    def __init__(self, events: list[tuple[int, str, int]]):
        events.sort(key=lambda e: e[0])
        self.times = np.array([e[0] for e in events], dtype=np.int64)
        blobs = np.array([e[2] for e in events], dtype=np.int64)
        self.blob_prefix = np.concatenate(([0], np.cumsum(blobs)))
        seen: set[str] = set()
        first = np.zeros(len(events), dtype=np.int64)
        for i, (_, project, _) in enumerate(events):
            if project not in seen:
                seen.add(project)
                first[i] = 1
        self.project_prefix = np.concatenate(([0], np.cumsum(first)))


class ActivityStore:
    """Immutable author -> events index; safe to share across threads."""

    def __init__(self, index: dict[str, _AuthorIndex]):
        self._index = index

    @classmethod
    def from_events(cls, events: Iterable[AuthorActivityEvent]) -> "ActivityStore":
        by_author: dict[str, list[tuple[int, str, int]]] = {}
        for ev in events:
            by_author.setdefault(ev.author_id, []).append(
                (ev.timestamp, ev.project_id, ev.blobs_authored)
            )
        return cls({a: _AuthorIndex(evs) for a, evs in by_author.items()})

    @classmethod
    def load(cls, path: str | Path) -> "ActivityStore":
        """Load the event CSV (gzip accepted when the name ends in .gz)."""
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        by_author: dict[str, list[tuple[int, str, int]]] = {}
        with opener(path, "rt", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ActivityParseError(path, 1, f"missing columns {sorted(missing)}")
            for row in reader:
                line = reader.line_num
                if row.get(None):
                    raise ActivityParseError(path, line, "too many fields")
                try:
                    author = row["author_id"]
                    timestamp = int(row["timestamp"])
                    project = row["project_id"]
                    blobs = int(row["blobs_authored"])
                except (TypeError, ValueError) as exc:
                    raise ActivityParseError(path, line, f"bad row: {exc}") from exc
                if blobs < 0:
                    raise ActivityParseError(path, line, f"negative blobs_authored {blobs}")
                by_author.setdefault(author, []).append((timestamp, project, blobs))
        return cls({a: _AuthorIndex(evs) for a, evs in by_author.items()})

    def authors(self) -> list[str]:
        return sorted(self._index)

    def snapshot(self, author_id: str, as_of: int) -> ActivitySnapshot:
        """Totals over events strictly before ``as_of``; unknown authors are all-zero."""
        idx = self._index.get(author_id)
        if idx is None:
            return ActivitySnapshot(author_id, as_of, 0, 0, 0)
        k = int(np.searchsorted(idx.times, as_of, side="left"))
        return ActivitySnapshot(
            author_id=author_id,
            as_of=as_of,
            total_commits=k,
            total_blobs=int(idx.blob_prefix[k]),
            total_projects=int(idx.project_prefix[k]),
        )


def write_events_csv(events: Iterable[AuthorActivityEvent], path: str | Path) -> int:
    """Write events in the store's CSV schema; returns the row count."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    count = 0
    with opener(path, "wt", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for ev in events:
            writer.writerow([ev.author_id, ev.timestamp, ev.project_id, ev.blobs_authored])
            count += 1
    return count
