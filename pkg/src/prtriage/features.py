"""Leak-free predictor construction from a time-ordered PR corpus.

The central rule: a PR's feature vector may depend only on what was knowable
strictly before its creation. Submission counters see earlier submissions
(created_at < this PR's created_at), acceptance fractions see earlier merges
(merged_at < created_at), and author activity snapshots cut at created_at.
PRs sharing a creation timestamp do not see each other.

Count-like predictors are stored as ln(1+x); the two acceptance fractions and
the label stay raw.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .activity import ActivityStore
from .core import IntegrityError, PullRequestRecord, age_seconds, is_labelable, label

SCHEMA_VERSION = "1"

FULL_COLUMNS = (
    "age",
    "commits",
    "changed_files",
    "comments",
    "review_comments",
    "additions",
    "deletions",
    "creator_total_commits",
    "creator_total_blobs",
    "creator_total_projects",
    "repo_submitted",
    "repo_accepted",
    "creator_submitted",
    "creator_accepted",
)

#: Predictors that keep changing after submission; dropped in SUBMISSION_TIME mode.
POST_SUBMISSION_COLUMNS = ("age", "comments", "review_comments")

SUBMISSION_TIME_COLUMNS = tuple(
    c for c in FULL_COLUMNS if c not in POST_SUBMISSION_COLUMNS
)

_MODES = {
    "FULL": FULL_COLUMNS,
    "SUBMISSION_TIME": SUBMISSION_TIME_COLUMNS,
}


@dataclass(frozen=True)
class FeatureSchema:
    """Named, ordered training columns; the mode pins the standard sets."""

    mode: str
    columns: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.mode in _MODES:
            if self.columns != _MODES[self.mode]:
                raise ValueError(f"{self.mode} schema must use its canonical column order")
        elif self.mode != "CUSTOM":
            raise ValueError(f"unknown schema mode {self.mode!r}")
        if len(set(self.columns)) != len(self.columns) or not self.columns:
            raise ValueError("schema columns must be nonempty and unique")

    @classmethod
    def full(cls) -> "FeatureSchema":
        return cls("FULL", FULL_COLUMNS)

    @classmethod
    def submission_time(cls) -> "FeatureSchema":
        return cls("SUBMISSION_TIME", SUBMISSION_TIME_COLUMNS)

    @classmethod
    def for_mode(cls, mode: str) -> "FeatureSchema":
        if mode not in _MODES:
            raise ValueError(f"unknown schema mode {mode!r}")
        return cls(mode, _MODES[mode])

    @classmethod
    def custom(cls, columns: Sequence[str]) -> "FeatureSchema":
        return cls("CUSTOM", tuple(columns))

    def to_json_dict(self) -> dict:
        return {"version": SCHEMA_VERSION, "mode": self.mode, "columns": list(self.columns)}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureSchema":
        if str(doc.get("version")) != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {doc.get('version')!r}")
        return cls(str(doc["mode"]), tuple(doc["columns"]))


def log_transform(x: float) -> float:
    """ln(1+x): keeps zero counts finite while compressing the heavy tails."""
    if x < 0:
        raise ValueError(f"log_transform needs x >= 0, got {x}")
    return math.log1p(x)


@dataclass(frozen=True)
class FeatureVector:
    """The 14 predictors for one PR, plus its label and identity bookkeeping.

    Count predictors are ln(1+x)-transformed; repo_accepted and
    creator_accepted are raw fractions in [0, 1]. ``label`` is None only for
    scoring rows (open PRs) built with include_unlabelable.
    """

    pr_id: str
    repo_id: str
    created_at: int
    age: float
    commits: float
    changed_files: float
    comments: float
    review_comments: float
    additions: float
    deletions: float
    creator_total_commits: float
    creator_total_blobs: float
    creator_total_projects: float
    repo_submitted: float
    repo_accepted: float
    creator_submitted: float
    creator_accepted: float
    label: bool | None

    def values(self, columns: Sequence[str]) -> list[float]:
        return [getattr(self, name) for name in columns]


def build_dataset(
    prs: Iterable[PullRequestRecord],
    activity: ActivityStore,
    schema: FeatureSchema,
    as_of: int,
    include_unlabelable: bool = False,
) -> list[FeatureVector]:
    """One feature vector per labelable PR, in (created_at, pr_id) order.

    The corpus is re-sorted defensively. Every PR feeds the running history
    counters regardless of labelability, so a young open PR still counts as a
    prior submission for the PRs that follow it. Acceptance counters only
    advance once a merge is strictly in the past, and only for merges inside
    the 30-day window (the same notion of "accepted" as the label).

    With ``include_unlabelable`` the undecidable PRs (open, younger than the
    window) also get vectors with ``label=None`` — that is the scoring path
    for ranking open PRs, with age measured at ``as_of``.
    """
    if not isinstance(schema, FeatureSchema):
        raise TypeError("schema must be a FeatureSchema")
    records = sorted(prs, key=lambda r: (r.created_at, r.pr_id))
    seen: set[str] = set()
    for r in records:
        if r.pr_id in seen:
            raise IntegrityError(f"duplicate pr_id {r.pr_id!r} in corpus")
        seen.add(r.pr_id)

    repo_submitted: dict[str, int] = defaultdict(int)
    repo_accepted: dict[str, int] = defaultdict(int)
    creator_submitted: dict[str, int] = defaultdict(int)
    creator_accepted: dict[str, int] = defaultdict(int)
    # merges not yet old enough to be known: (merged_at, repo_id, author_id)
    pending: list[tuple[int, str, str]] = []

    out: list[FeatureVector] = []
    i = 0
    n = len(records)
    while i < n:
        t = records[i].created_at
        j = i
        while j < n and records[j].created_at == t:
            j += 1
        while pending and pending[0][0] < t:
            _, repo, author = heapq.heappop(pending)
            repo_accepted[repo] += 1
            creator_accepted[author] += 1
        for r in records[i:j]:
            if r.created_at > as_of:
                continue
            labelable = is_labelable(r, as_of)
            if not labelable and not include_unlabelable:
                continue
            snap = activity.snapshot(r.author_id, r.created_at)
            rs = repo_submitted[r.repo_id]
            cs = creator_submitted[r.author_id]
            out.append(
                FeatureVector(
                    pr_id=r.pr_id,
                    repo_id=r.repo_id,
                    created_at=r.created_at,
                    age=log_transform(age_seconds(r, as_of)),
                    commits=log_transform(r.commits),
                    changed_files=log_transform(r.changed_files),
                    comments=log_transform(r.comments),
                    review_comments=log_transform(r.review_comments),
                    additions=log_transform(r.additions),
                    deletions=log_transform(r.deletions),
                    creator_total_commits=log_transform(snap.total_commits),
                    creator_total_blobs=log_transform(snap.total_blobs),
                    creator_total_projects=log_transform(snap.total_projects),
                    repo_submitted=log_transform(rs),
                    repo_accepted=(repo_accepted[r.repo_id] / rs) if rs else 0.0,
                    creator_submitted=log_transform(cs),
                    creator_accepted=(creator_accepted[r.author_id] / cs) if cs else 0.0,
                    label=label(r).accepted_within_window if labelable else None,
                )
            )
        # the whole tie group becomes history only after every member is emitted
        for r in records[i:j]:
            repo_submitted[r.repo_id] += 1
            creator_submitted[r.author_id] += 1
            if r.merged_at is not None and label(r).accepted_within_window:
                heapq.heappush(pending, (r.merged_at, r.repo_id, r.author_id))
        i = j
    return out


def to_arrays(
    vectors: Sequence[FeatureVector], schema: FeatureSchema
) -> tuple[np.ndarray, np.ndarray]:
    """(X, y) matrices in schema column order; requires labeled vectors."""
    if any(v.label is None for v in vectors):
        raise ValueError("unlabeled vectors cannot enter a training matrix")
    X = np.array([v.values(schema.columns) for v in vectors], dtype=np.float64)
    X = X.reshape(len(vectors), len(schema.columns))
    y = np.array([1 if v.label else 0 for v in vectors], dtype=np.int64)
    return X, y


def export_matrix(
    vectors: Sequence[FeatureVector], schema: FeatureSchema, path: str | Path
) -> int:
    """Write the modeling CSV: header = schema columns + label, rows by (created_at, pr_id).

    Floats are written with repr so a parse-back reproduces them bit-exactly.
    Returns the number of data rows.
    """
    ordered = sorted(vectors, key=lambda v: (v.created_at, v.pr_id))
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(schema.columns) + ["label"])
        for v in ordered:
            if v.label is None:
                raise ValueError(f"vector {v.pr_id} has no label; cannot export")
            writer.writerow([repr(x) for x in v.values(schema.columns)] + [int(v.label)])
    return len(ordered)


def import_matrix(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Parse a matrix CSV back into (columns, X, y)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: expected a trailing 'label' column")
        columns = header[:-1]
        xs, ys = [], []
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{path}: row {reader.line_num} has {len(row)} fields")
            xs.append([float(v) for v in row[:-1]])
            ys.append(int(row[-1]))
    X = np.array(xs, dtype=np.float64).reshape(len(xs), len(columns))
    return columns, X, np.array(ys, dtype=np.int64)
