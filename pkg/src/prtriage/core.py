"""Domain types shared across the pipeline.

All timestamps are integer UTC seconds (sub-second precision is dropped at
ingestion). A pull request counts as accepted when it was merged within the
30-day acceptance window after creation; everything downstream (labels,
running acceptance fractions, the age cap) hangs off that one definition.
"""

from __future__ import annotations

from dataclasses import dataclass

#: Acceptance window: 30 days in seconds.
WINDOW_SECONDS = 30 * 24 * 3600

COUNT_FIELDS = (
    "commits",
    "changed_files",
    "additions",
    "deletions",
    "comments",
    "review_comments",
)


class RecordError(ValueError):
    """A record violates its type invariants."""


class IntegrityError(ValueError):
    """Two records claim the same identity with conflicting payloads."""


class ClockSkewError(ValueError):
    """An as-of time earlier than the record's creation (corrupt clocks)."""


@dataclass(frozen=True)
class PullRequestRecord:
    """One pull request as ingested from the hosting API."""

    pr_id: str
    repo_id: str
    author_id: str
    created_at: int
    closed_at: int | None
    merged_at: int | None
    commits: int
    changed_files: int
    additions: int
    deletions: int
    comments: int
    review_comments: int

    def __post_init__(self) -> None:
        for name in COUNT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise RecordError(f"{self.pr_id}: {name} must be a count >= 0, got {value!r}")
        if self.merged_at is not None:
            if self.closed_at is None:
                raise RecordError(f"{self.pr_id}: merged_at set but closed_at missing")
            if self.merged_at > self.closed_at:
                raise RecordError(f"{self.pr_id}: merged_at after closed_at")
            if self.merged_at < self.created_at:
                raise RecordError(f"{self.pr_id}: merged_at before created_at")
        if self.closed_at is not None and self.created_at > self.closed_at:
            raise RecordError(f"{self.pr_id}: created_at after closed_at")

    def to_json_dict(self) -> dict:
        return {
            "pr_id": self.pr_id,
            "repo_id": self.repo_id,
            "author_id": self.author_id,
            "created_at": self.created_at,
            "closed_at": self.closed_at,
            "merged_at": self.merged_at,
            "commits": self.commits,
            "changed_files": self.changed_files,
            "additions": self.additions,
            "deletions": self.deletions,
            "comments": self.comments,
            "review_comments": self.review_comments,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PullRequestRecord":
        try:
            return cls(
                pr_id=str(doc["pr_id"]),
                repo_id=str(doc["repo_id"]),
                author_id=str(doc["author_id"]),
                created_at=int(doc["created_at"]),
                closed_at=None if doc.get("closed_at") is None else int(doc["closed_at"]),
                merged_at=None if doc.get("merged_at") is None else int(doc["merged_at"]),
                commits=int(doc["commits"]),
                changed_files=int(doc["changed_files"]),
                additions=int(doc["additions"]),
                deletions=int(doc["deletions"]),
                comments=int(doc["comments"]),
                review_comments=int(doc["review_comments"]),
            )
        except KeyError as exc:
            raise RecordError(f"record missing field {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class AuthorActivityEvent:
    """One external commit by an author: when, where, how many new blobs."""

    author_id: str
    timestamp: int
    project_id: str
    blobs_authored: int

    def __post_init__(self) -> None:
        if not isinstance(self.timestamp, int):
            raise RecordError(f"event timestamp must be integer seconds, got {self.timestamp!r}")
        if self.blobs_authored < 0:
            raise RecordError(f"blobs_authored must be >= 0, got {self.blobs_authored}")


@dataclass(frozen=True)
class Label:
    accepted_within_window: bool


def label(pr: PullRequestRecord) -> Label:
    """True iff the PR was merged no later than 30 days after creation."""
    accepted = pr.merged_at is not None and pr.merged_at - pr.created_at <= WINDOW_SECONDS
    return Label(accepted_within_window=accepted)


def age_seconds(pr: PullRequestRecord, as_of: int) -> int:
    """Seconds from creation to closure (or to ``as_of`` while open), capped at the window.

    Raises ClockSkewError when ``as_of`` precedes creation: that means the
    caller is evaluating a PR before it existed, which only happens with
    corrupted timestamps.
    """
    if as_of < pr.created_at:
        raise ClockSkewError(
            f"{pr.pr_id}: as_of {as_of} precedes created_at {pr.created_at}"
        )
    effective_close = pr.closed_at if pr.closed_at is not None else as_of
    return min(effective_close - pr.created_at, WINDOW_SECONDS)


def is_labelable(pr: PullRequestRecord, as_of: int) -> bool:
    """Whether the 30-day outcome of this PR is decidable at ``as_of``.

    Closed PRs are always decidable. Open PRs are decidable only once the
    window has fully elapsed (the outcome of a younger open PR is still up
    in the air, so it must stay out of labeled datasets).
    """
    if pr.created_at > as_of:
        return False
    if pr.closed_at is not None:
        return True
    return as_of - pr.created_at >= WINDOW_SECONDS
