"""PR/issue ingestion from a GitHub-style REST API into an NDJSON store.

Issues are listed with state=all and the ones carrying a pull-request link
are fetched in detail. Records persist one-JSON-object-per-line in
``<root>/<owner>__<name>.ndjson`` (sorted by creation time, deduplicated on
pr_id) next to a ``manifest.json`` resume manifest.

Transports are pluggable: LiveTransport talks HTTP with the token from an
environment variable; FixtureTransport replays recorded request/response
pairs so tests and demos never touch the network.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .core import IntegrityError, PullRequestRecord

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_ENV = "GITHUB_TOKEN"


class IngestError(Exception):
    pass


class RateLimitError(IngestError):
    def __init__(self, message: str, retry_after: float | None):
        super().__init__(message)
        self.retry_after = retry_after


class AuthError(IngestError):
    pass


class NotFoundError(IngestError):
    pass


class MalformedDocumentError(IngestError):
    def __init__(self, index: int, message: str):
        super().__init__(f"document {index}: {message}")
        self.index = index


class FieldMissingError(IngestError):
    def __init__(self, fielding: str):
        super().__init__(f"required field {fielding!r} missing from PR detail")
        self.field = fielding


@dataclass(frozen=True)
class RepoRef:
    owner: str
    name: str

    def __post_init__(self) -> None:
        if not self.owner or not self.name:
            raise ValueError("repo owner and name must be nonempty")

    @property
    def repo_id(self) -> str:
        return f"{self.owner}/{self.name}"

    @property
    def store_filename(self) -> str:
        return f"{self.owner}__{self.name}.ndjson"


@dataclass(frozen=True)
class ApiConfig:
    """URL templates; override base_url to point at a compatible host."""

    base_url: str = "https://api.github.com"
    issues_path: str = "/repos/{owner}/{name}/issues"
    pr_path: str = "/repos/{owner}/{name}/pulls/{number}"
    per_page: int = 100
    token_env: str = DEFAULT_TOKEN_ENV

    def issues_url(self, repo: RepoRef) -> str:
        return self.base_url + self.issues_path.format(owner=repo.owner, name=repo.name)

    def pr_url(self, repo: RepoRef, number: int) -> str:
        return self.base_url + self.pr_path.format(
            owner=repo.owner, name=repo.name, number=number
        )


@dataclass(frozen=True)
class TransportResponse:
    status: int
    headers: dict[str, str]
    body: object


class LiveTransport:
    """requests-backed HTTP GET with bearer auth from the environment."""

    def __init__(self, api: ApiConfig, token: str | None = None, timeout: float = 30.0):
        token = token if token is not None else os.environ.get(api.token_env)
        if not token:
            raise AuthError(f"no API token: set the {api.token_env} environment variable")
        self._timeout = timeout
        self._session = requests.Session()
        self._session.headers.update(
            {
                "Accept": "application/vnd.github.v3+json",
                "Authorization": f"Bearer {token}",
            }
        )

    def get(self, url: str, params: dict[str, str]) -> TransportResponse:
        resp = self._session.get(url, params=params, timeout=self._timeout)
        try:
            body = resp.json()
        except ValueError:
            body = None
        return TransportResponse(resp.status_code, dict(resp.headers), body)


def _request_key(url: str, params: dict[str, str]) -> str:
    return json.dumps({"url": url, "params": {k: str(v) for k, v in sorted(params.items())}})


class FixtureTransport:
    """Replay recorded request/response NDJSON; repeated requests repeat the tail."""

    def __init__(self, fixture_dir: str | Path):
        self._queues: dict[str, list[TransportResponse]] = {}
        fixture_dir = Path(fixture_dir)
        files = sorted(fixture_dir.glob("*.ndjson"))
        if not files:
            raise IngestError(f"no fixture files (*.ndjson) under {fixture_dir}")
        for path in files:
            with path.open() as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    req = entry["request"]
                    resp = entry["response"]
                    key = _request_key(req["url"], req.get("params", {}))
                    self._queues.setdefault(key, []).append(
                        TransportResponse(
                            status=int(resp["status"]),
                            headers={str(k): str(v) for k, v in resp.get("headers", {}).items()},
                            body=resp.get("body"),
                        )
                    )
        self._cursor: dict[str, int] = {}

    def get(self, url: str, params: dict[str, str]) -> TransportResponse:
        key = _request_key(url, params)
        queue = self._queues.get(key)
        if not queue:
            raise IngestError(f"no recorded fixture for request {key}")
        i = self._cursor.get(key, 0)
        self._cursor[key] = i + 1
        return queue[min(i, len(queue) - 1)]


def record_fixture(path: Path, url: str, params: dict, response: TransportResponse) -> None:
    """Append one request/response pair to a fixture file."""
    entry = {
        "request": {"url": url, "params": {k: str(v) for k, v in params.items()}},
        "response": {
            "status": response.status,
            "headers": response.headers,
            "body": response.body,
        },
    }
    with Path(path).open("a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _raise_for_status(resp: TransportResponse, context: str) -> None:
    headers = {k.lower(): v for k, v in resp.headers.items()}
    if resp.status in (403, 429):
        retry_after = headers.get("retry-after")
        remaining = headers.get("x-ratelimit-remaining")
        if retry_after is not None or remaining == "0":
            raise RateLimitError(
                f"rate limited on {context}",
                retry_after=float(retry_after) if retry_after is not None else None,
            )
        raise AuthError(f"forbidden on {context}")
    if resp.status == 401:
        raise AuthError(f"authentication failed on {context}")
    if resp.status == 404:
        raise NotFoundError(f"not found: {context}")
    if resp.status != 200:
        raise IngestError(f"unexpected status {resp.status} on {context}")


def list_issues(
    transport, api: ApiConfig, repo: RepoRef, cursor: str | None = None
) -> tuple[list[dict], str | None]:
    """One page of issue documents (all states) plus the next cursor, if any."""
    page = int(cursor) if cursor else 1
    params = {"state": "all", "per_page": str(api.per_page), "page": str(page)}
    resp = transport.get(api.issues_url(repo), params)
    _raise_for_status(resp, f"issues page {page} of {repo.repo_id}")
    docs = resp.body
    if not isinstance(docs, list):
        raise IngestError(f"issue listing for {repo.repo_id} is not a JSON array")
    next_cursor = str(page + 1) if len(docs) == api.per_page else None
    return docs, next_cursor


def identify_pull_requests(issues: Sequence[dict]) -> list[dict]:
    """Exactly the issue documents that carry a pull-request link."""
    out = []
    for i, doc in enumerate(issues):
        if not isinstance(doc, dict):
            raise MalformedDocumentError(i, "not a JSON object")
        if "pull_request" in doc:
            if "number" not in doc:
                raise MalformedDocumentError(i, "pull-request issue lacks a number")
            out.append(doc)
    return out


def parse_timestamp(value: str) -> int:
    """ISO-8601 (with Z) to integer UTC seconds; sub-second precision dropped."""
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


_DETAIL_COUNTS = ("commits", "changed_files", "additions", "deletions",
                  "comments", "review_comments")


def fetch_pr_detail(transport, api: ApiConfig, repo: RepoRef, number: int) -> PullRequestRecord:
    """Fetch one PR's detail document and normalize it to a record."""
    resp = transport.get(api.pr_url(repo, number), {})
    _raise_for_status(resp, f"PR {repo.repo_id}#{number}")
    doc = resp.body
    if not isinstance(doc, dict):
        raise IngestError(f"PR detail for {repo.repo_id}#{number} is not a JSON object")

    def require(fielding: str):
        if fielding not in doc or doc[fielding] is None:
            raise FieldMissingError(fielding)
        return doc[fielding]

    user = require("user")
    if not isinstance(user, dict) or not user.get("login"):
        raise FieldMissingError("user.login")
    counts = {}
    for name in _DETAIL_COUNTS:
        counts[name] = int(require(name))
    closed_at = doc.get("closed_at")
    merged_at = doc.get("merged_at")
    return PullRequestRecord(
        pr_id=f"{repo.repo_id}#{require('number')}",
        repo_id=repo.repo_id,
        author_id=str(user["login"]),
        created_at=parse_timestamp(require("created_at")),
        closed_at=None if closed_at is None else parse_timestamp(closed_at),
        merged_at=None if merged_at is None else parse_timestamp(merged_at),
        **counts,
    )


def _store_path(store_root: Path, repo_id: str) -> Path:
    owner, name = repo_id.split("/", 1)
    return store_root / f"{owner}__{name}.ndjson"


def load_repo_file(path: str | Path) -> list[PullRequestRecord]:
    records = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(PullRequestRecord.from_json_dict(json.loads(line)))
    return records


def load_store(store_root: str | Path) -> list[PullRequestRecord]:
    """All records across every repo file, in (created_at, pr_id) order."""
    store_root = Path(store_root)
    records: list[PullRequestRecord] = []
    for path in sorted(store_root.glob("*.ndjson")):
        records.extend(load_repo_file(path))
    records.sort(key=lambda r: (r.created_at, r.pr_id))
    return records


def persist(records: Iterable[PullRequestRecord], store_root: str | Path) -> int:
    """Merge records into per-repo NDJSON files; idempotent on pr_id.

    A pr_id seen twice with identical payload is deduplicated; with a
    conflicting payload it raises IntegrityError. Returns the total record
    count persisted across the touched repo files.
    """
    store_root = Path(store_root)
    store_root.mkdir(parents=True, exist_ok=True)
    by_repo: dict[str, list[PullRequestRecord]] = {}
    for rec in records:
        by_repo.setdefault(rec.repo_id, []).append(rec)

    written = 0
    for repo_id, recs in sorted(by_repo.items()):
        path = _store_path(store_root, repo_id)
        merged: dict[str, PullRequestRecord] = {}
        if path.exists():
            for rec in load_repo_file(path):
                merged[rec.pr_id] = rec
        for rec in recs:
            existing = merged.get(rec.pr_id)
            if existing is not None and existing != rec:
                raise IntegrityError(
                    f"pr_id {rec.pr_id!r} already persisted with a different payload"
                )
            merged[rec.pr_id] = rec
        ordered = sorted(merged.values(), key=lambda r: (r.created_at, r.pr_id))
        tmp = path.with_suffix(".ndjson.tmp")
        with tmp.open("w") as fh:
            for rec in ordered:
                fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
        os.replace(tmp, path)
        written += len(ordered)
    return written


class Manifest:
    """Resume bookkeeping: per-repo cursor, fetched-through time, package list."""

    def __init__(self, repos: dict[str, dict] | None = None):
        self.repos = repos or {}

    @classmethod
    def load(cls, store_root: str | Path) -> "Manifest":
        path = Path(store_root) / "manifest.json"
        if not path.exists():
            return cls()
        doc = json.loads(path.read_text())
        return cls(doc.get("repos", {}))

    def save(self, store_root: str | Path) -> None:
        path = Path(store_root) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"version": 1, "repos": self.repos}
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    def entry(self, repo: RepoRef) -> dict:
        return self.repos.setdefault(
            repo.repo_id, {"fetched_through": None, "page_cursor": None, "packages": []}
        )

    def set_fetched_through(self, repo: RepoRef, when: int) -> None:
        entry = self.entry(repo)
        prior = entry.get("fetched_through")
        # nondecreasing across runs
        entry["fetched_through"] = when if prior is None else max(int(prior), when)

    def add_packages(self, repo: RepoRef, packages: Iterable[str]) -> None:
        entry = self.entry(repo)
        entry["packages"] = sorted(set(entry.get("packages", [])) | set(packages))


@dataclass
class IngestStats:
    repo_id: str
    pages: int = 0
    issues: int = 0
    pull_requests: int = 0
    records_persisted: int = 0
    rate_limit_waits: int = 0


def _with_backoff(
    call: Callable[[], object],
    sleep: Callable[[float], None],
    jitter: random.Random,
    stats: IngestStats,
    max_retries: int,
):
    """Retry on rate limits, honoring server retry-after with exponential fallback."""
    for attempt in range(max_retries + 1):
        try:
            return call()
        except RateLimitError as exc:
            if attempt == max_retries:
                raise
            base = exc.retry_after if exc.retry_after is not None else min(2.0**attempt, 300.0)
            delay = base + jitter.uniform(0, 0.1 * base)
            stats.rate_limit_waits += 1
            logger.warning("rate limited; sleeping %.1fs (attempt %d)", delay, attempt + 1)
            sleep(delay)
    raise AssertionError("unreachable")


def ingest_repo(
    transport,
    api: ApiConfig,
    repo: RepoRef,
    store_root: str | Path,
    manifest: Manifest,
    as_of: int | None = None,
    sleep: Callable[[float], None] = time.sleep,
    max_retries: int = 8,
    rng: random.Random | None = None,
) -> IngestStats:
    """Page through a repo's issues, fetch PR details, persist, update manifest.

    Resumes from the manifest's page cursor; the persist layer makes page
    replays harmless.
    """
    store_root = Path(store_root)
    stats = IngestStats(repo_id=repo.repo_id)
    jitter = rng if rng is not None else random.Random(0)
    cursor = manifest.entry(repo).get("page_cursor")
    while True:
        docs, next_cursor = _with_backoff(
            lambda: list_issues(transport, api, repo, cursor),
            sleep, jitter, stats, max_retries,
        )
        stats.pages += 1
        stats.issues += len(docs)
        pr_docs = identify_pull_requests(docs)
        records = []
        for doc in pr_docs:
            records.append(
                _with_backoff(
                    lambda d=doc: fetch_pr_detail(transport, api, repo, int(d["number"])),
                    sleep, jitter, stats, max_retries,
                )
            )
        stats.pull_requests += len(records)
        if records:
            stats.records_persisted = persist(records, store_root)
        manifest.entry(repo)["page_cursor"] = next_cursor
        manifest.save(store_root)
        if next_cursor is None:
            break
        cursor = next_cursor
    if as_of is not None:
        manifest.set_fetched_through(repo, as_of)
    manifest.save(store_root)
    return stats
