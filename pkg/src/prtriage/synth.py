"""Synthetic PR corpus generator with planted, recoverable signal.

Acceptance probability is a known function of the generated attributes:
a sweet-spot bump when patch sizes fall in their preferred zones, a step
bonus once the author's global activity crosses reputation thresholds, a
latent author-skill slope, and an optional base-rate drift over time. Closure
delays differ by outcome (accepted PRs close fast), so PR age carries signal;
discussion counts do too. History-derived predictors (prior submissions and
acceptance fractions) are emergent: the corpus is drawn in time order, so an
author's past acceptances genuinely reflect the planted skill.

The written corpus uses the ingest store layout, so the whole pipeline runs
on it unchanged; a truth file records every PR's true probability.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activity import ActivityStore, write_events_csv
from .core import WINDOW_SECONDS, AuthorActivityEvent, PullRequestRecord
from .ingest import Manifest, RepoRef, persist


class SynthSpecError(ValueError):
    pass


_STREAMS = {"authors": 0, "events": 1, "prs": 2, "noise": 3, "labels": 4,
            "delays": 5, "comments": 6}


def _rng(seed: int, stream: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(7, _STREAMS[stream]))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the generator; defaults plant every effect decisively."""

    n_repos: int = 40
    n_authors: int = 350
    n_prs: int = 20000
    seed: int = 0

    start_time: int = 1_451_606_400  # 2016-01-01T00:00:00Z
    duration_s: int = 730 * 86400
    activity_back_s: int = 1095 * 86400
    collection_lag_s: int = 7 * 86400

    base_logit: float = 0.3
    sweet_spot_weight: float = 1.7
    reputation_weight: float = 1.4
    skill_weight: float = 1.4
    noise_scale: float = 0.55
    deterministic_labels: bool = False

    # patch-size sweet zones (inclusive, raw counts)
    commits_zone: tuple[int, int] = (1, 4)
    additions_zone: tuple[int, int] = (5, 100)
    deletions_zone: tuple[int, int] = (30, 250)
    changed_files_zone: tuple[int, int] = (5, 15)

    # reputation thresholds on the author's global activity snapshot
    commits_threshold: int = 1000
    blobs_threshold: int = 3000
    projects_threshold: int = 700

    # closure dynamics: accepted PRs resolve much faster than rejected ones
    accept_delay_mean_s: float = 2.0 * 86400
    reject_close_delay_mean_s: float = 12.0 * 86400
    open_fraction: float = 0.02

    comments_rate_accepted: float = 1.2
    comments_rate_rejected: float = 3.5
    review_rate_accepted: float = 0.5
    review_rate_rejected: float = 2.2

    # base-rate drift: logit offset switches at cutoff_frac of the time span
    drift_cutoff_frac: float | None = None
    drift_pre_logit: float = 0.0
    drift_post_logit: float = 0.0

    def __post_init__(self) -> None:
        if self.n_prs < self.n_repos:
            raise SynthSpecError(
                f"infeasible: {self.n_prs} PRs cannot cover {self.n_repos} repos"
            )
        if min(self.n_repos, self.n_authors, self.n_prs) < 1:
            raise SynthSpecError("n_repos, n_authors, n_prs must all be >= 1")
        if self.noise_scale < 0:
            raise SynthSpecError("noise_scale must be >= 0")
        if not 0.0 <= self.open_fraction < 1.0:
            raise SynthSpecError("open_fraction must be in [0, 1)")

    @property
    def end_time(self) -> int:
        return self.start_time + self.duration_s

    @property
    def collection_time(self) -> int:
        return self.end_time + self.collection_lag_s

    @property
    def drift_cutoff_time(self) -> int | None:
        if self.drift_cutoff_frac is None:
            return None
        return self.start_time + int(self.drift_cutoff_frac * self.duration_s)

    def informative_features(self) -> tuple[str, ...]:
        """Feature names carrying planted signal under this spec."""
        names: list[str] = ["age", "comments", "review_comments"]
        if self.sweet_spot_weight > 0:
            names += ["commits", "additions", "deletions", "changed_files"]
        if self.reputation_weight > 0:
            names += ["creator_total_commits", "creator_total_blobs", "creator_total_projects"]
        if self.skill_weight > 0:
            names += ["creator_accepted"]
        return tuple(names)

    def noise_features(self) -> tuple[str, ...]:
        """Features with no planted effect (repos are homogeneous, authorship is uniform)."""
        return ("repo_submitted", "repo_accepted", "creator_submitted")


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    records: list[PullRequestRecord]
    events: list[AuthorActivityEvent]
    truth: list[tuple[str, float, bool]]  # (pr_id, true probability, accepted)
    collection_time: int


def _author_events(spec: SyntheticSpec, rng: np.random.Generator) -> list[AuthorActivityEvent]:
    lo = spec.start_time - spec.activity_back_s
    hi = spec.end_time
    events: list[AuthorActivityEvent] = []
    prolific = rng.random(spec.n_authors) < 0.45
    high_blobs = rng.random(spec.n_authors) < 0.5
    broad = rng.random(spec.n_authors) < 0.5
    for a in range(spec.n_authors):
        author = f"author{a:04d}"
        n_events = int(rng.integers(1100, 3200)) if prolific[a] else int(rng.integers(5, 300))
        pool = int(rng.integers(900, 2600)) if broad[a] else int(rng.integers(2, 40))
        lam = 2.6 if high_blobs[a] else 0.25
        times = np.sort(rng.integers(lo, hi, size=n_events))
        projects = rng.integers(0, pool, size=n_events)
        blobs = 1 + rng.poisson(lam, size=n_events)
        for t, pj, b in zip(times.tolist(), projects.tolist(), blobs.tolist()):
            events.append(AuthorActivityEvent(author, int(t), f"p{pj}", int(b)))
    return events


def _in_zone(value: int, zone: tuple[int, int]) -> bool:
    return zone[0] <= value <= zone[1]


def generate(spec: SyntheticSpec) -> SyntheticCorpus:
    """Draw the full corpus; identical specs yield identical corpora."""
    events = _author_events(spec, _rng(spec.seed, "events"))
    store = ActivityStore.from_events(events)

    prs_rng = _rng(spec.seed, "prs")
    n = spec.n_prs
    created = np.sort(prs_rng.integers(spec.start_time, spec.end_time, size=n))
    authors = prs_rng.integers(0, spec.n_authors, size=n)
    repos = prs_rng.integers(0, spec.n_repos, size=n)
    repos[: spec.n_repos] = np.arange(spec.n_repos)  # every repo receives a PR

    commits = np.maximum(1, np.rint(prs_rng.lognormal(math.log(2.5), 0.9, size=n))).astype(int)
    additions = np.rint(prs_rng.lognormal(math.log(30.0), 1.5, size=n)).astype(int)
    deletions = np.rint(prs_rng.lognormal(math.log(70.0), 1.6, size=n)).astype(int)
    changed_files = np.maximum(1, np.rint(prs_rng.lognormal(math.log(7.0), 1.0, size=n))).astype(int)

    skill = _rng(spec.seed, "authors").random(spec.n_authors)

    noise = _rng(spec.seed, "noise").normal(0.0, spec.noise_scale, size=n) if spec.noise_scale else np.zeros(n)
    label_rng = _rng(spec.seed, "labels")
    delay_rng = _rng(spec.seed, "delays")
    comment_rng = _rng(spec.seed, "comments")

    records: list[PullRequestRecord] = []
    truth: list[tuple[str, float, bool]] = []
    per_repo_counter = [0] * spec.n_repos
    cutoff = spec.drift_cutoff_time
    for i in range(n):
        t = int(created[i])
        a = int(authors[i])
        r = int(repos[i])
        author_id = f"author{a:04d}"
        repo_id = f"org{r}/pkg{r}"
        per_repo_counter[r] += 1
        pr_id = f"{repo_id}#{per_repo_counter[r]}"

        snap = store.snapshot(author_id, t)
        zone_hits = (
            _in_zone(int(commits[i]), spec.commits_zone)
            + _in_zone(int(additions[i]), spec.additions_zone)
            + _in_zone(int(deletions[i]), spec.deletions_zone)
            + _in_zone(int(changed_files[i]), spec.changed_files_zone)
        )
        rep_hits = (
            (snap.total_commits >= spec.commits_threshold)
            + (snap.total_blobs >= spec.blobs_threshold)
            + (snap.total_projects >= spec.projects_threshold)
        )
        logit = (
            spec.base_logit
            + spec.sweet_spot_weight * (2.0 * zone_hits / 4.0 - 1.0)
            + spec.reputation_weight * (2.0 * rep_hits / 3.0 - 1.0)
            + spec.skill_weight * (2.0 * skill[a] - 1.0)
            + float(noise[i])
        )
        if cutoff is not None:
            logit += spec.drift_pre_logit if t < cutoff else spec.drift_post_logit
        p = 1.0 / (1.0 + math.exp(-logit))
        if spec.deterministic_labels:
            accepted = logit > 0
        else:
            accepted = bool(label_rng.random() < p)

        if accepted:
            delay = min(int(delay_rng.exponential(spec.accept_delay_mean_s)) + 60,
                        WINDOW_SECONDS - 3600)
            merged_at = t + delay
            closed_at = merged_at
        else:
            merged_at = None
            if label_rng.random() < spec.open_fraction:
                closed_at = None
            else:
                closed_at = t + int(delay_rng.exponential(spec.reject_close_delay_mean_s)) + 60

        if accepted:
            n_comments = int(comment_rng.poisson(spec.comments_rate_accepted))
            n_review = int(comment_rng.poisson(spec.review_rate_accepted))
        else:
            n_comments = int(comment_rng.poisson(spec.comments_rate_rejected))
            n_review = int(comment_rng.poisson(spec.review_rate_rejected))

        records.append(
            PullRequestRecord(
                pr_id=pr_id,
                repo_id=repo_id,
                author_id=author_id,
                created_at=t,
                closed_at=closed_at,
                merged_at=merged_at,
                commits=int(commits[i]),
                changed_files=int(changed_files[i]),
                additions=int(additions[i]),
                deletions=int(deletions[i]),
                comments=n_comments,
                review_comments=n_review,
            )
        )
        truth.append((pr_id, p, accepted))

    return SyntheticCorpus(
        spec=spec,
        records=records,
        events=events,
        truth=truth,
        collection_time=spec.collection_time,
    )


def write_corpus(corpus: SyntheticCorpus, out_dir: str | Path) -> dict:
    """Write store NDJSON + manifest + activity CSV + truth CSV; returns paths."""
    out_dir = Path(out_dir)
    store_dir = out_dir / "store"
    store_dir.mkdir(parents=True, exist_ok=True)
    n_records = persist(corpus.records, store_dir)

    manifest = Manifest()
    for r in range(corpus.spec.n_repos):
        repo = RepoRef(owner=f"org{r}", name=f"pkg{r}")
        manifest.set_fetched_through(repo, corpus.collection_time)
        manifest.add_packages(repo, [f"pkg{r}"])
    manifest.save(store_dir)

    activity_path = out_dir / "activity.csv"
    n_events = write_events_csv(corpus.events, activity_path)

    truth_path = out_dir / "truth.csv"
    with truth_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pr_id", "true_probability", "accepted"])
        for pr_id, p, accepted in corpus.truth:
            writer.writerow([pr_id, repr(p), int(accepted)])

    return {
        "store": str(store_dir),
        "activity": str(activity_path),
        "truth": str(truth_path),
        "records": n_records,
        "events": n_events,
        "collection_time": corpus.collection_time,
    }
