"""Command-line pipeline: ingest -> features -> tune/train -> evaluate -> rank/explain.

Configuration comes from an optional JSON file plus flags (flags win). All
randomness flows from the single master seed; each stage derives its own
stream by hashing a stage label, so stages can be re-run independently and
identical (inputs, seed) always produce byte-identical artifacts. Every JSON
artifact embeds the resolved config hash and the master seed.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Failures
print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import activity, features, forest, ingest, metrics, synth
from .core import IntegrityError, RecordError

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out": "artifacts",
    "store": "data/store",
    "activity": "data/activity.csv",
    "mode": "FULL",
    "as_of": None,
    "threshold": 0.5,
    "forest": {"ntree": 200, "mtry": 4, "min_node_size": 1, "max_depth": None},
    "grid": {"ntree": [100], "mtry": [2, 4, 6]},
    "folds": 10,
    "split": {"kind": "RANDOM", "train_fraction": 0.7},
    "ingest": {
        "repos": [],
        "fixtures": None,
        "base_url": "https://api.github.com",
        "per_page": 100,
        "token_env": ingest.DEFAULT_TOKEN_ENV,
        "as_of": None,
    },
    "synth": {},
}


class UsageError(ValueError):
    pass


def stage_seed(master: int, label: str) -> int:
    """Stage-specific 64-bit seed derived from the master seed by labeled hashing."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    path = getattr(args, "config", None)
    if path:
        try:
            file_cfg = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = _deep_merge(cfg, file_cfg)
    # flags win over the file
    for key in ("seed", "out", "store", "activity", "mode", "as_of", "threshold"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "fixtures", None) is not None:
        cfg["ingest"]["fixtures"] = args.fixtures
    if getattr(args, "repo", None):
        repos = []
        for spec in args.repo:
            if "/" not in spec:
                raise UsageError(f"--repo wants owner/name, got {spec!r}")
            owner, name = spec.split("/", 1)
            repos.append({"owner": owner, "name": name})
        cfg["ingest"]["repos"] = repos
    if cfg["mode"] not in ("FULL", "SUBMISSION_TIME"):
        raise UsageError(f"mode must be FULL or SUBMISSION_TIME, got {cfg['mode']!r}")
    cfg["seed"] = int(cfg["seed"])
    return cfg


def _meta(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"]}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _split_plan(cfg: dict) -> metrics.SplitPlan:
    plan_cfg = cfg["split"]
    kind = plan_cfg.get("kind", "RANDOM")
    if kind == "RANDOM":
        return metrics.SplitPlan(
            "RANDOM",
            train_fraction=float(plan_cfg.get("train_fraction", 0.7)),
            seed=stage_seed(cfg["seed"], "split"),
        )
    if kind == "TEMPORAL":
        if plan_cfg.get("cutoff") is None:
            raise UsageError("TEMPORAL split needs split.cutoff in the config")
        return metrics.SplitPlan("TEMPORAL", cutoff=int(plan_cfg["cutoff"]))
    raise UsageError(f"unknown split kind {kind!r}")


def _forest_params(cfg: dict, seed_label: str) -> forest.ForestParams:
    f = cfg["forest"]
    return forest.ForestParams(
        ntree=int(f["ntree"]),
        mtry=int(f["mtry"]),
        min_node_size=int(f.get("min_node_size", 1)),
        max_depth=None if f.get("max_depth") is None else int(f["max_depth"]),
        seed=stage_seed(cfg["seed"], seed_label),
    )


def _resolve_as_of(cfg: dict, store_dir: Path) -> int:
    if cfg.get("as_of") is not None:
        return int(cfg["as_of"])
    manifest = ingest.Manifest.load(store_dir)
    times = [e.get("fetched_through") for e in manifest.repos.values()
             if e.get("fetched_through") is not None]
    if not times:
        raise UsageError("no as_of given and the store manifest has no fetched_through")
    return max(int(t) for t in times)


def _load_matrix(cfg: dict) -> tuple[features.FeatureSchema, np.ndarray, np.ndarray, list[dict]]:
    out = Path(cfg["out"])
    matrix_path = out / "features.csv"
    schema_path = out / "schema.json"
    meta_path = out / "features.meta.csv"
    for p in (matrix_path, schema_path, meta_path):
        if not p.exists():
            raise FileNotFoundError(f"missing upstream artifact {p}; run `features` first")
    schema = features.FeatureSchema.from_json_dict(json.loads(schema_path.read_text())["schema"])
    columns, X, y = features.import_matrix(matrix_path)
    if tuple(columns) != schema.columns:
        raise forest.SchemaMismatchError("features.csv columns do not match schema.json")
    with meta_path.open(newline="") as fh:
        meta_rows = list(csv.DictReader(fh))
    if len(meta_rows) != X.shape[0]:
        raise IntegrityError("features.meta.csv row count differs from features.csv")
    return schema, X, y, meta_rows


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: dict, args: argparse.Namespace) -> int:
    synth_cfg = dict(cfg.get("synth") or {})
    synth_cfg.setdefault("seed", stage_seed(cfg["seed"], "synth"))
    try:
        spec = synth.SyntheticSpec(**synth_cfg)
    except TypeError as exc:
        raise UsageError(f"bad synth config: {exc}")
    corpus = synth.generate(spec)
    out = synth.write_corpus(corpus, Path(cfg["out"]))
    accepted = sum(1 for _, _, a in corpus.truth if a)
    _emit({**out, "acceptance_rate": accepted / len(corpus.truth), **_meta(cfg)})
    return 0


def cmd_ingest(cfg: dict, args: argparse.Namespace) -> int:
    icfg = cfg["ingest"]
    repos = [ingest.RepoRef(r["owner"], r["name"]) for r in icfg.get("repos", [])]
    if not repos:
        raise UsageError("no repos configured: pass --repo owner/name or set ingest.repos")
    api = ingest.ApiConfig(
        base_url=icfg.get("base_url", "https://api.github.com"),
        per_page=int(icfg.get("per_page", 100)),
        token_env=icfg.get("token_env", ingest.DEFAULT_TOKEN_ENV),
    )
    if icfg.get("fixtures"):
        transport = ingest.FixtureTransport(icfg["fixtures"])
    else:
        transport = ingest.LiveTransport(api)
    store_dir = Path(cfg["store"])
    store_dir.mkdir(parents=True, exist_ok=True)
    manifest = ingest.Manifest.load(store_dir)
    as_of = icfg.get("as_of")
    as_of = int(time.time()) if as_of is None else int(as_of)
    summary = []
    for repo in repos:
        stats = ingest.ingest_repo(transport, api, repo, store_dir, manifest, as_of=as_of)
        summary.append(
            {
                "repo": stats.repo_id,
                "pages": stats.pages,
                "issues": stats.issues,
                "pull_requests": stats.pull_requests,
                "records_persisted": stats.records_persisted,
            }
        )
    _emit({"repos": summary, **_meta(cfg)})
    return 0


def cmd_features(cfg: dict, args: argparse.Namespace) -> int:
    store_dir = Path(cfg["store"])
    records = ingest.load_store(store_dir)
    if not records:
        raise FileNotFoundError(f"no PR records under {store_dir}")
    store = activity.ActivityStore.load(cfg["activity"])
    as_of = _resolve_as_of(cfg, store_dir)
    schema = features.FeatureSchema.for_mode(cfg["mode"])
    vectors = features.build_dataset(records, store, schema, as_of)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = features.export_matrix(vectors, schema, out / "features.csv")
    ordered = sorted(vectors, key=lambda v: (v.created_at, v.pr_id))
    with (out / "features.meta.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pr_id", "repo_id", "created_at", "label"])
        for v in ordered:
            writer.writerow([v.pr_id, v.repo_id, v.created_at, int(bool(v.label))])
    _write_json(out / "schema.json", {"schema": schema.to_json_dict(),
                                      "as_of": as_of, **_meta(cfg)})
    _emit({"rows": rows, "excluded": len(records) - rows, "mode": schema.mode,
           "as_of": as_of, **_meta(cfg)})
    return 0


def cmd_tune(cfg: dict, args: argparse.Namespace) -> int:
    schema, X, y, _ = _load_matrix(cfg)
    grid_cfg = cfg["grid"]
    if "points" in grid_cfg:
        grid = [(int(nt), int(mt)) for nt, mt in grid_cfg["points"]]
    else:
        grid = [(int(nt), int(mt)) for nt in grid_cfg["ntree"] for mt in grid_cfg["mtry"]]
    fcfg = cfg["forest"]
    best, table = forest.tune_table(
        X, y, grid,
        folds=int(cfg.get("folds", 10)),
        seed=stage_seed(cfg["seed"], "tune"),
        min_node_size=int(fcfg.get("min_node_size", 1)),
        max_depth=None if fcfg.get("max_depth") is None else int(fcfg["max_depth"]),
    )
    out = Path(cfg["out"])
    _write_json(out / "params.json", {"best": {"ntree": best.ntree, "mtry": best.mtry,
                                               "min_node_size": best.min_node_size,
                                               "max_depth": best.max_depth},
                                      "grid": table, "folds": int(cfg.get("folds", 10)),
                                      **_meta(cfg)})
    _emit({"ntree": best.ntree, "mtry": best.mtry, **_meta(cfg)})
    return 0


def cmd_train(cfg: dict, args: argparse.Namespace) -> int:
    schema, X, y, meta_rows = _load_matrix(cfg)
    params = _forest_params(cfg, "train")
    if getattr(args, "params", None):
        doc = json.loads(Path(args.params).read_text())["best"]
        params = forest.ForestParams(
            ntree=int(doc["ntree"]), mtry=int(doc["mtry"]),
            min_node_size=int(doc["min_node_size"]),
            max_depth=None if doc.get("max_depth") is None else int(doc["max_depth"]),
            seed=stage_seed(cfg["seed"], "train"),
        )
    plan = _split_plan(cfg)
    created = [int(r["created_at"]) for r in meta_rows]
    train_idx, _ = metrics.split(created, plan)
    model = forest.fit(X[train_idx], y[train_idx], params, schema)
    out = Path(cfg["out"])
    _write_json(out / "model.json", {"model": model.to_json_dict(),
                                     "split": plan.to_json_dict(),
                                     "train_rows": int(train_idx.size),
                                     **_meta(cfg)})
    _emit({"trees": params.ntree, "train_rows": int(train_idx.size),
           "fingerprint": model.fingerprint, **_meta(cfg)})
    return 0


def cmd_evaluate(cfg: dict, args: argparse.Namespace) -> int:
    schema, X, y, meta_rows = _load_matrix(cfg)
    out = Path(cfg["out"])
    model_path = out / "model.json"
    if not model_path.exists():
        raise FileNotFoundError(f"missing upstream artifact {model_path}; run `train` first")
    doc = json.loads(model_path.read_text())
    model = forest.ForestModel.from_json_dict(doc["model"])
    if model.schema.columns != schema.columns:
        raise forest.SchemaMismatchError("model schema does not match the feature matrix")
    plan = metrics.SplitPlan.from_json_dict(doc["split"])
    created = [int(r["created_at"]) for r in meta_rows]
    train_idx, test_idx = metrics.split(created, plan)
    scores = forest.predict_proba_matrix(model, X[test_idx])
    report = metrics.evaluate(scores, y[test_idx], threshold=float(cfg["threshold"]))
    payload = {
        "report": report.to_json_dict(),
        "split": plan.to_json_dict(),
        "train_rows": int(train_idx.size),
        "test_rows": int(test_idx.size),
        "train_positive_rate": float(np.mean(y[train_idx])),
        "test_positive_rate": float(np.mean(y[test_idx])),
        **_meta(cfg),
    }
    _write_json(out / "report.json", payload)
    _emit({"auc_roc": report.auc_roc, "accuracy": report.accuracy, **_meta(cfg)})
    return 0


def cmd_rank(cfg: dict, args: argparse.Namespace) -> int:
    out = Path(cfg["out"])
    model_path = Path(getattr(args, "model", None) or out / "model.json")
    if not model_path.exists():
        raise FileNotFoundError(f"missing model artifact {model_path}")
    model = forest.ForestModel.from_json_dict(json.loads(model_path.read_text())["model"])
    store_dir = Path(cfg["store"])
    records = ingest.load_store(store_dir)
    act = activity.ActivityStore.load(cfg["activity"])
    as_of = _resolve_as_of(cfg, store_dir)
    schema = model.schema
    vectors = features.build_dataset(records, act, schema, as_of, include_unlabelable=True)
    open_ids = {r.pr_id for r in records if r.closed_at is None and r.created_at <= as_of}
    open_vectors = [v for v in vectors if v.pr_id in open_ids]
    out.mkdir(parents=True, exist_ok=True)
    rank_path = out / "rank.csv"
    with rank_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pr_id", "probability"])
        if open_vectors:
            X = np.array([v.values(schema.columns) for v in open_vectors])
            probs = forest.predict_proba_matrix(model, X)
            order = sorted(range(len(open_vectors)),
                           key=lambda i: (-probs[i], open_vectors[i].pr_id))
            for i in order:
                writer.writerow([open_vectors[i].pr_id, repr(float(probs[i]))])
    _emit({"open_prs": len(open_vectors), "as_of": as_of, **_meta(cfg)})
    return 0


def cmd_explain(cfg: dict, args: argparse.Namespace) -> int:
    schema, X, y, _ = _load_matrix(cfg)
    out = Path(cfg["out"])
    model_path = out / "model.json"
    if not model_path.exists():
        raise FileNotFoundError(f"missing upstream artifact {model_path}; run `train` first")
    model = forest.ForestModel.from_json_dict(json.loads(model_path.read_text())["model"])
    if model.schema.columns != schema.columns:
        raise forest.SchemaMismatchError("model schema does not match the feature matrix")
    wanted = args.features.split(",") if getattr(args, "features", None) else list(schema.columns)
    for name in wanted:
        if name not in schema.columns:
            raise UsageError(f"unknown feature {name!r}")
    pd_dir = out / "pd"
    pd_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in wanted:
        col = X[:, schema.columns.index(name)]
        grid = np.unique(np.quantile(col, np.linspace(0.0, 1.0, 25)))
        curve = forest.partial_dependence(model, X, name, grid.tolist())
        path = pd_dir / f"{name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grid_value", "contribution"])
            for g, c in zip(curve.grid, curve.contribution):
                writer.writerow([repr(g), repr(c)])
        written.append(str(path))
    _emit({"curves": written, **_meta(cfg)})
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "rank": cmd_rank,
    "explain": cmd_explain,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prtriage",
        description="Predict whether pull requests will be accepted within 30 days.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (flags win over config)")
        p.add_argument("--out", help="artifact output directory")
        p.add_argument("--store", help="PR store directory")
        p.add_argument("--activity", help="author activity CSV (optionally .gz)")
        p.add_argument("--mode", choices=["FULL", "SUBMISSION_TIME"],
                       help="feature schema mode")
        p.add_argument("--as-of", dest="as_of", type=int,
                       help="data-collection time (UTC seconds)")
        p.add_argument("--threshold", type=float, help="classification threshold")

    p = sub.add_parser("synth", help="generate a synthetic corpus in store format")
    common(p)
    p = sub.add_parser("ingest", help="fetch PR data into the NDJSON store")
    common(p)
    p.add_argument("--fixtures", help="replay recorded fixtures instead of live HTTP")
    p.add_argument("--repo", action="append", help="owner/name (repeatable)")
    p = sub.add_parser("features", help="build the leak-free feature matrix")
    common(p)
    p = sub.add_parser("tune", help="grid-search ntree/mtry by cross-validated accuracy")
    common(p)
    p = sub.add_parser("train", help="fit the forest on the train side of the split")
    common(p)
    p.add_argument("--params", help="params.json from `tune` to override forest config")
    p = sub.add_parser("evaluate", help="score the held-out side and write the report")
    common(p)
    p = sub.add_parser("rank", help="rank open PRs by acceptance probability")
    common(p)
    p.add_argument("--model", help="model.json path (default <out>/model.json)")
    p = sub.add_parser("explain", help="export partial-dependence curves as CSV")
    common(p)
    p.add_argument("--features", help="comma-separated feature names (default: all)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, synth.SynthSpecError, ingest.AuthError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except (ingest.IngestError, IntegrityError, RecordError, OSError, ValueError,
            KeyError, forest.OobUnavailableError, metrics.UndefinedMetricError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
