"""``waldo``: simulate, train, explain, report and self-check from one config file.

Exit codes: 0 success, 1 other package error, 2 config error, 3 data error,
4 failed check.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import explain as ex
from .config import RunConfig, apply_overrides, parse_classes, resolve_output_dir
from .datagen import file_digest, generate_dataset, read_csv, write_csv
from .exceptions import CheckFailure, ConfigError, DataError, WaldoError
from .forest import RandomForestClassifier
from .model_selection import cross_validate, make_pipeline, summary
from .oracle import run_all
from .preprocessing import Standardizer
from .report import build_report

LOCK_NAME = ".waldo.lock"
MODEL_FORMAT = "waldo-model"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write_json(path: Path, obj) -> str:
    data = _dumps(obj).encode()
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


@contextmanager
def output_lock(outdir: Path):
    """Refuse a second concurrent writer on the same output directory."""
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        fd = os.open(outdir / LOCK_NAME, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise WaldoError(f"{outdir} is locked by another run ({LOCK_NAME})") from None
    except OSError as exc:
        raise ConfigError(f"cannot write to {outdir}: {exc}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield outdir
    finally:
        (outdir / LOCK_NAME).unlink(missing_ok=True)


def _update_manifest(outdir: Path, cfg: RunConfig, **entries) -> None:
    path = outdir / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest.setdefault("digests", {})
    for key, value in entries.items():
        if key.endswith("_digest"):
            manifest["digests"][key[:-len("_digest")]] = value
        else:
            manifest[key] = value
    manifest["seed"] = cfg.seed
    manifest["config"] = cfg.to_dict()
    _write_json(path, manifest)


def _forest(cfg: RunConfig) -> RandomForestClassifier:
    f = cfg.forest
    return RandomForestClassifier(n_estimators=f.n_trees, max_features=f.max_features,
                                  max_depth=f.max_depth, min_samples_leaf=f.min_samples_leaf,
                                  random_state=cfg.seed, n_jobs=f.n_jobs)


def _load_dataset(cfg: RunConfig, outdir: Path):
    path = outdir / "dataset.csv"
    if not path.exists():
        raise DataError(f"{path} not found; run `waldo simulate` first")
    return read_csv(path, cfg.grid)


def simulate(cfg: RunConfig, outdir: Path) -> dict:
    matrix = generate_dataset(cfg.class_plan(), cfg.grid, cfg.board, cfg.seed, cfg.census)
    digest = write_csv(matrix, outdir / "dataset.csv")
    counts = {str(k): v for k, v in sorted(matrix.class_counts().items())}
    _update_manifest(outdir, cfg, dataset_digest=digest,
                     dataset={"rows": int(matrix.rows.shape[0]),
                              "features": int(matrix.rows.shape[1]), "class_counts": counts})
    return {"rows": int(matrix.rows.shape[0]), "digest": digest}


def save_model(pipeline, path: Path) -> str:
    return _write_json(path, {"format": MODEL_FORMAT, "version": 1,
                              "standardizer": pipeline[0].to_dict(),
                              "forest": pipeline[-1].to_dict()})


def load_model(path: Path):
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"{path} not found; run `waldo train` first") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    if d.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a {MODEL_FORMAT} file")
    return Standardizer.from_dict(d["standardizer"]), RandomForestClassifier.from_dict(d["forest"])


def train(cfg: RunConfig, outdir: Path) -> dict:
    data = _load_dataset(cfg, outdir)
    folds = cross_validate(data.rows, data.labels, _forest(cfg), cfg.folds, cfg.seed)
    classes = sorted(int(c) for c in np.unique(data.labels))
    metrics = {"classes": classes, "folds": [m.to_dict() for m in folds],
               "summary": summary(folds)}
    metrics_digest = _write_json(outdir / "metrics.json", metrics)
    final = make_pipeline(_forest(cfg)).fit(data.rows, data.labels)
    model_digest = save_model(final, outdir / "model.json")
    _update_manifest(outdir, cfg, metrics_digest=metrics_digest, model_digest=model_digest)
    return metrics


def explain_samples(labels, classes, per_class: int, seed: int) -> np.ndarray:
    """Row indices: up to ``per_class`` random rows of each class, sorted within class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 0xE5])
    picks = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        if not members.size:
            raise DataError(f"class {c} has no rows to explain")
        picks.append(np.sort(rng.choice(members, min(per_class, members.size), replace=False)))
    return np.concatenate(picks)


def explain(cfg: RunConfig, outdir: Path) -> dict:
    data = _load_dataset(cfg, outdir)
    std, forest = load_model(outdir / "model.json")
    if std.n_features_in_ != data.rows.shape[1]:
        raise DataError("model and dataset disagree on the number of features")
    idx = explain_samples(data.labels, forest.classes_, cfg.explain.samples_per_class, cfg.seed)
    shap = ex.forest_shap(forest, std.transform(data.rows[idx]), idx, data.labels[idx])
    ranking = ex.summarize(shap, cfg.grid, cfg.explain.top)
    ex.write_summary_csv(ranking, outdir / "shap_summary.csv")
    ex.write_summary_csv(ranking, outdir / "shap_ranking.csv", top=cfg.explain.top)
    for old in outdir.glob("beeswarm_*.csv"):
        old.unlink()
    for cid in ranking:
        ex.write_beeswarm_csv(ex.export_beeswarm(shap, cfg.grid, cid, cfg.explain.beeswarm_top),
                              outdir / f"beeswarm_{cid}.csv")
    local = float(np.max(np.abs(shap.output() - forest.predict_proba(shap.features))))
    conc = ex.concordance(ranking, data.rows, data.labels) if 0 in ranking else {}
    result = {"local_accuracy_max_error": local,
              "concordant_classes": sum(v["concordant"] for v in conc.values()),
              "tampered_classes": len(conc),
              "classes": {str(k): v for k, v in conc.items()}}
    _write_json(outdir / "concordance.json", result)
    _update_manifest(outdir, cfg, shap_summary_digest=file_digest(outdir / "shap_summary.csv"))
    return result


def report(cfg: RunConfig, outdir: Path) -> Path:
    data = _load_dataset(cfg, outdir)
    path = build_report(outdir, cfg.grid, data.rows, data.labels)
    _update_manifest(outdir, cfg, report_digest=file_digest(path))
    return path


def oracle_check(shap_cases: int = 200) -> int:
    results = run_all(shap_cases)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CheckFailure(f"{len(failed)} battery(ies) failed: {', '.join(failed)}")
    return sum(r.cases for r in results)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides WALDO_OUT)")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--paper-scale", action="store_true",
                        help="5000 points, 1500/750 traces, 200 trees")
    common.add_argument("--folds", type=int, metavar="K")
    common.add_argument("--trees", type=int, metavar="N")
    common.add_argument("--points", type=int, metavar="N")
    common.add_argument("--classes", metavar="LIST", help='e.g. "0,3,5-7"')

    p = argparse.ArgumentParser(prog="waldo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "generate dataset.csv"),
                       ("train", "cross-validate and fit the final model"),
                       ("explain", "SHAP summaries and beeswarm exports"),
                       ("report", "render report.md and SVG figures"),
                       ("run-all", "simulate, train, explain and report")):
        sub.add_parser(name, parents=[common], help=text)
    oc = sub.add_parser("oracle-check", help="run the built-in verification batteries")
    oc.add_argument("--shap-cases", type=int, default=200)
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    classes = parse_classes(args.classes) if args.classes else None
    return apply_overrides(cfg, seed=args.seed, full=args.paper_scale, folds=args.folds,
                           trees=args.trees, points=args.points, classes=classes)


STAGES = {"simulate": simulate, "train": train, "explain": explain, "report": report}


def run(args) -> int:
    if args.command == "oracle-check":
        n = oracle_check(args.shap_cases)
        print(f"all checks passed ({n} cases)")
        return 0
    cfg = load_config(args)
    outdir = resolve_output_dir(cfg, args.out)
    stages = list(STAGES) if args.command == "run-all" else [args.command]
    with output_lock(outdir):
        cfg.dump(outdir / "config.toml")
        for name in stages:
            t0 = time.perf_counter()
            result = STAGES[name](cfg, outdir)
            print(f"{name}: {_describe(name, result)} ({time.perf_counter() - t0:.1f} s)")
    return 0


def _describe(name, result) -> str:
    if name == "simulate":
        return f"{result['rows']} rows, sha256 {result['digest'][:12]}"
    if name == "train":
        s = result["summary"]
        return f"mean accuracy {s['mean_accuracy']:.4f}, spread {s['accuracy_spread']:.4f}"
    if name == "explain":
        return (f"concordance {result['concordant_classes']}/{result['tampered_classes']}, "
                f"local accuracy error {result['local_accuracy_max_error']:.2e}")
    return str(result)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except WaldoError as exc:
        print(f"waldo: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
