"""Command-line entry points: ``spadegnn score | run | sweep``.

Exit codes: 1 usage error, 2 data/I-O error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __version__
from .data import DataError, Dataset, load_cora_dir, load_generic, make_split
from .gcn import GcnHyperparams, GcnModel, TrainingError
from .graph import GraphError, SparseGraph
from .pipeline import PipelineConfig, PipelineError, StageOne, run_robust_pipeline, run_stage_one, write_predictions_csv
from .spade import SpadeError, SpadeScores, write_scores_csv
from .spectral import EigenSubspace, SpectralError

log = logging.getLogger("spadegnn")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
TIMING_KEYS = ("timestamps", "timing")
DEFAULT_CORA_DIR = "data/cora"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- datasets

def open_dataset(source: str, row_normalize: bool = True) -> Dataset:
    """``cora``, ``cora:<dir>`` or a path to a generic JSON dataset."""
    if source == "cora":
        return load_cora_dir(os.environ.get("SPADE_CORA_DIR", DEFAULT_CORA_DIR), row_normalize)
    if source.startswith("cora:"):
        return load_cora_dir(source[len("cora:"):], row_normalize)
    return load_generic(source, row_normalize)


def parse_fractions(text: str) -> list:
    """Comma list of ``orig`` and fractions; ``a:b:step`` expands to an inclusive range."""
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise UsageError("empty fraction list")
    out = []
    for item in items:
        if item.lower() == "orig":
            out.append("orig")
            continue
        if ":" in item:
            try:
                a, b, step = (float(v) for v in item.split(":"))
            except ValueError:
                raise UsageError(f"bad range {item!r}; expected start:stop:step") from None
            if step <= 0:
                raise UsageError("range step must be positive")
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            out.extend(round(a + i * step, 10) for i in range(n))
            continue
        try:
            f = float(item.rstrip("%")) / (100.0 if item.endswith("%") else 1.0)
        except ValueError:
            raise UsageError(f"bad fraction {item!r}") from None
        out.append(f)
    for f in out:
        if f != "orig" and not 0.0 < f <= 1.0:
            raise UsageError(f"fraction {f} outside (0, 1]")
    return out


def fraction_label(f) -> str:
    return "Orig" if f == "orig" else f"{f * 100:g}%"


# ------------------------------------------------------------------ config

def config_from_args(args) -> PipelineConfig:
    hp = GcnHyperparams(
        hidden=args.hidden,
        lr=args.lr,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        epochs=args.epochs,
        seed=args.seed,
    )
    return PipelineConfig(
        robust_fraction=getattr(args, "fraction", None) or 0.40,
        knn_k=args.knn_k,
        knn_metric=args.knn_metric,
        spade_k=args.spade_k,
        subgraph_space=args.robust_subgraph_space,
        centroid_space=args.centroid_space,
        g_input_source=args.g_input,
        gcn=hp,
        seed=args.seed,
    )


def stage_one_key(ds: Dataset, cfg: PipelineConfig, split_desc: dict) -> str:
    """Cache key: everything stage one depends on (not the robust fraction)."""
    relevant = {
        "dataset": ds.fingerprint(),
        "gcn": asdict(cfg.gcn_hyperparams()),
        "seed": cfg.seed,
        "knn_k": cfg.knn_k,
        "knn_metric": cfg.knn_metric,
        "spade_k": cfg.resolved_spade_k(ds.num_classes),
        "g_input_source": cfg.g_input_source,
        "propagation": cfg.propagation,
        "spade_weighted": cfg.spade_weighted,
        "pencil_regularization": cfg.pencil_regularization,
        "split": split_desc,
        "version": __version__,
    }
    return hashlib.sha256(json.dumps(relevant, sort_keys=True).encode()).hexdigest()[:32]


def cache_dir() -> Path:
    return Path(os.environ.get("SPADE_CACHE_DIR", Path.home() / ".cache" / "spadegnn"))


def _graph_arrays(prefix: str, g: SparseGraph) -> dict:
    a = g.adjacency
    return {f"{prefix}_data": a.data, f"{prefix}_indices": a.indices, f"{prefix}_indptr": a.indptr}


def _graph_from(z, prefix: str, n: int) -> SparseGraph:
    a = sp.csr_matrix((z[f"{prefix}_data"], z[f"{prefix}_indices"], z[f"{prefix}_indptr"]), shape=(n, n))
    return SparseGraph(a)


def save_stage_one(s1: StageOne, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".{os.getpid()}.tmp.npz")
    np.savez(
        tmp,
        w0=s1.baseline_model.w0,
        w1=s1.baseline_model.w1,
        hp=json.dumps(asdict(s1.baseline_model.hp)),
        baseline_pred=s1.baseline_pred,
        embeddings=s1.embeddings,
        eigenvalues=s1.eigen.eigenvalues,
        eigenvectors=s1.eigen.eigenvectors,
        v_k=s1.eigen.v_k_matrix,
        residuals=s1.eigen.residuals,
        scores=s1.scores.scores,
        ranking=s1.scores.ranking,
        isolated=s1.scores.isolated,
        **_graph_arrays("g_in", s1.g_input),
        **_graph_arrays("g_out", s1.g_output),
    )
    os.replace(tmp, path)


def load_stage_one(path: Path) -> StageOne:
    with np.load(path, allow_pickle=False) as z:
        n = len(z["scores"])
        model = GcnModel(z["w0"], z["w1"], GcnHyperparams(**json.loads(str(z["hp"]))))
        eigen = EigenSubspace(z["eigenvalues"], z["eigenvectors"], z["v_k"], z["residuals"])
        scores = SpadeScores(z["scores"], z["ranking"], z["isolated"])
        return StageOne(
            _graph_from(z, "g_in", n), model, z["baseline_pred"], z["embeddings"],
            _graph_from(z, "g_out", n), eigen, scores, {},
        )


def get_stage_one(ds: Dataset, split, cfg: PipelineConfig, use_cache: bool) -> StageOne:
    key = stage_one_key(ds, cfg, split.describe())
    path = cache_dir() / f"stage1-{key}.npz"
    if use_cache and path.is_file():
        log.info("stage one: cache hit %s", path)
        return load_stage_one(path)
    s1 = run_stage_one(ds, split, cfg)
    if use_cache:
        try:
            save_stage_one(s1, path)
        except OSError as exc:
            log.warning("could not write stage-one cache %s: %s", path, exc)
    return s1


# ---------------------------------------------------------------- manifest

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def make_manifest(command: str, args, ds: Dataset, cfg: PipelineConfig, split, started: str) -> dict:
    return {
        "command": command,
        "dataset": {"source": args.dataset, "name": ds.name, "fingerprint": ds.fingerprint(),
                    "n": ds.n, "d": ds.d, "c": ds.num_classes, "row_normalized": ds.row_normalized},
        "config": cfg.to_dict(),
        "split": split.describe(),
        "seed": cfg.seed,
        "tool_version": __version__,
        "timestamps": {"started": started, "finished": _now()},
    }


def _json_safe(obj):
    """NaN (an accuracy over zero nodes) becomes null."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def write_json(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def strip_timing(obj):
    """Copy of a report with timing/timestamp fields removed (for reproducibility checks)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def format_table(rows: list[dict]) -> str:
    head = ["Robust Node Selection Percentage", "Accuracy", "Robust-only", "Rest", "Baseline@robust"]
    body = []
    for r in rows:
        def f(key):
            v = r.get(key)
            return "-" if v is None else f"{v:.4f}"
        body.append([r["label"], f"{r['accuracy']:.4f}", f("robust_accuracy"), f("rest_accuracy"),
                     f("baseline_robust_accuracy")])
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines)


# ---------------------------------------------------------------- commands

def _prepare(args):
    ds = open_dataset(args.dataset, row_normalize=not args.no_row_normalize)
    split = make_split(ds, args.per_class_train, args.seed)
    return ds, split


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_score(args) -> int:
    started = _now()
    ds, split = _prepare(args)
    cfg = config_from_args(args)
    s1 = get_stage_one(ds, split, cfg, not args.no_cache)
    out = _out_dir(args)
    write_scores_csv(s1.scores, out / "scores.csv")
    manifest = make_manifest("score", args, ds, cfg, split, started)
    write_json({
        "manifest": manifest,
        "outputs": ["scores.csv"],
        "eigenvalues": [float(v) for v in s1.eigen.eigenvalues],
        "n_isolated": int(s1.scores.isolated.sum()),
        "timing": s1.timing,
    }, out / "scores.manifest.json")
    print(f"wrote {ds.n} scores to {out / 'scores.csv'}")
    return 0


def _run_fractions(args, fractions: list, command: str) -> int:
    started = _now()
    ds, split = _prepare(args)
    base_cfg = config_from_args(args)
    s1 = get_stage_one(ds, split, base_cfg, not args.no_cache)
    out = _out_dir(args)

    rows, reports, outputs, timing = [], {}, [], {"stage_one": s1.timing}
    if "orig" in fractions or command == "sweep":
        test = split.test_ids
        acc = float(np.mean(s1.baseline_pred[test] == ds.labels[test]))
        rows.append({"label": "Orig", "fraction": None, "accuracy": acc})
    for f in fractions:
        if f == "orig":
            continue
        cfg = replace(base_cfg, robust_fraction=f)
        rep = run_robust_pipeline(ds, split, cfg, stage_one=s1)
        label = fraction_label(f)
        rows.append(_json_safe({
            "label": label,
            "fraction": f,
            "accuracy": rep.combined_accuracy,
            "robust_accuracy": rep.robust_accuracy,
            "rest_accuracy": rep.rest_accuracy,
            "baseline_robust_accuracy": rep.baseline_robust_accuracy,
        }))
        reports[label] = rep.summary()
        timing[label] = {k: v for k, v in rep.timing.items() if k not in s1.timing}
        name = f"predictions_{round(f * 100):03d}.csv"
        write_predictions_csv(rep, ds, split, s1.scores, out / name)
        outputs.append(name)

    print(format_table(rows))
    manifest = make_manifest(command, args, ds, base_cfg, split, started)
    manifest["fractions"] = list(fractions)
    write_json({"manifest": manifest, "outputs": outputs, "rows": rows, "reports": reports,
                "timing": timing}, out / "report.json")
    return 0


def cmd_run(args) -> int:
    fractions = parse_fractions(args.fractions) if args.fractions else ["orig", args.fraction or 0.40]
    return _run_fractions(args, fractions, "run")


def cmd_sweep(args) -> int:
    fractions = [f for f in parse_fractions(args.fractions) if f != "orig"]
    if not fractions:
        raise UsageError("sweep needs at least one robust fraction")
    return _run_fractions(args, fractions, "sweep")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--dataset", default="cora", help="cora | cora:<dir> | <generic.json>")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--per-class-train", type=int, default=20)
    common.add_argument("--knn-k", type=int, default=10)
    common.add_argument("--knn-metric", choices=["euclidean", "cosine"], default="euclidean")
    common.add_argument("--spade-k", type=int, default=None, help="eigenpairs to keep (default: #classes)")
    common.add_argument("--g-input", choices=["given_graph", "knn_features"], default="given_graph")
    common.add_argument("--robust-subgraph-space", choices=["raw_features", "embeddings"], default="raw_features")
    common.add_argument("--centroid-space", choices=["raw_features", "embeddings"], default="raw_features")
    common.add_argument("--hidden", type=int, default=16)
    common.add_argument("--epochs", type=int, default=200)
    common.add_argument("--lr", type=float, default=0.01)
    common.add_argument("--weight-decay", type=float, default=5e-4)
    common.add_argument("--dropout", type=float, default=0.5)
    common.add_argument("--no-row-normalize", action="store_true")
    common.add_argument("--no-cache", action="store_true", help="ignore and do not write the stage-one cache")
    common.add_argument("--out", default="out")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="spadegnn", description="SPADE robustness scoring and robust-node GCN classification")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("score", parents=[common], help="write per-node SPADE scores")
    s.set_defaults(func=cmd_score, fraction=None)

    r = sub.add_parser("run", parents=[common], help="baseline vs robust pipeline table")
    r.add_argument("--fraction", type=float, default=None)
    r.add_argument("--fractions", default=None, help="e.g. orig,0.4")
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("sweep", parents=[common], help="one pipeline run per fraction, shared stage one")
    w.add_argument("--fractions", required=True, help="e.g. 0.2,0.4 or 0.2:1.0:0.2")
    w.set_defaults(func=cmd_sweep, fraction=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spadegnn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataError, GraphError, SpadeError, PipelineError, OSError) as exc:
        print(f"spadegnn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SpectralError, TrainingError, FloatingPointError) as exc:
        print(f"spadegnn: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
