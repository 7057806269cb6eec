"""Command-line entry point wiring all pipeline stages.

Every command is content-addressed: its fingerprint hashes the resolved
options plus the sha256 of each input artifact, its outputs land under
``<out>/<command>/<fingerprint>/``, and a finished directory is reused
verbatim on the next identical invocation. Exit codes: 0 success, 2
invalid input or configuration, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .config import (
    RunConfig,
    apply_overrides,
    canonical_dict,
    fingerprint,
    load_config,
    sha256_file,
)
from .errors import InputError, IOHunterError
from .features import ContentEmbeddings, hashed_fallback_embed, import_embeddings, write_embeddings
from .model import ModelConfig, ablate, load_checkpoint, save_checkpoint
from .report import (
    read_csv,
    save_ablation_bars,
    save_sparsity_curve,
    save_seed_scatter,
    save_transfer_bars,
    write_csv,
    write_json,
)
from .simnet import (
    build_all_layers,
    edge_homophily,
    fuse,
    read_edge_csv,
    write_edge_csv,
)
from .synth import generate, preset
from .traces import load_bundle, write_labels_csv, write_traces_jsonl
from .train import (
    ExperimentReport,
    TrainConfig,
    content_mlp_baseline,
    evaluate,
    finetune,
    fit,
    fit_report,
    graph_data,
    node_pruning_baseline,
    pretrain,
    sparsify,
    split,
    sweep_sparsity,
)

logger = logging.getLogger(__name__)

FP_DIR_LEN = 12  # directory names use a fingerprint prefix


class Artifact:
    """One command's output directory, keyed by fingerprint."""

    def __init__(self, out_root: Path, command: str, fp: str):
        self.command = command
        self.fingerprint = fp
        self.dir = out_root / command / fp[:FP_DIR_LEN]

    @property
    def meta_path(self) -> Path:
        return self.dir / "meta.json"

    def cached(self) -> bool:
        if not self.meta_path.exists():
            return False
        try:
            meta = json.loads(self.meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return False
        return meta.get("status") == "complete" and meta.get("fingerprint") == self.fingerprint

    def finish(self, options: dict, inputs: dict[str, str], outputs: list[str], started: float) -> None:
        write_json(
            self.meta_path,
            {
                "command": self.command,
                "fingerprint": self.fingerprint,
                "options": options,
                "inputs": inputs,
                "outputs": sorted(outputs),
                "wall_time": round(time.perf_counter() - started, 3),
                "status": "complete",
            },
        )


def _read_meta(artifact_dir: str | Path) -> dict:
    meta_path = Path(artifact_dir) / "meta.json"
    if not meta_path.exists():
        raise InputError(f"missing upstream artifact: {meta_path}")
    return json.loads(meta_path.read_text(encoding="utf-8"))


def _require(path: Path) -> Path:
    if not path.exists():
        raise InputError(f"missing upstream artifact: {path}")
    return path


def _begin(config: RunConfig, command: str, options: dict[str, Any], inputs: dict[str, str]) -> Artifact:
    fp = fingerprint(command, options, inputs)
    artifact = Artifact(Path(config.out), command, fp)
    artifact.dir.mkdir(parents=True, exist_ok=True)
    return artifact


def _train_config(config: RunConfig) -> TrainConfig:
    return TrainConfig(
        lrs=tuple(config.lrs),
        patiences=tuple(config.patiences),
        max_epochs=config.max_epochs,
        n_seeds=config.seeds,
        fractions=tuple(config.fractions),
    )


def _report_rows(report: ExperimentReport, **extra: Any) -> list[dict]:
    rows = []
    for run in report.runs:
        rows.append(
            {
                "name": report.name,
                "seed": run.seed,
                "val_f1": f"{run.val_f1:.6f}",
                "test_f1": f"{run.test_f1:.6f}",
                "lr": run.lr,
                "patience": run.patience,
                "epochs": run.epochs,
                "fingerprint": report.config_fingerprint,
                **extra,
            }
        )
    return rows


REPORT_COLUMNS = ["name", "seed", "val_f1", "test_f1", "lr", "patience", "epochs", "fingerprint"]


# -- dataset loading through artifact directories ---------------------------


def _load_dataset_dir(data_dir: str | Path):
    meta = _read_meta(data_dir)
    traces = _require(Path(data_dir) / "traces.jsonl")
    labels = _require(Path(data_dir) / "labels.csv")
    name = meta.get("options", {}).get("name", "dataset")
    allow = bool(meta.get("options", {}).get("allow_unlabeled", False))
    return load_bundle(traces, labels, name, allow_unlabeled=allow)


def _load_embed_dir(embed_dir: str | Path, bundle) -> ContentEmbeddings:
    _read_meta(embed_dir)
    path = _require(Path(embed_dir) / "embeddings.ioem")
    return import_embeddings(path, bundle)


def _assemble(net_dir: str | Path, d_g: int, bucket_scheme: str):
    """Bundle + embeddings + fused network referenced by one build-net dir."""
    meta = _read_meta(net_dir)
    data_dir = meta.get("options", {}).get("data_dir")
    embed_dir = meta.get("options", {}).get("embed_dir")
    if not data_dir:
        raise InputError(f"{net_dir}: meta does not reference a data dir")
    bundle = _load_dataset_dir(data_dir)
    if embed_dir:
        embeddings = _load_embed_dir(embed_dir, bundle)
    else:
        raise InputError(f"{net_dir}: meta does not reference an embed dir")
    net = read_edge_csv(_require(Path(net_dir) / "fused.csv"), n=bundle.n)
    data = graph_data(bundle, embeddings, net, d_g=d_g, bucket_scheme=bucket_scheme)
    return data, meta["fingerprint"]


# -- commands ----------------------------------------------------------------


def cmd_synth(config: RunConfig, args) -> int:
    options = {
        "preset": config.preset,
        "n_nodes": config.n_nodes or None,
        "seed": config.seed,
        "name": config.preset,
    }
    artifact = _begin(config, "synth", options, {})
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    cfg = preset(config.preset, seed=config.seed, n_nodes=config.n_nodes or None)
    bundle = generate(cfg)
    write_traces_jsonl(bundle.records, artifact.dir / "traces.jsonl")
    write_labels_csv(bundle.labels, artifact.dir / "labels.csv")
    write_json(
        artifact.dir / "dataset.json",
        {
            "name": bundle.name,
            "nodes": bundle.n,
            "records": len(bundle.records),
            "io_users": int(sum(bundle.labels.values())),
            "fingerprint": artifact.fingerprint,
        },
    )
    artifact.finish(options, {}, ["traces.jsonl", "labels.csv", "dataset.json"], started)
    print(artifact.dir)
    return 0


def cmd_ingest(config: RunConfig, args) -> int:
    traces_path = _require(Path(config.traces)) if config.traces else None
    if traces_path is None:
        raise InputError("ingest requires --traces")
    labels_path = _require(Path(config.labels)) if config.labels else None
    if labels_path is None:
        raise InputError("ingest requires --labels")
    options = {
        "name": config.name,
        "format": config.format,
        "allow_unlabeled": config.allow_unlabeled,
    }
    inputs = {str(traces_path): sha256_file(traces_path), str(labels_path): sha256_file(labels_path)}
    artifact = _begin(config, "ingest", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    bundle = load_bundle(traces_path, labels_path, config.name, fmt=config.format,
                         allow_unlabeled=config.allow_unlabeled)
    write_traces_jsonl(bundle.records, artifact.dir / "traces.jsonl")
    write_labels_csv(bundle.labels, artifact.dir / "labels.csv")
    write_json(
        artifact.dir / "dataset.json",
        {
            "name": bundle.name,
            "nodes": bundle.n,
            "records": len(bundle.records),
            "labeled": len(bundle.labels),
            "fingerprint": artifact.fingerprint,
        },
    )
    artifact.finish(options, inputs, ["traces.jsonl", "labels.csv", "dataset.json"], started)
    print(artifact.dir)
    return 0


def cmd_embed(config: RunConfig, args) -> int:
    data_dir = args.data
    data_meta = _read_meta(data_dir)
    traces = _require(Path(data_dir) / "traces.jsonl")
    mode = "import" if args.import_file else "fallback"
    options = {
        "mode": mode,
        "d_c": config.d_c,
        "data_dir": str(data_dir),
    }
    inputs = {str(traces): data_meta["fingerprint"]}
    if args.import_file:
        import_path = _require(Path(args.import_file))
        inputs[str(import_path)] = sha256_file(import_path)
    artifact = _begin(config, "embed", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    bundle = _load_dataset_dir(data_dir)
    if mode == "import":
        embeddings = import_embeddings(args.import_file, bundle)
    else:
        embeddings = hashed_fallback_embed(bundle, config.d_c)
    write_embeddings(
        artifact.dir / "embeddings.ioem",
        {user: embeddings.vectors[i] for i, user in enumerate(bundle.users)},
    )
    write_json(
        artifact.dir / "embed.json",
        {
            "source": embeddings.source,
            "d_c": embeddings.d_c,
            "missing": embeddings.missing,
            "fingerprint": artifact.fingerprint,
        },
    )
    artifact.finish(options, inputs, ["embeddings.ioem", "embed.json"], started)
    print(artifact.dir)
    return 0


def cmd_build_net(config: RunConfig, args) -> int:
    data_dir = args.data
    data_meta = _read_meta(data_dir)
    options = {
        "data_dir": str(data_dir),
        "embed_dir": str(args.embed) if args.embed else None,
        "tau": config.tau,
        "tau_text": config.tau_text,
        "top_percentile": config.top_percentile,
        "include_text_layer": config.include_text_layer and bool(args.embed),
    }
    inputs = {str(data_dir): data_meta["fingerprint"]}
    if args.embed:
        inputs[str(args.embed)] = _read_meta(args.embed)["fingerprint"]
    artifact = _begin(config, "build-net", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    bundle = _load_dataset_dir(data_dir)
    content = None
    if options["include_text_layer"]:
        content = _load_embed_dir(args.embed, bundle).vectors
    layers = build_all_layers(
        bundle, content=content, tau=config.tau, tau_text=config.tau_text,
        top_percentile=config.top_percentile or None,
    )
    net = fuse(layers)
    outputs = []
    for layer in layers:
        name = f"layer_{layer.trace_kind}.csv"
        write_edge_csv(layer, artifact.dir / name)
        outputs.append(name)
    write_edge_csv(net, artifact.dir / "fused.csv")
    labels = bundle.label_array()
    stats: dict[str, Any] = {
        "nodes": net.n,
        "edges": net.edge_count,
        "layer_edges": {layer.trace_kind: len(layer.edges) for layer in layers},
        "fingerprint": artifact.fingerprint,
    }
    if all(label >= 0 for label in labels):
        plain, insensitive = edge_homophily(net, labels)
        stats["edge_homophily"] = plain
        stats["class_insensitive_homophily"] = insensitive
    write_json(artifact.dir / "stats.json", stats)
    artifact.finish(options, inputs, outputs + ["fused.csv", "stats.json"], started)
    print(artifact.dir)
    return 0


def cmd_train(config: RunConfig, args) -> int:
    net_fp = _read_meta(args.net)["fingerprint"]
    options = {
        "net_dir": str(args.net),
        "conv": config.conv,
        "d": config.d,
        "dropout": config.dropout,
        "ablation": config.ablation,
        "d_g": config.d_g,
        "bucket_scheme": config.bucket_scheme,
        "lrs": list(config.lrs),
        "patiences": list(config.patiences),
        "max_epochs": config.max_epochs,
        "seeds": config.seeds,
        "seed": config.seed,
        "fraction": args.fraction,
    }
    inputs = {str(args.net): net_fp}
    artifact = _begin(config, "train", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    data, data_fp = _assemble(args.net, config.d_g, config.bucket_scheme)
    model_config = ModelConfig(
        d_c=data.d_c, d_g=data.d_g, conv=config.conv, d=config.d,
        dropout=config.dropout, ablation=config.ablation,
    )
    seeds = [config.seed + i for i in range(config.seeds)]
    report, models = fit_report(data, model_config, _train_config(config), seeds, fraction=args.fraction)
    report.config_fingerprint = artifact.fingerprint
    best_seed = max(report.runs, key=lambda r: r.val_f1).seed
    save_checkpoint(models[best_seed], artifact.dir / "checkpoint.iock",
                    extra={"fingerprint": artifact.fingerprint, "seed": best_seed})
    metrics = report.to_dict()
    metrics["data_fingerprint"] = data_fp
    write_json(artifact.dir / "metrics.json", metrics)
    write_csv(artifact.dir / "report.csv", _report_rows(report), REPORT_COLUMNS)
    artifact.finish(options, inputs, ["metrics.json", "report.csv", "checkpoint.iock"], started)
    print(artifact.dir)
    print(f"macro_f1 mean={report.mean():.4f} std={report.std():.4f}")
    return 0


def cmd_eval(config: RunConfig, args) -> int:
    checkpoint_path = Path(args.checkpoint)
    if checkpoint_path.is_dir():
        checkpoint_path = _require(checkpoint_path / "checkpoint.iock")
    else:
        _require(checkpoint_path)
    net_fp = _read_meta(args.net)["fingerprint"]
    options = {
        "net_dir": str(args.net),
        "checkpoint": str(checkpoint_path),
        "d_g": config.d_g,
        "bucket_scheme": config.bucket_scheme,
        "seed": config.seed,
    }
    inputs = {str(args.net): net_fp, str(checkpoint_path): sha256_file(checkpoint_path)}
    artifact = _begin(config, "eval", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    data, data_fp = _assemble(args.net, config.d_g, config.bucket_scheme)
    model = load_checkpoint(checkpoint_path, expect_d_c=data.d_c, expect_d_g=data.d_g)
    masks = split(data.n, config.seed)
    metrics = {
        "val_f1": evaluate(model, data, masks.val),
        "test_f1": evaluate(model, data, masks.test),
        "seed": config.seed,
        "fingerprint": artifact.fingerprint,
        "data_fingerprint": data_fp,
    }
    write_json(artifact.dir / "metrics.json", metrics)
    artifact.finish(options, inputs, ["metrics.json"], started)
    print(artifact.dir)
    print(f"val={metrics['val_f1']:.4f} test={metrics['test_f1']:.4f}")
    return 0


def cmd_sweep_sparsity(config: RunConfig, args) -> int:
    net_fp = _read_meta(args.net)["fingerprint"]
    options = {
        "net_dir": str(args.net),
        "conv": config.conv,
        "d": config.d,
        "dropout": config.dropout,
        "d_g": config.d_g,
        "bucket_scheme": config.bucket_scheme,
        "lrs": list(config.lrs),
        "patiences": list(config.patiences),
        "max_epochs": config.max_epochs,
        "seeds": config.seeds,
        "seed": config.seed,
        "fractions": list(config.fractions),
    }
    inputs = {str(args.net): net_fp}
    artifact = _begin(config, "sweep-sparsity", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    data, data_fp = _assemble(args.net, config.d_g, config.bucket_scheme)
    model_config = ModelConfig(
        d_c=data.d_c, d_g=data.d_g, conv=config.conv, d=config.d, dropout=config.dropout,
    )
    seeds = [config.seed + i for i in range(config.seeds)]
    rows = sweep_sparsity(data, model_config, _train_config(config), seeds)
    for row in rows:
        row["fingerprint"] = artifact.fingerprint
        row["val_f1"] = f"{row['val_f1']:.6f}"
        row["test_f1"] = f"{row['test_f1']:.6f}"
    columns = ["dataset", "fraction", "seed", "val_f1", "test_f1", "lr", "patience", "epochs", "fingerprint"]
    write_csv(artifact.dir / "sparsity.csv", rows, columns)
    save_sparsity_curve(
        [dict(r, test_f1=float(r["test_f1"])) for r in rows],
        artifact.dir / "sparsity.png",
        title=f"{data.name}: label-budget robustness",
    )
    write_json(
        artifact.dir / "metrics.json",
        {
            "rows": len(rows),
            "fractions": list(config.fractions),
            "fingerprint": artifact.fingerprint,
            "data_fingerprint": data_fp,
        },
    )
    artifact.finish(options, inputs, ["sparsity.csv", "sparsity.png", "metrics.json"], started)
    print(artifact.dir)
    return 0


def cmd_pretrain(config: RunConfig, args) -> int:
    net_dirs = list(args.nets)
    inputs = {str(d): _read_meta(d)["fingerprint"] for d in net_dirs}
    options = {
        "net_dirs": [str(d) for d in net_dirs],
        "conv": config.conv,
        "d": config.d,
        "dropout": config.dropout,
        "d_g": config.d_g,
        "bucket_scheme": config.bucket_scheme,
        "lrs": list(config.lrs),
        "patiences": list(config.patiences),
        "max_epochs": config.max_epochs,
        "seed": config.seed,
    }
    artifact = _begin(config, "pretrain", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    datasets = [_assemble(d, config.d_g, config.bucket_scheme)[0] for d in net_dirs]
    model_config = ModelConfig(
        d_c=datasets[0].d_c, d_g=datasets[0].d_g, conv=config.conv, d=config.d, dropout=config.dropout,
    )
    model, result = pretrain(datasets, model_config, _train_config(config), config.seed)
    save_checkpoint(model, artifact.dir / "checkpoint.iock", extra={"fingerprint": artifact.fingerprint})
    write_json(
        artifact.dir / "metrics.json",
        {
            "mean_val_f1": result.val_f1,
            "epochs": result.epochs,
            "lr": result.lr,
            "patience": result.patience,
            "graphs": [d.name for d in datasets],
            "seed": config.seed,
            "fingerprint": artifact.fingerprint,
        },
    )
    artifact.finish(options, inputs, ["checkpoint.iock", "metrics.json"], started)
    print(artifact.dir)
    print(f"mean val macro_f1={result.val_f1:.4f}")
    return 0


def cmd_finetune(config: RunConfig, args) -> int:
    checkpoint_path = Path(args.checkpoint)
    if checkpoint_path.is_dir():
        checkpoint_path = _require(checkpoint_path / "checkpoint.iock")
    else:
        _require(checkpoint_path)
    net_fp = _read_meta(args.net)["fingerprint"]
    options = {
        "net_dir": str(args.net),
        "checkpoint": str(checkpoint_path),
        "fraction": config.finetune_fraction,
        "d_g": config.d_g,
        "bucket_scheme": config.bucket_scheme,
        "lrs": list(config.lrs),
        "patiences": list(config.patiences),
        "max_epochs": config.max_epochs,
        "seeds": config.seeds,
        "seed": config.seed,
    }
    inputs = {str(args.net): net_fp, str(checkpoint_path): sha256_file(checkpoint_path)}
    artifact = _begin(config, "finetune", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    data, data_fp = _assemble(args.net, config.d_g, config.bucket_scheme)
    rows = []
    for offset in range(config.seeds):
        seed = config.seed + offset
        model = load_checkpoint(checkpoint_path, expect_d_c=data.d_c, expect_d_g=data.d_g)
        result = finetune(model, data, _train_config(config), seed, fraction=config.finetune_fraction)
        masks = split(data.n, seed)
        scratch_mask = sparsify(masks.train, config.finetune_fraction, seed, data.labels)
        scratch = fit(
            data, masks,
            ModelConfig(d_c=data.d_c, d_g=data.d_g, conv=config.conv, d=config.d, dropout=config.dropout),
            _train_config(config), seed, train_mask=scratch_mask,
        )
        rows.append(
            {
                "seed": seed,
                "scratch": f"{scratch.test_f1:.6f}",
                "only_pretrain": f"{result.only_pretrain_test:.6f}",
                "finetuned": f"{result.finetuned_test:.6f}",
                "fingerprint": artifact.fingerprint,
            }
        )
    write_csv(artifact.dir / "transfer.csv", rows,
              ["seed", "scratch", "only_pretrain", "finetuned", "fingerprint"])
    save_transfer_bars(rows, artifact.dir / "transfer.png", title=f"{data.name}: cross-campaign transfer")
    summary = {
        "scratch_mean": float(np.mean([float(r["scratch"]) for r in rows])),
        "only_pretrain_mean": float(np.mean([float(r["only_pretrain"]) for r in rows])),
        "finetuned_mean": float(np.mean([float(r["finetuned"]) for r in rows])),
        "fraction": config.finetune_fraction,
        "fingerprint": artifact.fingerprint,
        "data_fingerprint": data_fp,
    }
    write_json(artifact.dir / "metrics.json", summary)
    artifact.finish(options, inputs, ["transfer.csv", "transfer.png", "metrics.json"], started)
    print(artifact.dir)
    print(
        f"scratch={summary['scratch_mean']:.4f} only_pretrain={summary['only_pretrain_mean']:.4f} "
        f"finetuned={summary['finetuned_mean']:.4f}"
    )
    return 0


def cmd_ablate(config: RunConfig, args) -> int:
    net_fp = _read_meta(args.net)["fingerprint"]
    options = {
        "net_dir": str(args.net),
        "conv": config.conv,
        "d": config.d,
        "dropout": config.dropout,
        "d_g": config.d_g,
        "bucket_scheme": config.bucket_scheme,
        "lrs": list(config.lrs),
        "patiences": list(config.patiences),
        "max_epochs": config.max_epochs,
        "seeds": config.seeds,
        "seed": config.seed,
    }
    inputs = {str(args.net): net_fp}
    artifact = _begin(config, "ablate", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    data, data_fp = _assemble(args.net, config.d_g, config.bucket_scheme)
    base = ModelConfig(d_c=data.d_c, d_g=data.d_g, conv=config.conv, d=config.d, dropout=config.dropout)
    seeds = [config.seed + i for i in range(config.seeds)]
    all_rows = []
    summary: dict[str, Any] = {"fingerprint": artifact.fingerprint, "data_fingerprint": data_fp}
    bars = {}
    for ablation in ("full", "no_crossattn", "no_graph", "no_text"):
        report, _ = fit_report(data, ablate(base, ablation), _train_config(config), seeds, name=ablation)
        report.config_fingerprint = artifact.fingerprint
        all_rows.extend(_report_rows(report))
        summary[ablation] = {"mean": report.mean(), "std": report.std()}
        bars[ablation] = (report.mean(), report.std())
    write_csv(artifact.dir / "ablation.csv", all_rows, REPORT_COLUMNS)
    save_ablation_bars(bars, artifact.dir / "ablation.png", title=f"{data.name}: ablation study")
    write_json(artifact.dir / "metrics.json", summary)
    artifact.finish(options, inputs, ["ablation.csv", "ablation.png", "metrics.json"], started)
    print(artifact.dir)
    for name, (mean, std) in bars.items():
        print(f"{name}: {mean:.4f} +/- {std:.4f}")
    return 0


def cmd_baseline(config: RunConfig, args) -> int:
    net_fp = _read_meta(args.net)["fingerprint"]
    options = {
        "net_dir": str(args.net),
        "d_g": config.d_g,
        "bucket_scheme": config.bucket_scheme,
        "lrs": list(config.lrs),
        "patiences": list(config.patiences),
        "max_epochs": config.max_epochs,
        "seeds": config.seeds,
        "seed": config.seed,
    }
    inputs = {str(args.net): net_fp}
    artifact = _begin(config, "baseline", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    data, data_fp = _assemble(args.net, config.d_g, config.bucket_scheme)
    bundle = _load_dataset_dir(_read_meta(args.net)["options"]["data_dir"])
    embed_dir = _read_meta(args.net)["options"]["embed_dir"]
    embeddings = _load_embed_dir(embed_dir, bundle)
    # The content baseline uses the top-5-popularity aggregation.
    top5 = hashed_fallback_embed(bundle, embeddings.d_c, mode="top_k_popular", k=5)

    rows = []
    for offset in range(config.seeds):
        seed = config.seed + offset
        masks = split(data.n, seed)
        pruning = node_pruning_baseline(data, masks)
        mlp = content_mlp_baseline(top5.vectors, data.labels, masks, _train_config(config), seed)
        rows.append(
            {
                "seed": seed,
                "node_pruning": f"{pruning.test_f1:.6f}",
                "content_mlp": f"{mlp.test_f1:.6f}",
                "fingerprint": artifact.fingerprint,
            }
        )
    write_csv(artifact.dir / "baselines.csv", rows, ["seed", "node_pruning", "content_mlp", "fingerprint"])
    summary = {
        "node_pruning_mean": float(np.mean([float(r["node_pruning"]) for r in rows])),
        "content_mlp_mean": float(np.mean([float(r["content_mlp"]) for r in rows])),
        "fingerprint": artifact.fingerprint,
        "data_fingerprint": data_fp,
    }
    write_json(artifact.dir / "metrics.json", summary)
    artifact.finish(options, inputs, ["baselines.csv", "metrics.json"], started)
    print(artifact.dir)
    print(f"node_pruning={summary['node_pruning_mean']:.4f} content_mlp={summary['content_mlp_mean']:.4f}")
    return 0


def cmd_report(config: RunConfig, args) -> int:
    run_dirs = [Path(d) for d in args.runs]
    metas = [_read_meta(d) for d in run_dirs]
    data_fps = set()
    payloads = []
    for run_dir, meta in zip(run_dirs, metas):
        metrics_path = _require(run_dir / "metrics.json")
        metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
        if "data_fingerprint" in metrics:
            data_fps.add(metrics["data_fingerprint"])
        payloads.append((run_dir, meta, metrics))
    if len(data_fps) > 1 and not args.force:
        raise InputError(
            f"runs mix {len(data_fps)} different dataset fingerprints; pass --force to aggregate anyway"
        )
    options = {"runs": sorted(str(d) for d in run_dirs), "force": bool(args.force)}
    inputs = {str(d): m["fingerprint"] for d, m in zip(run_dirs, metas)}
    artifact = _begin(config, "report", options, inputs)
    if artifact.cached():
        print(artifact.dir)
        return 0
    started = time.perf_counter()
    figures_dir = artifact.dir / "figures"
    figures_dir.mkdir(exist_ok=True)
    combined_rows: list[dict] = []
    combined: dict[str, Any] = {"fingerprint": artifact.fingerprint, "runs": {}}
    seed_scatter: dict[str, list[float]] = {}
    outputs = ["combined.csv", "combined.json"]
    for run_dir, meta, metrics in payloads:
        command = meta["command"]
        combined["runs"][str(run_dir)] = metrics
        if command in ("train", "ablate"):
            csv_name = "report.csv" if command == "train" else "ablation.csv"
            for row in read_csv(run_dir / csv_name):
                combined_rows.append(dict(row, command=command, run=str(run_dir)))
                seed_scatter.setdefault(row["name"], []).append(float(row["test_f1"]))
        if command == "sweep-sparsity":
            rows = read_csv(run_dir / "sparsity.csv")
            for row in rows:
                combined_rows.append(
                    {
                        "command": command,
                        "run": str(run_dir),
                        "name": f"{row['dataset']}@{row['fraction']}",
                        "seed": row["seed"],
                        "val_f1": row["val_f1"],
                        "test_f1": row["test_f1"],
                        "lr": row["lr"],
                        "patience": row["patience"],
                        "epochs": row["epochs"],
                        "fingerprint": row["fingerprint"],
                    }
                )
            save_sparsity_curve(
                [dict(r, test_f1=float(r["test_f1"])) for r in rows],
                figures_dir / f"sparsity_{run_dir.name}.png",
            )
            outputs.append(f"figures/sparsity_{run_dir.name}.png")
        if command == "ablate":
            bars = {
                k: (v["mean"], v["std"])
                for k, v in metrics.items()
                if isinstance(v, dict) and "mean" in v
            }
            if bars:
                save_ablation_bars(bars, figures_dir / f"ablation_{run_dir.name}.png")
                outputs.append(f"figures/ablation_{run_dir.name}.png")
        if command == "finetune":
            rows = read_csv(run_dir / "transfer.csv")
            save_transfer_bars(rows, figures_dir / f"transfer_{run_dir.name}.png")
            outputs.append(f"figures/transfer_{run_dir.name}.png")
    if seed_scatter:
        save_seed_scatter(seed_scatter, figures_dir / "seeds.png")
        outputs.append("figures/seeds.png")
    write_csv(
        artifact.dir / "combined.csv",
        combined_rows,
        ["command", "run", "name", "seed", "val_f1", "test_f1", "lr", "patience", "epochs", "fingerprint"],
    )
    write_json(artifact.dir / "combined.json", combined)
    artifact.finish(options, inputs, outputs, started)
    print(artifact.dir)
    return 0


# -- argument parsing --------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI run-config file")
    parser.add_argument("--seed", type=int, help="top-level seed")
    parser.add_argument("--out", help="artifact output root")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iohunter",
        description="Detect IO drivers from behavioral similarity networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic campaign dataset")
    _add_common(p)
    p.add_argument("--preset", help="synthetic preset name")
    p.add_argument("--n-nodes", type=int, dest="n_nodes", help="override preset size")

    p = sub.add_parser("ingest", help="validate and normalize a trace log")
    _add_common(p)
    p.add_argument("--traces", help="trace file (jsonl or csv)")
    p.add_argument("--labels", help="labels csv")
    p.add_argument("--name", help="dataset name")
    p.add_argument("--format", choices=("jsonl", "csv"), help="trace file format")
    p.add_argument("--allow-unlabeled", action="store_true", default=None, dest="allow_unlabeled")

    p = sub.add_parser("embed", help="produce per-user content embeddings")
    _add_common(p)
    p.add_argument("--data", required=True, help="ingest/synth artifact dir")
    p.add_argument("--import-file", dest="import_file", help="interchange file to import instead of the fallback")
    p.add_argument("--d-c", type=int, dest="d_c", help="fallback embedding width")

    p = sub.add_parser("build-net", help="build similarity networks and fuse them")
    _add_common(p)
    p.add_argument("--data", required=True, help="ingest/synth artifact dir")
    p.add_argument("--embed", help="embed artifact dir (enables the text layer)")
    p.add_argument("--tau", type=float, help="similarity threshold for trace layers")
    p.add_argument("--tau-text", type=float, dest="tau_text", help="text-similarity threshold")

    p = sub.add_parser("train", help="train IOHunter on one dataset")
    _add_common(p)
    p.add_argument("--net", required=True, help="build-net artifact dir")
    p.add_argument("--conv", choices=("gcn", "sage"), help="message-passing flavor")
    p.add_argument("--ablation", choices=("full", "no_graph", "no_text", "no_crossattn"))
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--fraction", type=float, default=1.0, help="training-label fraction")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint file or train/pretrain dir")

    p = sub.add_parser("sweep-sparsity", help="label-budget robustness sweep")
    _add_common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--conv", choices=("gcn", "sage"))
    p.add_argument("--seeds", type=int)

    p = sub.add_parser("pretrain", help="pretrain across several campaign datasets")
    _add_common(p)
    p.add_argument("--nets", nargs="+", required=True, help="build-net artifact dirs")
    p.add_argument("--conv", choices=("gcn", "sage"))

    p = sub.add_parser("finetune", help="fine-tune a checkpoint on a sparse target")
    _add_common(p)
    p.add_argument("--net", required=True, help="target build-net dir")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fraction", type=float, dest="finetune_fraction", help="target label fraction")
    p.add_argument("--conv", choices=("gcn", "sage"))
    p.add_argument("--seeds", type=int)

    p = sub.add_parser("ablate", help="run the architecture ablation variants")
    _add_common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--conv", choices=("gcn", "sage"))
    p.add_argument("--seeds", type=int)

    p = sub.add_parser("baseline", help="centrality and content-MLP baselines")
    _add_common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--seeds", type=int)

    p = sub.add_parser("report", help="aggregate runs into one report with figures")
    _add_common(p)
    p.add_argument("--runs", nargs="+", required=True, help="artifact dirs to aggregate")
    p.add_argument("--force", action="store_true", help="aggregate despite mismatched fingerprints")

    return parser


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "embed": cmd_embed,
    "build-net": cmd_build_net,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-sparsity": cmd_sweep_sparsity,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "ablate": cmd_ablate,
    "baseline": cmd_baseline,
    "report": cmd_report,
}

_CONFIG_FLAGS = (
    "seed", "out", "preset", "n_nodes", "traces", "labels", "name", "format",
    "allow_unlabeled", "d_c", "tau", "tau_text", "conv", "ablation", "seeds",
    "finetune_fraction",
)


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        overrides = {}
        for flag in _CONFIG_FLAGS:
            if hasattr(args, flag):
                value = getattr(args, flag)
                if flag == "seeds" and value is not None:
                    overrides["seeds"] = value
                elif flag != "seeds":
                    overrides[flag] = value
        apply_overrides(config, overrides)
        return COMMANDS[args.command](config, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IOHunterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
