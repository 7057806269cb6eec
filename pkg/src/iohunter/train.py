"""Training harness: supervised, sparse-label, and cross-campaign regimes.

Training is full-batch and transductive: every epoch runs one forward
pass over all nodes, applies the cross-entropy loss on the train mask
only, backpropagates, and takes one Adam step. Validation Macro-F1
drives early stopping and hyperparameter selection; the test mask is
touched once, after selection.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import AdamState, Tape, Tensor
from .errors import InputError
from .features import ContentEmbeddings, degree_onehots
from .model import (
    GraphOperators,
    IOHunterModel,
    ModelConfig,
    glorot,
    normalized_adjacency,
)
from .simnet import FusedNetwork, degrees
from .traces import DatasetBundle

logger = logging.getLogger(__name__)

SPLIT_FRACTIONS = (0.6, 0.2, 0.2)
SPARSITY_FRACTIONS = (0.001, 0.01, 0.05, 0.10, 0.25, 0.50, 1.0)


def _stable_u32(tag: object) -> int:
    digest = hashlib.blake2b(repr(tag).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def rng_for(seed: int, *tags: object) -> np.random.Generator:
    """Seeded generator for one named random stream.

    Every random draw in the harness flows from the top-level seed plus a
    purpose tag, so no stream depends on how many other streams exist.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [_stable_u32(t) for t in tags]))


@dataclass
class SplitMasks:
    """Disjoint boolean train/val/test masks covering all nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS


def split(n: int, seed: int) -> SplitMasks:
    """60-20-20 random split by a seeded shuffle of node indices."""
    if n < 5:
        raise InputError(f"need at least 5 nodes to split, got {n}")
    order = rng_for(seed, "split").permutation(n)
    n_train = int(SPLIT_FRACTIONS[0] * n)
    n_val = int(SPLIT_FRACTIONS[1] * n)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    masks[0][order[:n_train]] = True
    masks[1][order[n_train : n_train + n_val]] = True
    masks[2][order[n_train + n_val :]] = True
    return SplitMasks(train=masks[0], val=masks[1], test=masks[2], seed=seed)


def macro_f1(pred: Sequence[int], true: Sequence[int]) -> float:
    """Unweighted mean of the per-class F1 scores over classes {0, 1}.

    A class with an empty precision+recall denominator contributes 0.
    """
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape:
        raise InputError(f"prediction/label shapes differ: {pred.shape} vs {true.shape}")
    total = 0.0
    for cls in (0, 1):
        tp = int(np.sum((pred == cls) & (true == cls)))
        fp = int(np.sum((pred == cls) & (true != cls)))
        fn = int(np.sum((pred != cls) & (true == cls)))
        denom = 2 * tp + fp + fn
        total += (2 * tp / denom) if denom else 0.0
    return total / 2.0


def scores_to_labels(scores: np.ndarray) -> np.ndarray:
    """Decision rule: IO driver iff score >= 0.5."""
    return (np.asarray(scores).reshape(-1) >= 0.5).astype(np.int64)


@dataclass
class GraphData:
    """Features, operators, and labels for one campaign dataset."""

    name: str
    content: np.ndarray
    context: np.ndarray
    ops: GraphOperators
    labels: np.ndarray
    net: FusedNetwork

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def d_c(self) -> int:
        return int(self.content.shape[1])

    @property
    def d_g(self) -> int:
        return int(self.context.shape[1])


def graph_data(
    bundle: DatasetBundle,
    embeddings: ContentEmbeddings,
    net: FusedNetwork,
    d_g: int = 32,
    bucket_scheme: str = "log2",
) -> GraphData:
    """Assemble the training inputs from the pipeline stages."""
    labels = np.asarray(bundle.label_array(), dtype=np.int64)
    if (labels < 0).any():
        raise InputError(f"bundle {bundle.name!r} has unlabeled users; training needs full labels")
    context = degree_onehots(degrees(net), d_g, scheme=bucket_scheme)
    return GraphData(
        name=bundle.name,
        content=embeddings.vectors.astype(np.float32),
        context=context,
        ops=normalized_adjacency(net),
        labels=labels,
        net=net,
    )


@dataclass
class TrainConfig:
    lrs: tuple[float, ...] = (1e-2, 1e-3)
    patiences: tuple[int, ...] = (20, 25, 30)
    max_epochs: int = 1000
    n_seeds: int = 5
    fractions: tuple[float, ...] = SPARSITY_FRACTIONS


def _prior_logit(labels: np.ndarray, mask: np.ndarray) -> Optional[float]:
    """Log-odds of the positive class on the train mask.

    Starting the logit head at the class prior skips the epochs a fresh
    model spends discovering the base rate, which matters because the
    patience window is short relative to that plateau on imbalanced
    data. None when the mask holds a single class.
    """
    rate = float(np.asarray(labels)[np.asarray(mask, dtype=bool)].mean())
    if 0.0 < rate < 1.0:
        return math.log(rate / (1.0 - rate))
    return None


@dataclass
class LoopResult:
    """Outcome of one early-stopped training run."""

    val_f1: float
    best_epoch: int
    epochs: int
    loss_trace: list[float]
    val_trace: list[float]
    snapshot: dict[str, np.ndarray]


class _BoundGraphModel:
    """IOHunterModel bound to one dataset so the loop sees a closed forward."""

    def __init__(self, model: IOHunterModel, data: GraphData):
        self.model = model
        self.content = Tensor(data.content)
        self.context = Tensor(data.context)
        self.ops = data.ops

    def param_list(self):
        return self.model.param_list()

    def snapshot(self):
        return self.model.snapshot()

    def restore(self, snap):
        self.model.restore(snap)

    def forward(self, tape, train, rng):
        return self.model.forward(tape, self.content, self.context, self.ops, train=train, rng=rng)


def _train_loop(
    bound,
    labels: np.ndarray,
    train_mask: np.ndarray,
    val_mask: np.ndarray,
    lr: float,
    patience: int,
    max_epochs: int,
    drop_rng: np.random.Generator,
) -> LoopResult:
    """Full-batch epochs with patience-based early stopping.

    Tracks the best validation Macro-F1 (strict improvement), stops after
    `patience` epochs without improvement, and restores the best-epoch
    parameters before returning.
    """
    params = bound.param_list()
    targets = labels.astype(np.float32)
    train_labels = labels[train_mask]
    if len(set(train_labels.tolist())) < 2:
        logger.warning("train mask holds a single class; loss is still defined, proceeding")

    state = AdamState.for_params(params)
    best_val = -math.inf
    best_epoch = 0
    best_snap = bound.snapshot()
    since = 0
    loss_trace: list[float] = []
    val_trace: list[float] = []
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        tape = Tape()
        scores = bound.forward(tape, train=True, rng=drop_rng)
        loss = ad.bce_loss(tape, scores, targets, train_mask)
        ad.zero_grads(params)
        ad.backward(tape, loss)
        ad.adam_step(params, [p.grad for p in params], state, lr)
        loss_trace.append(float(loss.data))

        eval_scores = bound.forward(None, train=False, rng=None)
        val_f1 = macro_f1(scores_to_labels(eval_scores.data)[val_mask], labels[val_mask])
        val_trace.append(val_f1)
        if val_f1 > best_val:
            best_val = val_f1
            best_epoch = epoch
            best_snap = bound.snapshot()
            since = 0
        else:
            since += 1
        if since >= patience:
            break
    bound.restore(best_snap)
    return LoopResult(
        val_f1=best_val,
        best_epoch=best_epoch,
        epochs=epoch,
        loss_trace=loss_trace,
        val_trace=val_trace,
        snapshot=best_snap,
    )


@dataclass
class FitResult:
    """Best grid entry for one seed, with the restored model."""

    seed: int
    lr: float
    patience: int
    epochs: int
    best_epoch: int
    val_f1: float
    test_f1: float
    model: IOHunterModel
    loss_trace: list[float]
    grid: list[dict] = field(default_factory=list)
    wall_time: float = 0.0


def evaluate(model: IOHunterModel, data: GraphData, mask: np.ndarray) -> float:
    bound = _BoundGraphModel(model, data)
    scores = bound.forward(None, train=False, rng=None)
    return macro_f1(scores_to_labels(scores.data)[mask], data.labels[mask])


def fit(
    data: GraphData,
    masks: SplitMasks,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
    train_mask: Optional[np.ndarray] = None,
) -> FitResult:
    """Grid-search lr and patience by validation Macro-F1, then test once.

    All grid entries start from the same seeded initialization so the
    selection compares optimization settings, not initializations. An
    explicit train_mask (e.g. a sparsified one) overrides masks.train.
    """
    t0 = time.perf_counter()
    effective_train = masks.train if train_mask is None else train_mask
    best: Optional[tuple] = None
    grid_rows: list[dict] = []
    for lr, patience in product(train_config.lrs, train_config.patiences):
        model = IOHunterModel(model_config, seed=int(rng_for(seed, "init").integers(2**31)))
        prior = _prior_logit(data.labels, effective_train)
        if prior is not None:
            model.params["head.b"].data[:] = prior
        bound = _BoundGraphModel(model, data)
        drop_rng = rng_for(seed, "dropout", lr, patience)
        run = _train_loop(
            bound, data.labels, effective_train, masks.val, lr, patience, train_config.max_epochs, drop_rng
        )
        grid_rows.append(
            {"lr": lr, "patience": patience, "val_f1": run.val_f1, "epochs": run.epochs}
        )
        if best is None or run.val_f1 > best[0]:
            best = (run.val_f1, lr, patience, run, model)
    assert best is not None
    _, lr, patience, run, model = best
    test_f1 = evaluate(model, data, masks.test)
    return FitResult(
        seed=seed,
        lr=lr,
        patience=patience,
        epochs=run.epochs,
        best_epoch=run.best_epoch,
        val_f1=run.val_f1,
        test_f1=test_f1,
        model=model,
        loss_trace=run.loss_trace,
        grid=grid_rows,
        wall_time=time.perf_counter() - t0,
    )


def sparsify(
    train_mask: np.ndarray,
    fraction: float,
    seed: int,
    labels: np.ndarray,
) -> np.ndarray:
    """Seeded subsample of the train mask, nested across fractions.

    The subsample is a prefix of one fixed seeded ordering whose first
    two entries are the earliest positive and negative in the shuffle, so
    every fraction at a given seed contains both classes when they exist
    and smaller fractions are subsets of larger ones.
    """
    if not 0.0 < fraction <= 1.0:
        raise InputError(f"fraction must be in (0, 1], got {fraction}")
    idx = np.nonzero(np.asarray(train_mask, dtype=bool))[0]
    if idx.size == 0:
        raise InputError("train mask is empty")
    perm = rng_for(seed, "sparsify").permutation(idx)
    labels = np.asarray(labels)
    positives = perm[labels[perm] == 1]
    negatives = perm[labels[perm] == 0]
    if positives.size == 0:
        raise InputError("no positive-class nodes exist in the train mask")
    head = [int(positives[0])]
    if negatives.size:
        head.append(int(negatives[0]))
    head_set = set(head)
    ordered = head + [int(i) for i in perm if int(i) not in head_set]
    k = min(max(2, round(fraction * idx.size)), idx.size)
    mask = np.zeros(train_mask.shape[0], dtype=bool)
    mask[ordered[:k]] = True
    return mask


@dataclass
class SeedRun:
    seed: int
    val_f1: float
    test_f1: float
    lr: float
    patience: int
    epochs: int
    wall_time: float
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    """Per-seed runs plus the aggregate; Table-style mean and std."""

    name: str
    runs: list[SeedRun] = field(default_factory=list)
    config_fingerprint: str = ""

    def test_scores(self) -> list[float]:
        return [r.test_f1 for r in self.runs]

    def mean(self) -> float:
        return float(np.mean(self.test_scores())) if self.runs else 0.0

    def std(self) -> float:
        # Sample standard deviation, matching mean +/- std reporting.
        scores = self.test_scores()
        return float(np.std(scores, ddof=1)) if len(scores) >= 2 else 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config_fingerprint": self.config_fingerprint,
            "macro_f1_mean": self.mean(),
            "macro_f1_std": self.std(),
            "runs": [
                {
                    "seed": r.seed,
                    "val_f1": r.val_f1,
                    "test_f1": r.test_f1,
                    "lr": r.lr,
                    "patience": r.patience,
                    "epochs": r.epochs,
                    **({"extra": r.extra} if r.extra else {}),
                }
                for r in self.runs
            ],
        }


def worker_slots() -> int:
    """Worker cap from IOHUNTER_THREADS; defaults to sequential."""
    raw = os.environ.get("IOHUNTER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_seeds(job: Callable[[int], SeedRun], seeds: Sequence[int]) -> list[SeedRun]:
    """Run independent per-seed jobs, optionally in parallel, merged by seed."""
    slots = worker_slots()
    if slots <= 1 or len(seeds) <= 1:
        results = [job(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=slots) as pool:
            results = list(pool.map(job, seeds))
    return sorted(results, key=lambda r: r.seed)


def fit_report(
    data: GraphData,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seeds: Sequence[int],
    name: str = "",
    fraction: float = 1.0,
) -> tuple[ExperimentReport, dict[int, IOHunterModel]]:
    """Multi-seed supervised (or sparsified) runs on one dataset."""
    models: dict[int, IOHunterModel] = {}

    def one(seed: int) -> SeedRun:
        t0 = time.perf_counter()
        masks = split(data.n, seed)
        train_mask = None
        if fraction < 1.0:
            train_mask = sparsify(masks.train, fraction, seed, data.labels)
        result = fit(data, masks, model_config, train_config, seed, train_mask=train_mask)
        models[seed] = result.model
        return SeedRun(
            seed=seed,
            val_f1=result.val_f1,
            test_f1=result.test_f1,
            lr=result.lr,
            patience=result.patience,
            epochs=result.epochs,
            wall_time=time.perf_counter() - t0,
        )

    report = ExperimentReport(name=name or data.name, runs=run_seeds(one, seeds))
    return report, models


def sweep_sparsity(
    data: GraphData,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seeds: Sequence[int],
) -> list[dict]:
    """One row per (fraction, seed): the label-budget robustness curve."""
    rows: list[dict] = []
    for fraction in train_config.fractions:
        report, _ = fit_report(
            data, model_config, train_config, seeds, name=f"{data.name}@{fraction}", fraction=fraction
        )
        for run in report.runs:
            rows.append(
                {
                    "dataset": data.name,
                    "fraction": fraction,
                    "seed": run.seed,
                    "val_f1": run.val_f1,
                    "test_f1": run.test_f1,
                    "lr": run.lr,
                    "patience": run.patience,
                    "epochs": run.epochs,
                }
            )
    return rows


def pretrain(
    datasets: Sequence[GraphData],
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
) -> tuple[IOHunterModel, FitResult]:
    """Round-robin full-batch pretraining across several campaign graphs.

    Each epoch performs one forward/backward/Adam step per graph in a
    fixed seeded order; early stopping tracks the mean of the graphs'
    validation Macro-F1.
    """
    if not datasets:
        raise InputError("pretrain needs at least one dataset")
    d_c, d_g = datasets[0].d_c, datasets[0].d_g
    for data in datasets[1:]:
        if data.d_c != d_c or data.d_g != d_g:
            raise InputError(
                f"dataset {data.name!r} has feature dims ({data.d_c}, {data.d_g}), "
                f"expected ({d_c}, {d_g})"
            )
    t0 = time.perf_counter()
    all_masks = [split(data.n, seed) for data in datasets]
    order = rng_for(seed, "pretrain-order").permutation(len(datasets))

    pooled_labels = np.concatenate([data.labels for data in datasets])
    pooled_train = np.concatenate([m.train for m in all_masks])

    best: Optional[tuple] = None
    for lr, patience in product(train_config.lrs, train_config.patiences):
        model = IOHunterModel(model_config, seed=int(rng_for(seed, "init").integers(2**31)))
        prior = _prior_logit(pooled_labels, pooled_train)
        if prior is not None:
            model.params["head.b"].data[:] = prior
        bounds = [_BoundGraphModel(model, data) for data in datasets]
        params = model.param_list()
        state = AdamState.for_params(params)
        drop_rng = rng_for(seed, "dropout", lr, patience)

        best_val = -math.inf
        best_epoch = 0
        best_snap = model.snapshot()
        since = 0
        epoch = 0
        losses: list[float] = []
        for epoch in range(1, train_config.max_epochs + 1):
            epoch_loss = 0.0
            for gi in order:
                bound = bounds[gi]
                data = datasets[gi]
                tape = Tape()
                scores = bound.forward(tape, train=True, rng=drop_rng)
                loss = ad.bce_loss(tape, scores, data.labels.astype(np.float32), all_masks[gi].train)
                ad.zero_grads(params)
                ad.backward(tape, loss)
                ad.adam_step(params, [p.grad for p in params], state, lr)
                epoch_loss += float(loss.data)
            losses.append(epoch_loss)
            vals = []
            for gi, (bound, data) in enumerate(zip(bounds, datasets)):
                scores = bound.forward(None, train=False, rng=None)
                vals.append(macro_f1(scores_to_labels(scores.data)[all_masks[gi].val], data.labels[all_masks[gi].val]))
            mean_val = float(np.mean(vals))
            if mean_val > best_val:
                best_val = mean_val
                best_epoch = epoch
                best_snap = model.snapshot()
                since = 0
            else:
                since += 1
            if since >= patience:
                break
        model.restore(best_snap)
        if best is None or best_val > best[0]:
            best = (best_val, lr, patience, epoch, best_epoch, model, losses)
    assert best is not None
    best_val, lr, patience, epochs, best_epoch, model, losses = best
    result = FitResult(
        seed=seed,
        lr=lr,
        patience=patience,
        epochs=epochs,
        best_epoch=best_epoch,
        val_f1=best_val,
        test_f1=0.0,
        model=model,
        loss_trace=losses,
        wall_time=time.perf_counter() - t0,
    )
    return model, result


@dataclass
class FinetuneResult:
    """Only-pretrain and fine-tuned scores on the target campaign."""

    only_pretrain_val: float
    only_pretrain_test: float
    finetuned_val: float
    finetuned_test: float
    lr: Optional[float]
    patience: Optional[int]
    epochs: int
    model: IOHunterModel


def finetune(
    model: IOHunterModel,
    data: GraphData,
    train_config: TrainConfig,
    seed: int,
    fraction: float = 0.001,
) -> FinetuneResult:
    """Fine-tune a pretrained model on a sparsified target train mask.

    All parameters stay trainable with a fresh optimizer. The untouched
    checkpoint is kept as a selection candidate, so the fine-tuned
    validation score never falls below the only-pretrain score.
    """
    if model.config.d_c != data.d_c or model.config.d_g != data.d_g:
        raise InputError(
            f"checkpoint feature dims ({model.config.d_c}, {model.config.d_g}) do not match "
            f"target ({data.d_c}, {data.d_g})"
        )
    masks = split(data.n, seed)
    init_snap = model.snapshot()
    only_val = evaluate(model, data, masks.val)
    only_test = evaluate(model, data, masks.test)

    sp_mask = sparsify(masks.train, fraction, seed, data.labels)
    best: Optional[tuple] = None
    for lr, patience in product(train_config.lrs, train_config.patiences):
        model.restore(init_snap)
        bound = _BoundGraphModel(model, data)
        drop_rng = rng_for(seed, "finetune-dropout", lr, patience)
        run = _train_loop(
            bound, data.labels, sp_mask, masks.val, lr, patience, train_config.max_epochs, drop_rng
        )
        if best is None or run.val_f1 > best[0]:
            best = (run.val_f1, lr, patience, run)
    assert best is not None
    best_val, lr, patience, run = best

    if best_val > only_val:
        model.restore(run.snapshot)
        ft_val, ft_test = best_val, evaluate(model, data, masks.test)
        chosen = (lr, patience, run.epochs)
    else:
        # Selection keeps the untouched checkpoint when no tuned run beats it.
        model.restore(init_snap)
        ft_val, ft_test = only_val, only_test
        chosen = (None, None, 0)
    return FinetuneResult(
        only_pretrain_val=only_val,
        only_pretrain_test=only_test,
        finetuned_val=ft_val,
        finetuned_test=ft_test,
        lr=chosen[0],
        patience=chosen[1],
        epochs=chosen[2],
        model=model,
    )


def eigenvector_centrality(
    net: FusedNetwork,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, bool]:
    """Eigenvector centrality by power iteration on A + I.

    The identity shift keeps bipartite-like graphs from oscillating
    between two phases. Starts from the uniform vector; the returned
    vector has unit L2 norm. The second element reports convergence.
    """
    n = net.n
    if n == 0:
        return np.zeros(0), True
    rows: list[int] = []
    cols: list[int] = []
    for i, j in net.edges:
        rows += [i, j]
        cols += [j, i]
    rows += list(range(n))
    cols += list(range(n))
    shifted = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))

    x = np.full(n, 1.0 / math.sqrt(n))
    for _ in range(max_iter):
        y = shifted @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return x, False
        y /= norm
        if np.max(np.abs(y - x)) < tol:
            return y, True
        x = y
    return x, False


@dataclass
class BaselineResult:
    name: str
    val_f1: float
    test_f1: float
    extra: dict = field(default_factory=dict)


def node_pruning_baseline(
    data: GraphData,
    masks: SplitMasks,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> BaselineResult:
    """Classify by centrality: IO driver iff centrality exceeds a threshold.

    The threshold is chosen over all candidate centrality values to
    maximize validation Macro-F1.
    """
    centrality, converged = eigenvector_centrality(data.net, tol=tol, max_iter=max_iter)
    if not converged:
        logger.warning("power iteration did not converge within %d iterations", max_iter)
    candidates = [-math.inf] + sorted(set(centrality.tolist()))
    best_t = -math.inf
    best_val = -math.inf
    for t in candidates:
        pred = (centrality > t).astype(np.int64)
        val = macro_f1(pred[masks.val], data.labels[masks.val])
        if val > best_val:
            best_val = val
            best_t = t
    pred = (centrality > best_t).astype(np.int64)
    test = macro_f1(pred[masks.test], data.labels[masks.test])
    return BaselineResult(
        name="node_pruning",
        val_f1=best_val,
        test_f1=test,
        extra={"threshold": best_t, "converged": converged},
    )


class MlpModel:
    """ReLU MLP over content features, sharing the training loop."""

    def __init__(self, d_in: int, width: int, n_layers: int, dropout: float, seed: int):
        self.dropout = dropout
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        rng = np.random.default_rng(seed)
        dims = [d_in] + [width] * n_layers
        for a, b in zip(dims[:-1], dims[1:]):
            self.weights.append(Tensor(glorot(rng, a, b).astype(np.float32), requires_grad=True))
            self.biases.append(Tensor(np.zeros(b, dtype=np.float32), requires_grad=True))
        self.head_w = Tensor(glorot(rng, width, 1).astype(np.float32), requires_grad=True)
        self.head_b = Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)

    def param_list(self) -> list[Tensor]:
        return self.weights + self.biases + [self.head_w, self.head_b]

    def snapshot(self):
        return {i: p.data.copy() for i, p in enumerate(self.param_list())}

    def restore(self, snap):
        for i, p in enumerate(self.param_list()):
            p.data = snap[i].copy()

    def forward_features(self, tape, x: Tensor, train: bool, rng) -> Tensor:
        h = x
        for w, b in zip(self.weights, self.biases):
            h = ad.relu(tape, ad.add_bias(tape, ad.matmul(tape, h, w), b))
            h = ad.dropout(tape, h, self.dropout, rng, train)
        logits = ad.add_bias(tape, ad.matmul(tape, h, self.head_w), self.head_b)
        return ad.sigmoid(tape, logits)


class _BoundMlp:
    def __init__(self, model: MlpModel, features: np.ndarray):
        self.model = model
        self.features = Tensor(features.astype(np.float32))

    def param_list(self):
        return self.model.param_list()

    def snapshot(self):
        return self.model.snapshot()

    def restore(self, snap):
        self.model.restore(snap)

    def forward(self, tape, train, rng):
        return self.model.forward_features(tape, self.features, train, rng)


def content_mlp_baseline(
    features: np.ndarray,
    labels: np.ndarray,
    masks: SplitMasks,
    train_config: TrainConfig,
    seed: int,
    width: int = 128,
    layer_grid: tuple[int, ...] = (2, 3, 4),
    dropout: float = 0.2,
    train_mask: Optional[np.ndarray] = None,
) -> BaselineResult:
    """Content-only MLP with the layer-count grid on top of lr/patience."""
    effective_train = masks.train if train_mask is None else train_mask
    best: Optional[tuple] = None
    for n_layers, lr, patience in product(layer_grid, train_config.lrs, train_config.patiences):
        model = MlpModel(
            features.shape[1], width, n_layers, dropout, seed=int(rng_for(seed, "mlp-init").integers(2**31))
        )
        prior = _prior_logit(labels, effective_train)
        if prior is not None:
            model.head_b.data[:] = prior
        bound = _BoundMlp(model, features)
        drop_rng = rng_for(seed, "mlp-dropout", n_layers, lr, patience)
        run = _train_loop(bound, labels, effective_train, masks.val, lr, patience, train_config.max_epochs, drop_rng)
        if best is None or run.val_f1 > best[0]:
            scores = bound.forward(None, train=False, rng=None)
            test = macro_f1(scores_to_labels(scores.data)[masks.test], labels[masks.test])
            best = (run.val_f1, test, n_layers, lr, patience, run.epochs)
    assert best is not None
    val, test, n_layers, lr, patience, epochs = best
    return BaselineResult(
        name="content_mlp",
        val_f1=val,
        test_f1=test,
        extra={"layers": n_layers, "lr": lr, "patience": patience, "epochs": epochs},
    )
