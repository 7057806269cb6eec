"""Behavioral similarity networks and their fusion.

Each trace kind induces a user-entity bipartite graph; TF-IDF weighting
plus cosine projection turns it into a user-user similarity network, and
the fused network is the edge union across all layers. Edges always store
i < j.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, InputError
from .traces import DatasetBundle

CO_URL = "co_url"
CO_HASHTAG = "co_hashtag"
CO_RETWEET = "co_retweet"
FAST_RETWEET = "fast_retweet"
TEXT_SIMILARITY = "text_similarity"

BIPARTITE_KINDS = (CO_URL, CO_HASHTAG, CO_RETWEET, FAST_RETWEET)
ALL_KINDS = BIPARTITE_KINDS + (TEXT_SIMILARITY,)
LAYER_BIT = {kind: 1 << i for i, kind in enumerate(ALL_KINDS)}

# Retweets slower than this many seconds do not count as automation-like.
FAST_RETWEET_MAX_LATENCY = 10

# Above this node count the projection falls back to a dict accumulator
# instead of a dense n x n buffer (4096^2 float64 is ~134 MB).
DENSE_ACCUMULATOR_LIMIT = 4096


@dataclass
class BipartiteGraph:
    """Raw user-entity share counts for one trace kind."""

    trace_kind: str
    n: int
    entities: list[str]
    counts: list[dict[int, int]]  # per user: entity index -> count > 0


@dataclass
class SimilarityNetwork:
    """Weighted undirected user-user graph from one trace kind."""

    trace_kind: str
    n: int
    edges: dict[tuple[int, int], float]
    tau: float

    def weight(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        return self.edges.get(key, 0.0)


@dataclass
class FusedNetwork:
    """Union of similarity layers; the graph the GNN runs on.

    Every edge carries a provenance bitmask (one bit per contributing
    layer) and the maximum weight seen across layers.
    """

    n: int
    edges: dict[tuple[int, int], tuple[int, float]]
    _neighbors: Optional[list[list[int]]] = field(default=None, repr=False)

    def neighbor_lists(self) -> list[list[int]]:
        if self._neighbors is None:
            nbrs: list[list[int]] = [[] for _ in range(self.n)]
            for i, j in self.edges:
                nbrs[i].append(j)
                nbrs[j].append(i)
            for lst in nbrs:
                lst.sort()
            self._neighbors = nbrs
        return self._neighbors

    @property
    def edge_count(self) -> int:
        return len(self.edges)


def build_bipartite(bundle: DatasetBundle, kind: str) -> BipartiteGraph:
    """Count per-user entity shares for one bipartite trace kind."""
    if kind not in BIPARTITE_KINDS:
        raise InputError(f"unknown bipartite trace kind {kind!r}")
    entities: list[str] = []
    entity_index: dict[str, int] = {}
    counts: list[dict[int, int]] = [{} for _ in range(bundle.n)]

    def bump(user_idx: int, entity: str) -> None:
        eid = entity_index.get(entity)
        if eid is None:
            eid = len(entities)
            entity_index[entity] = eid
            entities.append(entity)
        row = counts[user_idx]
        row[eid] = row.get(eid, 0) + 1

    for rec in bundle.records:
        uid = bundle.index[rec.user_id]
        if kind == CO_URL:
            for url in rec.urls:
                bump(uid, url)
        elif kind == CO_HASHTAG:
            for tag in rec.hashtags:
                bump(uid, tag)
        elif rec.retweeted_post_id is not None:
            if kind == CO_RETWEET:
                bump(uid, rec.retweeted_post_id)
            elif rec.retweet_latency <= FAST_RETWEET_MAX_LATENCY:
                bump(uid, rec.retweeted_post_id)
    return BipartiteGraph(trace_kind=kind, n=bundle.n, entities=entities, counts=counts)


def tfidf(bg: BipartiteGraph) -> list[dict[int, float]]:
    """TF-IDF weight count * ln(n/df), then L2-normalize each user vector.

    Entities shared by every user get idf 0 and are dropped from the
    sparse vectors, so they can never induce an edge. Zero vectors stay
    zero.
    """
    n = bg.n
    df = np.zeros(len(bg.entities), dtype=np.int64)
    for row in bg.counts:
        for eid in row:
            df[eid] += 1
    idf = np.zeros(len(bg.entities), dtype=np.float64)
    nonzero = df > 0
    idf[nonzero] = np.log(n / df[nonzero])

    vectors: list[dict[int, float]] = []
    for row in bg.counts:
        weighted = {eid: cnt * idf[eid] for eid, cnt in row.items() if idf[eid] > 0.0}
        norm = math.sqrt(sum(w * w for w in weighted.values()))
        if norm > 0:
            weighted = {eid: w / norm for eid, w in weighted.items()}
        vectors.append(weighted)
    return vectors


def project_similarity(
    vectors: Sequence[dict[int, float]],
    tau: float = 0.0,
    trace_kind: str = "",
    dense_limit: int = DENSE_ACCUMULATOR_LIMIT,
    top_percentile: Optional[float] = None,
) -> SimilarityNetwork:
    """Cosine projection via an inverted index over entities.

    Only user pairs sharing at least one non-zero-idf entity are scored;
    an edge exists when the dot product exceeds tau. Accumulation runs
    over posting lists in entity order, so results are deterministic.
    top_percentile, when set, additionally keeps only the edges at or
    above that percentile of the surviving weights.
    """
    n = len(vectors)
    posting: dict[int, list[tuple[int, float]]] = {}
    for user, vec in enumerate(vectors):
        for eid, w in vec.items():
            posting.setdefault(eid, []).append((user, w))

    edges: dict[tuple[int, int], float] = {}
    if n <= dense_limit:
        sims = np.zeros((n, n), dtype=np.float64)
        for eid in sorted(posting):
            plist = posting[eid]
            if len(plist) < 2:
                continue
            idx = np.fromiter((u for u, _ in plist), dtype=np.int64, count=len(plist))
            w = np.fromiter((x for _, x in plist), dtype=np.float64, count=len(plist))
            sims[np.ix_(idx, idx)] += np.outer(w, w)
        ii, jj = np.nonzero(np.triu(sims, k=1) > tau)
        for i, j in zip(ii.tolist(), jj.tolist()):
            edges[(i, j)] = float(sims[i, j])
    else:
        acc: dict[tuple[int, int], float] = {}
        for eid in sorted(posting):
            plist = posting[eid]
            for a in range(len(plist)):
                ua, wa = plist[a]
                for b in range(a + 1, len(plist)):
                    ub, wb = plist[b]
                    key = (ua, ub) if ua < ub else (ub, ua)
                    acc[key] = acc.get(key, 0.0) + wa * wb
        edges = {key: w for key, w in acc.items() if w > tau}
    if top_percentile is not None and edges:
        if not 0.0 <= top_percentile <= 100.0:
            raise InputError(f"top_percentile must be in [0, 100], got {top_percentile}")
        cut = float(np.percentile(np.fromiter(edges.values(), dtype=np.float64), top_percentile))
        edges = {key: w for key, w in edges.items() if w >= cut}
    return SimilarityNetwork(trace_kind=trace_kind, n=n, edges=edges, tau=tau)


def text_similarity_network(
    embeddings: np.ndarray,
    tau_text: float = 0.7,
    block: int = 1024,
) -> SimilarityNetwork:
    """Exact all-pairs cosine network over content embeddings.

    Users with zero (empty-content) vectors never get edges. Rows are
    normalized internally, so callers may pass unnormalized embeddings.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    n = emb.shape[0]
    norms = np.linalg.norm(emb, axis=1)
    active = norms > 0
    unit = np.zeros_like(emb)
    unit[active] = emb[active] / norms[active, None]

    edges: dict[tuple[int, int], float] = {}
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = unit[start:stop] @ unit.T
        for local_i in range(stop - start):
            i = start + local_i
            if not active[i]:
                continue
            row = sims[local_i]
            for j in np.nonzero(row[i + 1 :] >= tau_text)[0] + i + 1:
                if active[j]:
                    edges[(i, int(j))] = float(row[int(j)])
    return SimilarityNetwork(trace_kind=TEXT_SIMILARITY, n=n, edges=edges, tau=tau_text)


def fuse(layers: Sequence[SimilarityNetwork]) -> FusedNetwork:
    """Union the layers: an edge exists if it exists in any of them."""
    if not layers:
        raise InputError("fuse needs at least one layer")
    n = layers[0].n
    for layer in layers:
        if layer.n != n:
            raise InputError(f"layer {layer.trace_kind!r} has n={layer.n}, expected {n}")
    fused: dict[tuple[int, int], tuple[int, float]] = {}
    for layer in layers:
        bit = LAYER_BIT.get(layer.trace_kind, 0)
        if bit == 0:
            raise InputError(f"layer has unknown trace kind {layer.trace_kind!r}")
        for key, w in layer.edges.items():
            mask, best = fused.get(key, (0, 0.0))
            fused[key] = (mask | bit, max(best, w))
    return FusedNetwork(n=n, edges=fused)


def degrees(net: FusedNetwork) -> list[int]:
    """Per-node degree in the fused network; isolated nodes have 0."""
    return [len(nbrs) for nbrs in net.neighbor_lists()]


def edge_homophily(net: FusedNetwork, labels: Sequence[int]) -> tuple[float, float]:
    """Plain and class-insensitive edge homophily of a labeled network.

    Plain homophily is the fraction of edges joining same-label
    endpoints. The class-insensitive score averages each class's excess
    of within-class edge endpoints over its node share, floored at zero.
    Both are 0.0 for an edgeless network.
    """
    labels = list(labels)
    if len(labels) != net.n:
        raise InputError(f"labels cover {len(labels)} nodes, network has {net.n}")
    if not net.edges:
        return 0.0, 0.0

    same = 0
    for i, j in net.edges:
        if labels[i] < 0 or labels[j] < 0:
            raise InputError(f"edge ({i},{j}) touches an unlabeled node")
        if labels[i] == labels[j]:
            same += 1
    plain = same / len(net.edges)

    classes = sorted(set(labels))
    if len(classes) < 2:
        return plain, 0.0
    n = net.n
    deg_total = {c: 0 for c in classes}
    deg_same = {c: 0 for c in classes}
    for i, j in net.edges:
        deg_total[labels[i]] += 1
        deg_total[labels[j]] += 1
        if labels[i] == labels[j]:
            deg_same[labels[i]] += 2
    excess = 0.0
    for c in classes:
        share = labels.count(c) / n
        h_c = deg_same[c] / deg_total[c] if deg_total[c] else 0.0
        excess += max(0.0, h_c - share)
    insensitive = excess / (len(classes) - 1)
    return plain, insensitive


def write_edge_csv(net: FusedNetwork | SimilarityNetwork, path: str | Path) -> None:
    """Export edges as ``src,dst,weight,provenance_mask`` with node indices."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["src", "dst", "weight", "provenance_mask"])
        if isinstance(net, FusedNetwork):
            for (i, j) in sorted(net.edges):
                mask, w = net.edges[(i, j)]
                writer.writerow([i, j, repr(w), mask])
        else:
            bit = LAYER_BIT.get(net.trace_kind, 0)
            for (i, j) in sorted(net.edges):
                writer.writerow([i, j, repr(net.edges[(i, j)]), bit])


def read_edge_csv(path: str | Path, n: Optional[int] = None) -> FusedNetwork:
    """Import a fused network from the edge-list CSV format."""
    path = Path(path)
    edges: dict[tuple[int, int], tuple[int, float]] = {}
    max_node = -1
    with path.open("r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"src", "dst", "weight", "provenance_mask"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise FormatError(f"{path}: expected header src,dst,weight,provenance_mask")
        for row in reader:
            i, j = int(row["src"]), int(row["dst"])
            if i == j:
                raise FormatError(f"{path}: self-loop on node {i}")
            if i > j:
                i, j = j, i
            mask = int(row["provenance_mask"])
            if mask == 0:
                raise FormatError(f"{path}: zero provenance mask on edge ({i},{j})")
            edges[(i, j)] = (mask, float(row["weight"]))
            max_node = max(max_node, j)
    if n is None:
        n = max_node + 1
    elif max_node >= n:
        raise InputError(f"{path}: edge references node {max_node}, but n={n}")
    return FusedNetwork(n=n, edges=edges)


def build_all_layers(
    bundle: DatasetBundle,
    content: Optional[np.ndarray] = None,
    tau: float = 0.0,
    tau_text: float = 0.7,
    top_percentile: Optional[float] = None,
) -> list[SimilarityNetwork]:
    """Build the four trace layers plus, if content is given, the text layer."""
    layers = [
        project_similarity(
            tfidf(build_bipartite(bundle, kind)),
            tau=tau,
            trace_kind=kind,
            top_percentile=top_percentile,
        )
        for kind in BIPARTITE_KINDS
    ]
    if content is not None:
        layers.append(text_similarity_network(content, tau_text=tau_text))
    return layers
