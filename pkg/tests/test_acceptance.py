"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line. The headline scores of the original
study are not reproducible at desk scale, so these criteria check oracle
agreement, qualitative orderings, and determinism on synthetic campaigns,
per the build contract.
"""
import json
import time
from itertools import product

import numpy as np
import pytest

from iohunter.autodiff import Tape, Tensor, backward, bce_loss, zero_grads
from iohunter.cli import main as cli_main
from iohunter.features import degree_onehots, hashed_fallback_embed
from iohunter.model import IOHunterModel, ModelConfig, ablate, normalized_adjacency
from iohunter.simnet import (
    CO_HASHTAG,
    CO_RETWEET,
    CO_URL,
    BipartiteGraph,
    FusedNetwork,
    SimilarityNetwork,
    build_all_layers,
    degrees,
    fuse,
    project_similarity,
    tfidf,
)
from iohunter.synth import SynthConfig, generate, preset
from iohunter.train import (
    TrainConfig,
    eigenvector_centrality,
    finetune,
    fit,
    fit_report,
    graph_data,
    macro_f1,
    pretrain,
    sparsify,
    split,
    sweep_sparsity,
)

_shared: dict = {}


def verdict(name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def benchmark():
    bundle = generate(preset("benchmark", seed=0))
    emb = hashed_fallback_embed(bundle, 64)
    net = fuse(build_all_layers(bundle, content=emb.vectors))
    return graph_data(bundle, emb, net, d_g=32)


# Sage over the dense fused graph, with the paper's learning-rate pair as
# the per-seed selection grid; patience is fixed to keep the suite within
# a desk-scale time budget.
BENCH_MODEL = ModelConfig(d_c=64, d_g=32, d=128, dropout=0.2, conv="sage")
BENCH_TRAIN = TrainConfig(lrs=(1e-2, 1e-3), patiences=(25,), max_epochs=1000)


class TestGradientFidelity:
    def test_full_model_matches_central_differences(self):
        started = time.perf_counter()
        rng = np.random.default_rng(2024)
        n = 30
        edges = {}
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.18:
                    edges[(i, j)] = (1, 1.0)
        ops = normalized_adjacency(FusedNetwork(n=n, edges=edges))
        model = IOHunterModel(ModelConfig(d_c=8, d_g=4, d=16, dropout=0.0), seed=7, dtype=np.float64)
        content = rng.normal(size=(n, 8))
        context = np.zeros((n, 4))
        context[np.arange(n), rng.integers(0, 4, n)] = 1.0
        labels = rng.integers(0, 2, n).astype(np.float64)

        def loss_value():
            scores = model.forward(None, Tensor(content), Tensor(context), ops)
            clamped = np.clip(scores.data.reshape(-1), 1e-7, 1 - 1e-7)
            return float(np.mean(-(labels * np.log(clamped) + (1 - labels) * np.log(1 - clamped))))

        tape = Tape()
        scores = model.forward(tape, Tensor(content), Tensor(context), ops)
        loss = bce_loss(tape, scores, labels, np.ones(n, dtype=bool))
        params = model.param_list()
        zero_grads(params)
        backward(tape, loss)

        h = 1e-5
        worst = 0.0
        checked = 0
        for name in model.param_names():
            p = model.params[name]
            grad = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
            flat = p.data.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                hi = loss_value()
                flat[k] = orig - h
                lo = loss_value()
                flat[k] = orig
                fd = (hi - lo) / (2 * h)
                # Relative error with a 1e-6 floor: below that scale both
                # routes agree to ~1e-11 absolute and the ratio is noise.
                worst = max(worst, abs(fd - grad[k]) / max(abs(fd), abs(grad[k]), 1e-6))
                checked += 1
        elapsed = time.perf_counter() - started
        verdict(
            "gradient-fidelity",
            worst < 1e-4 and elapsed < 30.0,
            f"{checked} params, max rel err {worst:.2e}, {elapsed:.1f}s",
        )


class TestSimilarityOracle:
    def test_sparse_projection_equals_dense_brute_force(self):
        started = time.perf_counter()
        rng = np.random.default_rng(42)
        mismatches = 0
        worst_weight_gap = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 21))
            n_entities = int(rng.integers(1, 16))
            counts = (rng.random((n, n_entities)) < 0.3) * rng.integers(1, 4, size=(n, n_entities))
            rows = [
                {int(e): int(c) for e, c in enumerate(counts[i]) if c} for i in range(n)
            ]
            bg = BipartiteGraph("co_url", n, [f"e{k}" for k in range(n_entities)], rows)
            vectors = tfidf(bg)

            df = (counts > 0).sum(axis=0)
            idf = np.zeros(n_entities)
            idf[df > 0] = np.log(n / df[df > 0])
            weights = counts * idf
            dense = np.zeros_like(weights, dtype=np.float64)
            for i in range(n):
                norm = np.linalg.norm(weights[i])
                if norm > 0:
                    dense[i] = weights[i] / norm
            sims = dense @ dense.T
            for tau in (0.0, 0.1, 0.5):
                net = project_similarity(vectors, tau=tau)
                expected = {
                    (i, j): sims[i, j]
                    for i in range(n)
                    for j in range(i + 1, n)
                    if sims[i, j] > tau
                }
                if set(net.edges) != set(expected):
                    mismatches += 1
                    continue
                for key, w in expected.items():
                    worst_weight_gap = max(worst_weight_gap, abs(net.edges[key] - w))
        elapsed = time.perf_counter() - started
        verdict(
            "similarity-oracle",
            mismatches == 0 and worst_weight_gap < 1e-9 and elapsed < 10.0,
            f"200 instances x 3 taus, weight gap {worst_weight_gap:.1e}, {elapsed:.1f}s",
        )


class TestFusionUnion:
    def test_union_oracle_and_permutation_invariance(self):
        rng = np.random.default_rng(5)
        failures = 0
        for _ in range(50):
            layers = []
            union = set()
            for kind in (CO_URL, CO_HASHTAG, CO_RETWEET):
                edges = {}
                for _ in range(int(rng.integers(0, 20))):
                    i, j = sorted(rng.choice(12, size=2, replace=False).tolist())
                    edges[(i, j)] = float(rng.random())
                union |= set(edges)
                layers.append(SimilarityNetwork(kind, 12, edges, 0.0))
            fused = fuse(layers)
            if set(fused.edges) != union:
                failures += 1
            perm = rng.permutation(len(layers))
            if fuse([layers[i] for i in perm]).edges != fused.edges:
                failures += 1
        verdict("fusion-union", failures == 0, "50 random layer sets, union + permutation")


class TestMetricOracle:
    def test_macro_f1_against_confusion_matrix(self):
        rng = np.random.default_rng(99)
        exact = True
        for _ in range(1000):
            n = int(rng.integers(1, 101))
            pred = rng.integers(0, 2, n)
            true = rng.integers(0, 2, n)
            matrix = [[0, 0], [0, 0]]
            for p, t in zip(pred.tolist(), true.tolist()):
                matrix[t][p] += 1
            scores = []
            for cls in (0, 1):
                tp = matrix[cls][cls]
                fp = matrix[1 - cls][cls]
                fn = matrix[cls][1 - cls]
                denom = 2 * tp + fp + fn
                scores.append(2 * tp / denom if denom else 0.0)
            if macro_f1(pred, true) != sum(scores) / 2:
                exact = False
                break
        analytic = macro_f1([0] * 100, [0] * 90 + [1] * 10)
        ok = exact and abs(analytic - 0.47368) <= 1e-5
        verdict("metric-oracle", ok, f"1000 random pairs exact, all-majority {analytic:.5f}")


class TestBlendEquations:
    def test_scalar_reimplementation_over_100_draws(self):
        d_c, d_g, d = 6, 4, 8
        worst = 0.0
        rng = np.random.default_rng(31)
        for draw in range(100):
            model = IOHunterModel(ModelConfig(d_c=d_c, d_g=d_g, d=d, dropout=0.0), seed=draw, dtype=np.float64)
            p = {k: t.data for k, t in model.params.items()}
            c = rng.normal(size=d_c)
            g = rng.normal(size=d_g)

            def lin_relu(w, b, x):
                out = []
                for k in range(d):
                    acc = b[k]
                    for a in range(len(x)):
                        acc += x[a] * w[a][k]
                    out.append(max(0.0, acc))
                return out

            ct = lin_relu(p["fusion.w_content"], p["fusion.b_content"], c)
            gt = lin_relu(p["fusion.w_context"], p["fusion.b_context"], g)
            ac = lin_relu(p["fusion.w_gate_content"], p["fusion.b_gate_content"], g)
            ag = lin_relu(p["fusion.w_gate_context"], p["fusion.b_gate_context"], c)
            z = [ac[k] * ct[k] for k in range(d)] + [ag[k] * gt[k] for k in range(d)]
            h1 = lin_relu(p["fusion.w_refine1"], p["fusion.b_refine1"], z)
            expected = lin_relu(p["fusion.w_refine2"], p["fusion.b_refine2"], h1)

            got = model.fuse_modalities(None, Tensor(c.reshape(1, -1)), Tensor(g.reshape(1, -1)))
            worst = max(worst, float(np.max(np.abs(got.data[0] - np.array(expected)))))
        verdict("blend-equations", worst < 1e-6, f"100 draws, max abs gap {worst:.1e}")


class TestEndToEndDetection:
    def test_benchmark_detection(self):
        started = time.perf_counter()
        bundle = generate(preset("benchmark", seed=0))
        emb = hashed_fallback_embed(bundle, 64)
        net = fuse(build_all_layers(bundle, content=emb.vectors))
        data = graph_data(bundle, emb, net, d_g=32)
        report, _ = fit_report(data, BENCH_MODEL, BENCH_TRAIN, seeds=range(5))
        elapsed = time.perf_counter() - started
        _shared["benchmark_data"] = data
        _shared["benchmark_full_report"] = report
        passing = sum(1 for r in report.runs if r.test_f1 >= 0.95)
        within_epochs = all(r.epochs <= 1000 for r in report.runs)
        verdict(
            "end-to-end-detection",
            passing >= 4 and within_epochs and elapsed < 300.0,
            f"{passing}/5 seeds >= 0.95 (mean {report.mean():.4f}), {elapsed:.0f}s",
        )


class TestAblationOrdering:
    def test_full_model_dominates_variants(self, benchmark):
        full_report = _shared.get("benchmark_full_report")
        if full_report is None:
            full_report, _ = fit_report(benchmark, BENCH_MODEL, BENCH_TRAIN, seeds=range(5))
        means = {"full": full_report.mean()}
        for ablation in ("no_crossattn", "no_graph", "no_text"):
            report, _ = fit_report(benchmark, ablate(BENCH_MODEL, ablation), BENCH_TRAIN, seeds=range(5))
            means[ablation] = report.mean()
        ok = all(means["full"] >= means[v] for v in ("no_crossattn", "no_graph", "no_text"))
        verdict(
            "ablation-ordering",
            ok,
            " ".join(f"{k}={v:.4f}" for k, v in means.items()),
        )


class TestSparsityRobustness:
    def test_one_percent_within_15_points(self, benchmark):
        # The full configured grid runs at every sparsity level.
        rows = sweep_sparsity(benchmark, BENCH_MODEL, BENCH_TRAIN, seeds=range(5))
        by_fraction: dict = {}
        for row in rows:
            by_fraction.setdefault(row["fraction"], []).append(row["test_f1"])
        required = {0.001, 0.01, 0.05, 0.10, 0.25, 0.50}
        covered = required.issubset(by_fraction)
        mean_1pct = float(np.mean(by_fraction[0.01]))
        mean_full = float(np.mean(by_fraction[1.0]))
        gap = (mean_full - mean_1pct) * 100
        _shared["sparsity_rows"] = rows
        verdict(
            "sparsity-robustness",
            covered and gap <= 15.0,
            f"1%={mean_1pct:.4f} vs 100%={mean_full:.4f}, gap {gap:.1f} points, "
            f"{len(by_fraction)} fractions",
        )


class TestCrossCampaignTransfer:
    def test_pretrain_finetune_ordering(self):
        def make_country(tag, prop, seed, n=800):
            n_io = round(prop * n)
            cfg = SynthConfig(
                name=tag, n_organic=n - n_io, n_io=n_io,
                organic_url_pool=480, organic_hashtag_pool=280, organic_template_pool=120,
                vocab_tag=tag, seed=seed,
            )
            b = generate(cfg)
            e = hashed_fallback_embed(b, 64)
            nt = fuse(build_all_layers(b, content=e.vectors))
            return graph_data(b, e, nt, d_g=32)

        props = [0.15, 0.20, 0.25, 0.30, 0.35]
        countries = [make_country(f"cty{i}", p, seed=100 + i) for i, p in enumerate(props)]
        target = countries[2]
        sources = [c for i, c in enumerate(countries) if i != 2]
        ordered = 0
        rows = []
        for seed in range(5):
            model, _ = pretrain(sources, BENCH_MODEL, BENCH_TRAIN, seed=seed)
            result = finetune(model, target, BENCH_TRAIN, seed=seed, fraction=0.001)
            masks = split(target.n, seed)
            scratch_mask = sparsify(masks.train, 0.001, seed, target.labels)
            scratch = fit(target, masks, BENCH_MODEL, BENCH_TRAIN, seed=seed, train_mask=scratch_mask)
            ok = result.finetuned_test >= result.only_pretrain_test >= scratch.test_f1
            ordered += ok
            rows.append(
                f"seed{seed}: {scratch.test_f1:.3f} <= {result.only_pretrain_test:.3f} "
                f"<= {result.finetuned_test:.3f} [{'ok' if ok else 'x'}]"
            )
        verdict("cross-campaign-transfer", ordered >= 4, f"{ordered}/5 ordered; " + "; ".join(rows))


class TestCentralityBaseline:
    def test_against_dense_oracle_and_analytic_cases(self):
        def dense_oracle(adj, tol=1e-10, max_iter=10_000):
            n = adj.shape[0]
            m = adj + np.eye(n)
            x = np.full(n, 1.0 / np.sqrt(n))
            for _ in range(max_iter):
                y = m @ x
                y /= np.linalg.norm(y)
                if np.max(np.abs(y - x)) < tol:
                    return y
                x = y
            return x

        rng = np.random.default_rng(77)
        worst = 0.0
        for _ in range(20):
            n = int(rng.integers(5, 51))
            adj = np.zeros((n, n))
            edges = {}
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.25:
                        edges[(i, j)] = (1, 1.0)
                        adj[i, j] = adj[j, i] = 1.0
            centrality, _ = eigenvector_centrality(FusedNetwork(n=n, edges=edges))
            worst = max(worst, float(np.max(np.abs(centrality - dense_oracle(adj)))))

        star, _ = eigenvector_centrality(
            FusedNetwork(n=8, edges={(0, i): (1, 1.0) for i in range(1, 8)})
        )
        star_gap = abs(star[0] / star[1] - np.sqrt(7))
        cycle_edges = {}
        for i in range(9):
            a, b = sorted((i, (i + 1) % 9))
            cycle_edges[(a, b)] = (1, 1.0)
        cycle, _ = eigenvector_centrality(FusedNetwork(n=9, edges=cycle_edges))
        cycle_gap = float(cycle.max() - cycle.min())
        ok = worst < 1e-6 and star_gap < 1e-8 and cycle_gap < 1e-8
        verdict(
            "centrality-baseline",
            ok,
            f"random gap {worst:.1e}, star {star_gap:.1e}, cycle {cycle_gap:.1e}",
        )


class TestDeterminism:
    def test_repeated_command_bit_identical_reports(self, tmp_path, capsys):
        out = str(tmp_path / "runs")
        ini = tmp_path / "fast.ini"
        ini.write_text(
            "[train]\nlrs = 0.001\npatiences = 8\nmax_epochs = 40\nseeds = 2\n", encoding="utf-8"
        )
        assert cli_main(["synth", "--preset", "tiny", "--seed", "0", "--out", out]) == 0
        data = capsys.readouterr().out.strip().splitlines()[-1]
        assert cli_main(["embed", "--data", data, "--d-c", "32", "--out", out]) == 0
        embed = capsys.readouterr().out.strip().splitlines()[-1]
        assert cli_main(["build-net", "--data", data, "--embed", embed, "--out", out]) == 0
        net = capsys.readouterr().out.strip().splitlines()[-1]
        argv = ["train", "--net", net, "--config", str(ini), "--out", out]
        assert cli_main(argv) == 0
        train_dir = capsys.readouterr().out.strip().splitlines()[0]
        from pathlib import Path

        metrics = Path(train_dir) / "metrics.json"
        report_csv = Path(train_dir) / "report.csv"
        first = (metrics.read_bytes(), report_csv.read_bytes())
        # Cached re-run.
        assert cli_main(argv) == 0
        capsys.readouterr()
        cached = (metrics.read_bytes(), report_csv.read_bytes())
        # Forced recompute.
        (Path(train_dir) / "meta.json").unlink()
        assert cli_main(argv) == 0
        capsys.readouterr()
        recomputed = (metrics.read_bytes(), report_csv.read_bytes())
        ok = first == cached == recomputed
        verdict("determinism", ok, "cached and recomputed metric reports byte-identical")


class TestRealDataOptional:
    def test_table1_statistics(self):
        pytest.skip(
            "optional criterion: public campaign datasets are not bundled; "
            "ingest them and compare Table-level statistics manually"
        )
