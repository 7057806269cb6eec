"""Content embeddings, the interchange format, and degree bucketing."""
import struct

import numpy as np
import pytest

from iohunter.errors import FormatError, InputError
from iohunter.features import (
    ContentEmbeddings,
    aggregate_user_content,
    degree_bucket,
    degree_onehots,
    embed_text,
    hashed_fallback_embed,
    import_embeddings,
    read_embedding_file,
    write_embeddings,
)
from iohunter.traces import TraceRecord, build_bundle

# embed_text("hello", 16) frozen at fallback scheme version 1: the three
# 3-grams land in buckets 0, 2, and 14 with signs +, -, +.
GOLDEN_HELLO_16 = np.zeros(16, dtype=np.float32)
GOLDEN_HELLO_16[[0, 2, 14]] = np.float32(1.0) / np.sqrt(np.float32(3.0)) * np.array([1, -1, 1], dtype=np.float32)


def bundle_of(texts: dict[str, list[tuple[str, str, int]]]):
    """users -> list of (post_id, text, popularity)."""
    records = []
    t = 1
    for user, posts in texts.items():
        for post_id, text, pop in posts:
            records.append(TraceRecord(post_id, user, t, text, popularity=pop))
            t += 1
    return build_bundle(records, {u: 0 for u in texts}, "t")


class TestInterchangeFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        table = {f"u{i}": rng.normal(size=4).astype(np.float32) for i in range(3)}
        p = tmp_path / "e.ioem"
        write_embeddings(p, table)
        first = p.read_bytes()
        users, vectors = read_embedding_file(p)
        write_embeddings(tmp_path / "e2.ioem", dict(zip(users, vectors)))
        assert (tmp_path / "e2.ioem").read_bytes() == first

    def test_absent_users_get_zero_vectors(self, tmp_path):
        bundle = bundle_of({"a": [("p1", "x", 0)], "b": [("p2", "y", 0)], "c": [("p3", "z", 0)]})
        p = tmp_path / "e.ioem"
        write_embeddings(p, {"a": np.ones(4, dtype=np.float32), "c": np.full(4, 2.0, dtype=np.float32)})
        emb = import_embeddings(p, bundle)
        assert emb.missing == 1
        assert np.array_equal(emb.vectors[bundle.index["b"]], np.zeros(4))
        assert np.array_equal(emb.vectors[bundle.index["c"]], np.full(4, 2.0))

    def test_imported_vectors_keep_native_norm(self, tmp_path):
        bundle = bundle_of({"a": [("p1", "x", 0)]})
        p = tmp_path / "e.ioem"
        write_embeddings(p, {"a": np.full(4, 3.0, dtype=np.float32)})
        emb = import_embeddings(p, bundle)
        assert np.linalg.norm(emb.vectors[0]) == pytest.approx(6.0)

    def test_bad_magic_fatal(self, tmp_path):
        p = tmp_path / "e.ioem"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError, match="magic"):
            read_embedding_file(p)

    def test_truncated_file_fatal(self, tmp_path):
        p = tmp_path / "e.ioem"
        write_embeddings(p, {"a": np.ones(4, dtype=np.float32)})
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError, match="truncated"):
            read_embedding_file(p)

    def test_unsorted_records_fatal(self, tmp_path):
        p = tmp_path / "e.ioem"
        with p.open("wb") as fh:
            fh.write(b"IOEM")
            fh.write(struct.pack("<IIQ", 1, 2, 2))
            for user in ["b", "a"]:
                fh.write(struct.pack("<H", 1))
                fh.write(user.encode())
                fh.write(np.zeros(2, dtype="<f4").tobytes())
        with pytest.raises(FormatError, match="sorted"):
            read_embedding_file(p)

    def test_unknown_user_fatal(self, tmp_path):
        bundle = bundle_of({"a": [("p1", "x", 0)]})
        p = tmp_path / "e.ioem"
        write_embeddings(p, {"zz": np.ones(4, dtype=np.float32)})
        with pytest.raises(InputError, match="not in bundle"):
            import_embeddings(p, bundle)


class TestHashedFallback:
    def test_identical_texts_identical_vectors(self):
        bundle = bundle_of({"a": [("p1", "same words", 0)], "b": [("p2", "same words", 0)]})
        emb = hashed_fallback_embed(bundle, 16)
        assert np.array_equal(emb.vectors[0], emb.vectors[1])

    def test_empty_text_zero_vector(self):
        bundle = bundle_of({"a": [("p1", "", 0)]})
        emb = hashed_fallback_embed(bundle, 16)
        assert np.array_equal(emb.vectors[0], np.zeros(16))

    def test_golden_hello_vector(self):
        assert np.array_equal(embed_text("hello", 16), GOLDEN_HELLO_16)

    def test_fallback_vectors_unit_norm(self):
        bundle = bundle_of({"a": [("p1", "abc def", 1), ("p2", "xyzw", 2)]})
        emb = hashed_fallback_embed(bundle, 16)
        assert np.linalg.norm(emb.vectors[0]) == pytest.approx(1.0, abs=1e-6)

    def test_d_c_minimum(self):
        bundle = bundle_of({"a": [("p1", "x", 0)]})
        with pytest.raises(InputError, match="d_c"):
            hashed_fallback_embed(bundle, 4)

    def test_rerun_bit_identical(self):
        bundle = bundle_of({"a": [("p1", "hello world", 0)], "b": [("p2", "other", 0)]})
        e1 = hashed_fallback_embed(bundle, 32)
        e2 = hashed_fallback_embed(bundle, 32)
        assert np.array_equal(e1.vectors, e2.vectors)


class TestAggregation:
    def test_single_post_passthrough(self):
        v = np.array([[1.0, 2.0]])
        out = aggregate_user_content(v, [5], ["p1"], mode="all")
        assert np.allclose(out, [1.0, 2.0])

    def test_opposite_posts_cancel(self):
        v = np.array([[1.0, -1.0], [-1.0, 1.0]])
        out = aggregate_user_content(v, [1, 2], ["p1", "p2"], mode="all")
        assert np.allclose(out, 0.0)

    def test_top5_with_popularity_ties_broken_by_post_id(self):
        # 7 posts; popularity picks p2,p4,p5,p6 then the tie at 3 between
        # p1 and p3 resolves lexicographically to p1.
        vectors = np.eye(7)
        popularity = [3, 9, 3, 8, 7, 6, 1]
        post_ids = ["p1", "p2", "p3", "p4", "p5", "p6", "p7"]
        out = aggregate_user_content(vectors, popularity, post_ids, mode="top_k_popular", k=5)
        chosen = sorted([1, 3, 4, 5, 0])
        expected = vectors[chosen].mean(axis=0)
        assert np.allclose(out, expected)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=(5, 3))
        out1 = aggregate_user_content(v, [0] * 5, [f"p{i}" for i in range(5)], mode="all")
        perm = rng.permutation(5)
        out2 = aggregate_user_content(v[perm], [0] * 5, [f"p{i}" for i in perm], mode="all")
        assert np.allclose(out1, out2)


class TestDegreeBuckets:
    @pytest.mark.parametrize("degree,expected", [(0, 0), (1, 1), (7, 3), (8, 3), (14, 3), (15, 4)])
    def test_log2_formula(self, degree, expected):
        assert degree_bucket(degree, 32) == expected

    def test_clamped_at_d_g(self):
        assert degree_bucket(10**6, 16) == 15

    def test_monotone_in_degree(self):
        buckets = [degree_bucket(d, 8) for d in range(2000)]
        assert all(a <= b for a, b in zip(buckets, buckets[1:]))

    def test_exactly_one_hot(self):
        onehots = degree_onehots([0, 3, 77, 10**6], 16)
        assert np.array_equal(onehots.sum(axis=1), np.ones(4))

    def test_equal_frequency_scheme(self):
        degrees = list(range(100))
        onehots = degree_onehots(degrees, 4, scheme="equal_freq")
        counts = onehots.sum(axis=0)
        assert counts.max() - counts.min() <= 2
