"""Per-user content embeddings and degree one-hot contextual features.

Content vectors either arrive through the binary interchange format
(produced by an offline encoder export) or come from the built-in hashed
3-gram fallback, which keeps the whole pipeline runnable without any
neural encoder.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InputError
from .traces import DatasetBundle

logger = logging.getLogger(__name__)

IOEM_MAGIC = b"IOEM"
IOEM_VERSION = 1

DEFAULT_D_G = 32
FALLBACK_VERSION = 1  # bump if the 3-gram hashing scheme changes


@dataclass
class ContentEmbeddings:
    """Per-node content vectors c_i in node-index order."""

    vectors: np.ndarray  # (n, d_c) float32
    source: str  # "imported" or "hashed-fallback"
    missing: int = 0  # bundle users absent from an imported file

    @property
    def d_c(self) -> int:
        return int(self.vectors.shape[1])


def write_embeddings(path: str | Path, table: dict[str, np.ndarray]) -> None:
    """Write the binary interchange file; records are sorted by user id."""
    if not table:
        raise InputError("refusing to write an embedding file with zero records")
    d_c = None
    for vec in table.values():
        if d_c is None:
            d_c = int(np.asarray(vec).shape[0])
        elif int(np.asarray(vec).shape[0]) != d_c:
            raise InputError("embedding vectors disagree on dimensionality")
    with Path(path).open("wb") as fh:
        fh.write(IOEM_MAGIC)
        fh.write(struct.pack("<IIQ", IOEM_VERSION, d_c, len(table)))
        for user in sorted(table):
            encoded = user.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(np.asarray(table[user], dtype="<f4").tobytes())


def read_embedding_file(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read the interchange file back as (user_ids, matrix), validating layout."""
    blob = Path(path).read_bytes()
    if blob[:4] != IOEM_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 20:
        raise FormatError(f"{path}: truncated header")
    version, d_c, count = struct.unpack_from("<IIQ", blob, 4)
    if version != IOEM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if d_c < 1:
        raise FormatError(f"{path}: invalid dimensionality {d_c}")
    users: list[str] = []
    vectors = np.empty((count, d_c), dtype=np.float32)
    offset = 20
    vec_bytes = 4 * d_c
    for row in range(count):
        if offset + 2 > len(blob):
            raise FormatError(f"{path}: truncated at record {row}")
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(blob):
            raise FormatError(f"{path}: truncated at record {row}")
        user = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vectors[row] = np.frombuffer(blob, dtype="<f4", count=d_c, offset=offset)
        offset += vec_bytes
        if users and user <= users[-1]:
            raise FormatError(f"{path}: records not strictly sorted by user id at {user!r}")
        users.append(user)
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return users, vectors


def import_embeddings(path: str | Path, bundle: DatasetBundle) -> ContentEmbeddings:
    """Resolve an interchange file against a bundle.

    Bundle users absent from the file get zero vectors (counted as
    missing); file users absent from the bundle are fatal. Imported
    vectors keep their native norm.
    """
    users, vectors = read_embedding_file(path)
    table = np.zeros((bundle.n, vectors.shape[1]), dtype=np.float32)
    for user, vec in zip(users, vectors):
        idx = bundle.index.get(user)
        if idx is None:
            raise InputError(f"{path}: user {user!r} is not in bundle {bundle.name!r}")
        table[idx] = vec
    missing = bundle.n - len(users)
    if missing:
        logger.warning("%s: %d bundle users have no imported embedding", path, missing)
    return ContentEmbeddings(vectors=table, source="imported", missing=missing)


def _char_ngrams(text: str, size: int = 3) -> list[str]:
    text = text.lower()
    if len(text) < size:
        return [text] if text else []
    return [text[i : i + size] for i in range(len(text) - size + 1)]


def embed_text(text: str, d_c: int) -> np.ndarray:
    """Hash character 3-grams into d_c signed buckets, L2-normalized.

    blake2b keeps the hash stable across processes and platforms, unlike
    the interpreter's randomized str hash.
    """
    vec = np.zeros(d_c, dtype=np.float64)
    for gram in _char_ngrams(text):
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "little")
        sign = 1.0 if value & 1 == 0 else -1.0
        vec[(value >> 1) % d_c] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec.astype(np.float32)


def aggregate_user_content(
    post_vectors: np.ndarray,
    popularity: Sequence[int],
    post_ids: Sequence[str],
    mode: str = "all",
    k: int = 5,
) -> np.ndarray:
    """Combine one user's per-post vectors into c_i.

    mode "all" is the plain arithmetic mean; "top_k_popular" averages the
    k most popular posts, breaking popularity ties by post_id order. Zero
    posts yield the zero vector.
    """
    post_vectors = np.asarray(post_vectors)
    if post_vectors.shape[0] == 0:
        return np.zeros(post_vectors.shape[1] if post_vectors.ndim == 2 else 0, dtype=np.float32)
    if mode == "all":
        chosen = post_vectors
    elif mode == "top_k_popular":
        order = sorted(range(len(post_ids)), key=lambda i: (-int(popularity[i]), post_ids[i]))
        chosen = post_vectors[order[:k]]
    else:
        raise InputError(f"unknown aggregation mode {mode!r}")
    return chosen.mean(axis=0).astype(np.float32)


def hashed_fallback_embed(
    bundle: DatasetBundle,
    d_c: int,
    mode: str = "all",
    k: int = 5,
) -> ContentEmbeddings:
    """Deterministic content embeddings from hashed post 3-grams.

    Per-post vectors are hashed and normalized, aggregated per user, and
    the user vector is re-normalized so fallback vectors are unit length
    (zero for users with no text).
    """
    if d_c < 8:
        raise InputError(f"fallback embedding needs d_c >= 8, got {d_c}")
    table = np.zeros((bundle.n, d_c), dtype=np.float32)
    for idx, recs in enumerate(bundle.records_by_user()):
        texty = [r for r in recs if r.text]
        if not texty:
            continue
        post_vecs = np.stack([embed_text(r.text, d_c) for r in texty])
        agg = aggregate_user_content(
            post_vecs,
            [r.popularity for r in texty],
            [r.post_id for r in texty],
            mode=mode,
            k=k,
        )
        norm = np.linalg.norm(agg)
        if norm > 0:
            agg = agg / norm
        table[idx] = agg
    return ContentEmbeddings(vectors=table, source="hashed-fallback")


def degree_bucket(degree: int, d_g: int) -> int:
    """Logarithmic bucket index: min(floor(log2(degree + 1)), d_g - 1)."""
    if degree < 0:
        raise InputError(f"degree must be >= 0, got {degree}")
    if d_g < 2:
        raise InputError(f"d_g must be >= 2, got {d_g}")
    return min(int(degree + 1).bit_length() - 1, d_g - 1)


def equal_frequency_bounds(degrees: Sequence[int], d_g: int) -> np.ndarray:
    """Internal quantile boundaries for the equal-frequency scheme."""
    qs = np.linspace(0, 1, d_g + 1)[1:-1]
    return np.quantile(np.asarray(degrees, dtype=np.float64), qs)


def degree_onehots(degrees: Sequence[int], d_g: int, scheme: str = "log2") -> np.ndarray:
    """One-hot matrix g over bucketed degrees; exactly one 1 per row."""
    degrees = list(degrees)
    if scheme == "log2":
        buckets = [degree_bucket(d, d_g) for d in degrees]
    elif scheme == "equal_freq":
        bounds = equal_frequency_bounds(degrees, d_g)
        buckets = [min(int(np.searchsorted(bounds, d, side="right")), d_g - 1) for d in degrees]
    else:
        raise InputError(f"unknown bucketing scheme {scheme!r}")
    onehots = np.zeros((len(degrees), d_g), dtype=np.float32)
    onehots[np.arange(len(degrees)), buckets] = 1.0
    return onehots
