"""Pooling modes and the manifest sidecar."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__ as TOOL_VERSION
from .interchange import write_interchange
from .traces import Post, read_posts

MODES = ("per_user_all", "per_user_top5", "per_post")


class ExportError(ValueError):
    pass


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _pool_user(posts: list[Post], vectors: np.ndarray, mode: str, k: int = 5) -> np.ndarray:
    if mode == "per_user_top5":
        order = sorted(range(len(posts)), key=lambda i: (-posts[i].popularity, posts[i].post_id))
        vectors = vectors[order[:k]]
    return vectors.mean(axis=0)


def export_embeddings(
    traces_path: str | Path,
    encoder,
    mode: str,
    out_path: str | Path,
    batch_size: int = 32,
) -> dict:
    """Encode trace texts and write the interchange file plus manifest.

    Per-user modes pool each user's post vectors by arithmetic mean
    (optionally over the five most popular posts, ties broken by post
    id); ``per_post`` keys records by post id instead. Users whose posts
    are all empty get a zero vector and count as warnings. Returns the
    manifest dict.
    """
    if mode not in MODES:
        raise ExportError(f"unknown mode {mode!r}; choose from {MODES}")
    out_path = Path(out_path)
    posts = read_posts(traces_path)
    if not posts:
        raise ExportError(f"{traces_path}: no posts to embed")

    texty = [p for p in posts if p.text]
    vectors = (
        encoder.encode([p.text for p in texty], batch_size=batch_size)
        if texty
        else np.zeros((0, encoder.dim), dtype=np.float32)
    )
    by_post = {p.post_id: vectors[i] for i, p in enumerate(texty)}

    warnings = 0
    table: dict[str, np.ndarray] = {}
    if mode == "per_post":
        for post in posts:
            vec = by_post.get(post.post_id)
            if vec is None:
                vec = np.zeros(encoder.dim, dtype=np.float32)
                warnings += 1
            table[post.post_id] = vec
    else:
        grouped: dict[str, list[Post]] = {}
        for post in posts:
            grouped.setdefault(post.user_id, []).append(post)
        for user, user_posts in grouped.items():
            embedded = [p for p in user_posts if p.post_id in by_post]
            if not embedded:
                table[user] = np.zeros(encoder.dim, dtype=np.float32)
                warnings += 1
                continue
            stack = np.stack([by_post[p.post_id] for p in embedded])
            table[user] = _pool_user(embedded, stack, mode).astype(np.float32)

    write_interchange(out_path, table)
    manifest = {
        "encoder": encoder.name,
        "encoder_revision": encoder.revision,
        "d_c": int(encoder.dim),
        "pooling": "mean",
        "mode": mode,
        "records": len(table),
        "input_sha256": _sha256(traces_path),
        "batch_size": int(batch_size),
        "empty_content_warnings": warnings,
        "tool_version": TOOL_VERSION,
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    payload = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    fd, tmp_name = tempfile.mkstemp(dir=manifest_path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp_name, manifest_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return manifest
