"""Text encoders behind one interface.

``debug-hash:<dim>`` is a deterministic stand-in that needs no model
download; anything else is treated as a sentence-transformers checkpoint
name and loaded frozen.
"""
from __future__ import annotations

import hashlib

import numpy as np


class EncoderError(RuntimeError):
    pass


class DebugHashEncoder:
    """Character 3-gram hashing into signed buckets; fully offline."""

    def __init__(self, dim: int = 64):
        if dim < 8:
            raise EncoderError(f"debug-hash dim must be >= 8, got {dim}")
        self.dim = dim
        self.name = f"debug-hash:{dim}"
        self.revision = "debug-hash-v1"

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            text = text.lower()
            grams = (
                [text[i : i + 3] for i in range(len(text) - 2)]
                if len(text) >= 3
                else ([text] if text else [])
            )
            vec = np.zeros(self.dim, dtype=np.float64)
            for gram in grams:
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
                value = int.from_bytes(digest, "little")
                vec[(value >> 1) % self.dim] += 1.0 if value & 1 == 0 else -1.0
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm
            out[row] = vec
        return out


class SbertEncoder:
    """Frozen sentence-transformers checkpoint."""

    def __init__(self, model_name: str, device: str = "cpu"):
        try:
            from sentence_transformers import SentenceTransformer
            import sentence_transformers
        except ImportError as exc:
            raise EncoderError(f"sentence-transformers is not installed: {exc}") from exc
        try:
            self._model = SentenceTransformer(model_name, device=None if device == "auto" else device)
        except Exception as exc:
            raise EncoderError(f"cannot load encoder {model_name!r}: {exc}") from exc
        self.name = model_name
        self.revision = f"sentence-transformers/{sentence_transformers.__version__}"
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        vectors = self._model.encode(
            texts, batch_size=batch_size, convert_to_numpy=True, show_progress_bar=False
        )
        return np.asarray(vectors, dtype=np.float32)


def load_encoder(model_name: str, device: str = "cpu"):
    if model_name.startswith("debug-hash:"):
        return DebugHashEncoder(int(model_name.split(":", 1)[1]))
    if model_name == "debug-hash":
        return DebugHashEncoder()
    return SbertEncoder(model_name, device=device)
