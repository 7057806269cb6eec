"""Offline embedding exporter for the IOEM interchange format."""

__version__ = "0.1.0"

from .encoders import DebugHashEncoder, load_encoder
from .export import export_embeddings
from .interchange import read_interchange, write_interchange

__all__ = [
    "DebugHashEncoder",
    "export_embeddings",
    "load_encoder",
    "read_interchange",
    "write_interchange",
]
