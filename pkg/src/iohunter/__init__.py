"""IO-driver detection from behavioral similarity networks."""

__version__ = "0.1.0"

from .errors import FormatError, InputError, IOHunterError
from .traces import DatasetBundle, TraceRecord, build_bundle, load_bundle, parse_traces
from .simnet import (
    BipartiteGraph,
    FusedNetwork,
    SimilarityNetwork,
    build_all_layers,
    build_bipartite,
    edge_homophily,
    fuse,
    project_similarity,
    text_similarity_network,
    tfidf,
)
from .features import (
    ContentEmbeddings,
    degree_bucket,
    degree_onehots,
    hashed_fallback_embed,
    import_embeddings,
    write_embeddings,
)
from .model import IOHunterModel, ModelConfig, ablate, load_checkpoint, save_checkpoint
from .train import (
    ExperimentReport,
    TrainConfig,
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
from .synth import SynthConfig, generate, preset

__all__ = [
    "BipartiteGraph",
    "ContentEmbeddings",
    "DatasetBundle",
    "ExperimentReport",
    "FormatError",
    "FusedNetwork",
    "IOHunterError",
    "IOHunterModel",
    "InputError",
    "ModelConfig",
    "SimilarityNetwork",
    "SynthConfig",
    "TraceRecord",
    "TrainConfig",
    "ablate",
    "build_all_layers",
    "build_bipartite",
    "build_bundle",
    "degree_bucket",
    "degree_onehots",
    "edge_homophily",
    "finetune",
    "fit",
    "fit_report",
    "fuse",
    "generate",
    "graph_data",
    "hashed_fallback_embed",
    "import_embeddings",
    "load_bundle",
    "load_checkpoint",
    "macro_f1",
    "parse_traces",
    "preset",
    "pretrain",
    "project_similarity",
    "save_checkpoint",
    "sparsify",
    "split",
    "sweep_sparsity",
    "text_similarity_network",
    "tfidf",
    "write_embeddings",
]
