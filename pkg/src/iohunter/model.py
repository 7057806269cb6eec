"""The IOHunter network: cross-attention modality fusion feeding a 2-layer GNN.

The fusion stage projects content vectors c_i and degree one-hots g_i to
a shared width, gates each projection with coefficients computed from the
*other* modality, concatenates, and refines with two fully connected
layers. The GNN is either a GCN over the symmetrically normalized
adjacency or a mean-aggregating Sage, followed by a single-logit head.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import SparseMatrix, Tape, Tensor
from .errors import FormatError, InputError
from .simnet import FusedNetwork

IOCK_MAGIC = b"IOCK"
IOCK_VERSION = 1

ABLATIONS = ("full", "no_graph", "no_text", "no_crossattn")
CONVS = ("gcn", "sage")


@dataclass
class ModelConfig:
    d_c: int
    d_g: int
    conv: str = "gcn"
    d: int = 128
    dropout: float = 0.2
    ablation: str = "full"

    def __post_init__(self) -> None:
        if self.conv not in CONVS:
            raise InputError(f"conv must be one of {CONVS}, got {self.conv!r}")
        if self.ablation not in ABLATIONS:
            raise InputError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError(f"dropout must be in [0,1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


def ablate(config: ModelConfig, ablation: str) -> ModelConfig:
    """Model variant with one architecture component removed."""
    return ModelConfig(
        d_c=config.d_c,
        d_g=config.d_g,
        conv=config.conv,
        d=config.d,
        dropout=config.dropout,
        ablation=ablation,
    )


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter names and shapes in a fixed order (drives init and I/O)."""
    d_c, d_g, d = config.d_c, config.d_g, config.d
    shapes: list[tuple[str, tuple[int, ...]]] = []
    if config.ablation != "no_text":
        shapes += [("fusion.w_content", (d_c, d)), ("fusion.b_content", (d,))]
    if config.ablation != "no_graph":
        shapes += [("fusion.w_context", (d_g, d)), ("fusion.b_context", (d,))]
    if config.ablation == "full":
        shapes += [
            ("fusion.w_gate_content", (d_g, d)),
            ("fusion.b_gate_content", (d,)),
            ("fusion.w_gate_context", (d_c, d)),
            ("fusion.b_gate_context", (d,)),
        ]
    blend_in = 2 * d if config.ablation in ("full", "no_crossattn") else d
    shapes += [
        ("fusion.w_refine1", (blend_in, d)),
        ("fusion.b_refine1", (d,)),
        ("fusion.w_refine2", (d, d)),
        ("fusion.b_refine2", (d,)),
    ]
    for layer in (1, 2):
        if config.conv == "gcn":
            shapes.append((f"gnn.w{layer}", (d, d)))
        else:
            shapes += [(f"gnn.w{layer}_self", (d, d)), (f"gnn.w{layer}_neigh", (d, d))]
    shapes += [("head.w", (d, 1)), ("head.b", (1,))]
    return shapes


class IOHunterModel:
    """Fusion parameters plus GNN parameters, with the forward pass."""

    def __init__(self, config: ModelConfig, seed: Optional[int] = None, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed if seed is not None else 0)
        for name, shape in _param_shapes(config):
            if len(shape) == 1:
                # Biases start at zero, except the gates: a zero-initialized
                # ReLU gate multiplies the projections down to ~1e-3 scale
                # and the whole stack starts optimization nearly silent, so
                # gates open at 1 and learn to close.
                data = np.ones(shape) if name.startswith("fusion.b_gate") else np.zeros(shape)
            else:
                data = glorot(rng, shape[0], shape[1])
            self.params[name] = Tensor(data.astype(dtype), requires_grad=True)

    def param_list(self) -> list[Tensor]:
        return [self.params[name] for name, _ in _param_shapes(self.config)]

    def param_names(self) -> list[str]:
        return [name for name, _ in _param_shapes(self.config)]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, data in snap.items():
            self.params[name].data = data.copy()

    def _dense_layer(self, tape, x: Tensor, w_name: str, b_name: str, activated: bool = True) -> Tensor:
        out = ad.add_bias(tape, ad.matmul(tape, x, self.params[w_name]), self.params[b_name])
        return ad.relu(tape, out) if activated else out

    def fuse_modalities(self, tape: Optional[Tape], content: Tensor, context: Tensor) -> Tensor:
        """Blend c_i and g_i into Z (n x d) according to the ablation mode."""
        cfg = self.config
        if content.shape[1] != cfg.d_c or context.shape[1] != cfg.d_g:
            raise InputError(
                f"feature widths ({content.shape[1]}, {context.shape[1]}) do not match "
                f"model config (d_c={cfg.d_c}, d_g={cfg.d_g})"
            )
        if cfg.ablation == "no_graph":
            blended = self._dense_layer(tape, content, "fusion.w_content", "fusion.b_content")
        elif cfg.ablation == "no_text":
            blended = self._dense_layer(tape, context, "fusion.w_context", "fusion.b_context")
        else:
            proj_c = self._dense_layer(tape, content, "fusion.w_content", "fusion.b_content")
            proj_g = self._dense_layer(tape, context, "fusion.w_context", "fusion.b_context")
            if cfg.ablation == "full":
                # Cross-wiring: the content gate is a function of g_i and
                # the context gate a function of c_i.
                gate_c = self._dense_layer(tape, context, "fusion.w_gate_content", "fusion.b_gate_content")
                gate_g = self._dense_layer(tape, content, "fusion.w_gate_context", "fusion.b_gate_context")
                proj_c = ad.elementwise_mul(tape, gate_c, proj_c)
                proj_g = ad.elementwise_mul(tape, gate_g, proj_g)
            blended = ad.concat_rows(tape, proj_c, proj_g)
        h = self._dense_layer(tape, blended, "fusion.w_refine1", "fusion.b_refine1")
        return self._dense_layer(tape, h, "fusion.w_refine2", "fusion.b_refine2")

    def _conv(self, tape, adj: "GraphOperators", h: Tensor, layer: int) -> Tensor:
        if self.config.conv == "gcn":
            return ad.relu(tape, ad.matmul(tape, ad.spmm(tape, adj.gcn, h), self.params[f"gnn.w{layer}"]))
        self_part = ad.matmul(tape, h, self.params[f"gnn.w{layer}_self"])
        neigh_part = ad.matmul(tape, ad.spmm(tape, adj.sage_mean, h), self.params[f"gnn.w{layer}_neigh"])
        return ad.relu(tape, ad.add(tape, self_part, neigh_part))

    def gnn_forward(
        self,
        tape: Optional[Tape],
        adj: "GraphOperators",
        z: Tensor,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[Tensor, Tensor]:
        """Two message-passing layers and the logit head; returns (logits, scores)."""
        p = self.config.dropout
        h = ad.dropout(tape, z, p, rng, train)
        h = self._conv(tape, adj, h, 1)
        h = ad.dropout(tape, h, p, rng, train)
        h = self._conv(tape, adj, h, 2)
        logits = ad.add_bias(tape, ad.matmul(tape, h, self.params["head.w"]), self.params["head.b"])
        scores = ad.sigmoid(tape, logits)
        return logits, scores

    def forward(
        self,
        tape: Optional[Tape],
        content: Tensor,
        context: Tensor,
        adj: "GraphOperators",
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """Full pass from raw features to IO-driver scores in (0, 1)."""
        z = self.fuse_modalities(tape, content, context)
        _, scores = self.gnn_forward(tape, adj, z, train=train, rng=rng)
        return scores


@dataclass
class GraphOperators:
    """Sparse message-passing operators derived from the fused network."""

    gcn: SparseMatrix = field(repr=False)
    sage_mean: SparseMatrix = field(repr=False)
    n: int = 0


def normalized_adjacency(net: FusedNetwork) -> GraphOperators:
    """Build both GNN operator forms from an unweighted fused network.

    GCN: D^{-1/2} (A + I) D^{-1/2} with D the degree of A + I. Sage: the
    row-normalized neighbor mean without self-loops; rows of isolated
    nodes are all zero.
    """
    n = net.n
    rows = []
    cols = []
    for i, j in net.edges:
        rows += [i, j]
        cols += [j, i]
    deg = np.zeros(n, dtype=np.float64)
    for r in rows:
        deg[r] += 1.0

    self_rows = list(range(n))
    gcn_rows = np.array(rows + self_rows, dtype=np.int64)
    gcn_cols = np.array(cols + self_rows, dtype=np.int64)
    d_hat = deg + 1.0
    inv_sqrt = 1.0 / np.sqrt(d_hat)
    gcn_vals = inv_sqrt[gcn_rows] * inv_sqrt[gcn_cols]
    gcn = SparseMatrix(gcn_rows, gcn_cols, gcn_vals, (n, n))

    if rows:
        mean_rows = np.array(rows, dtype=np.int64)
        mean_cols = np.array(cols, dtype=np.int64)
        mean_vals = 1.0 / deg[mean_rows]
    else:
        mean_rows = np.zeros(0, dtype=np.int64)
        mean_cols = np.zeros(0, dtype=np.int64)
        mean_vals = np.zeros(0, dtype=np.float64)
    sage = SparseMatrix(mean_rows, mean_cols, mean_vals, (n, n))
    return GraphOperators(gcn=gcn, sage_mean=sage, n=n)


def identity_operators(n: int) -> GraphOperators:
    """Self-loop-only operators, used by graph-free baselines."""
    eye = SparseMatrix.from_csr(sp.identity(n, format="csr"))
    zero = SparseMatrix(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), (n, n))
    return GraphOperators(gcn=eye, sage_mean=zero, n=n)


def save_checkpoint(model: IOHunterModel, path: str | Path, extra: Optional[dict] = None) -> None:
    """Serialize config and all parameters; the round trip is bit-exact."""
    config = dict(model.config.to_dict())
    if extra:
        config["extra"] = extra
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(IOCK_MAGIC)
        fh.write(struct.pack("<II", IOCK_VERSION, len(blob)))
        fh.write(blob)
        for name in model.param_names():
            tensor = model.params[name]
            encoded = name.encode("utf-8")
            data = np.ascontiguousarray(tensor.data, dtype="<f4")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes())


def load_checkpoint(
    path: str | Path,
    expect_d_c: Optional[int] = None,
    expect_d_g: Optional[int] = None,
) -> IOHunterModel:
    """Rebuild a model from a checkpoint, checking the feature signature."""
    blob = Path(path).read_bytes()
    if blob[:4] != IOCK_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    version, cfg_len = struct.unpack_from("<II", blob, 4)
    if version != IOCK_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 12
    if offset + cfg_len > len(blob):
        raise FormatError(f"{path}: truncated config")
    raw_cfg = json.loads(blob[offset : offset + cfg_len].decode("utf-8"))
    offset += cfg_len
    raw_cfg.pop("extra", None)
    config = ModelConfig(**raw_cfg)
    if expect_d_c is not None and config.d_c != expect_d_c:
        raise InputError(f"{path}: checkpoint d_c={config.d_c}, dataset requires {expect_d_c}")
    if expect_d_g is not None and config.d_g != expect_d_g:
        raise InputError(f"{path}: checkpoint d_g={config.d_g}, dataset requires {expect_d_g}")

    model = IOHunterModel(config, seed=0)
    seen: list[str] = []
    while offset < len(blob):
        if offset + 2 > len(blob):
            raise FormatError(f"{path}: truncated tensor name")
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + name_len + 1 > len(blob):
            raise FormatError(f"{path}: truncated tensor header")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        if offset + 4 * rank > len(blob):
            raise FormatError(f"{path}: truncated tensor dims for {name!r}")
        dims = []
        for _ in range(rank):
            (dim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims.append(dim)
        count = int(np.prod(dims)) if dims else 1
        end = offset + 4 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated tensor data for {name!r}")
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(dims)
        offset = end
        if name not in model.params:
            raise FormatError(f"{path}: unexpected tensor {name!r}")
        if tuple(dims) != model.params[name].shape:
            raise FormatError(f"{path}: tensor {name!r} has shape {dims}, expected {model.params[name].shape}")
        model.params[name].data = data.copy()
        seen.append(name)
    missing = [n for n in model.param_names() if n not in seen]
    if missing:
        raise FormatError(f"{path}: missing tensors {missing}")
    return model
