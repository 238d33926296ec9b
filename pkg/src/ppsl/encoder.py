"""Contrastive pre-training of a two-layer graph-convolutional encoder.

The encoder is trained to align each node with its k-ego structure and each
structure with a node-dropped corruption of itself, both with in-batch
negatives. Community vectors are sums of member node vectors.
"""

import logging
from dataclasses import dataclass

import numpy as np
import torch

from . import checkpoint
from .graph import FeatureTable, Graph, Subgraph, k_ego, corrupt
from .nnops import (
    DTYPE,
    Adam,
    index_tensor,
    init_linear,
    linear,
    round_trip_float32,
    segment_sum,
    symmetric_gcn_propagate,
    to_tensor,
)

logger = logging.getLogger(__name__)

EPS = 1e-8


@dataclass
class EncoderConfig:
    feature_dim: int = 5
    hidden_dim: int = 128
    embed_dim: int = 128
    ego_hops: int = 2
    ego_cap: int = 2000
    tau: float = 0.1
    rho: float = 0.85
    loss_weight: float = 1.0
    epochs: int = 30
    batch_size: int = 256
    lr: float = 1e-3

    def validate(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must be in (0, 1]")
        if self.loss_weight < 0:
            raise ValueError("loss_weight must be >= 0")
        if min(self.feature_dim, self.hidden_dim, self.embed_dim) < 1:
            raise ValueError("dimensions must be >= 1")


class Encoder:
    """Two graph-convolution layers (rectifier in between, none after the last)."""

    PARAM_NAMES = ("w1", "b1", "w2", "b2")

    def __init__(self, cfg: EncoderConfig, params: dict, seed: int):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.w1 = params["w1"]
        self.b1 = params["b1"]
        self.w2 = params["w2"]
        self.b2 = params["b2"]
        expect = {
            "w1": (cfg.hidden_dim, cfg.feature_dim),
            "b1": (cfg.hidden_dim,),
            "w2": (cfg.embed_dim, cfg.hidden_dim),
            "b2": (cfg.embed_dim,),
        }
        for name, shape in expect.items():
            if tuple(params[name].shape) != shape:
                raise ValueError(f"encoder parameter {name} has shape "
                                 f"{tuple(params[name].shape)}, expected {shape}")

    @classmethod
    def initial(cls, cfg: EncoderConfig, gen: torch.Generator, seed: int) -> "Encoder":
        w1, b1 = init_linear(cfg.feature_dim, cfg.hidden_dim, gen)
        w2, b2 = init_linear(cfg.hidden_dim, cfg.embed_dim, gen)
        return cls(cfg, {"w1": w1, "b1": b1, "w2": w2, "b2": b2}, seed)

    def parameters(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, feats: torch.Tensor, local_edges: np.ndarray) -> torch.Tensor:
        h = symmetric_gcn_propagate(feats, local_edges)
        h = torch.relu(linear(h, self.w1, self.b1))
        h = symmetric_gcn_propagate(h, local_edges)
        return linear(h, self.w2, self.b2)


def encode_subgraph(enc: Encoder, s: Subgraph, feats: FeatureTable):
    """Per-node vectors over the induced subgraph plus their sum-pooled vector."""
    if feats.dim != enc.cfg.feature_dim:
        raise ValueError(f"feature dim {feats.dim} != encoder input dim {enc.cfg.feature_dim}")
    x = to_tensor(feats.matrix[s.nodes])
    z = enc.forward(x, s.local_edges())
    return z, z.sum(dim=0)


def _cosine_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    a_hat = a / a.norm(dim=1, keepdim=True).clamp(min=EPS)
    b_hat = b / b.norm(dim=1, keepdim=True).clamp(min=EPS)
    return a_hat @ b_hat.T


def loss_ns(node_vecs: torch.Tensor, struct_vecs: torch.Tensor, tau: float) -> torch.Tensor:
    """Node-vs-structure contrastive loss, summed over the batch.

    Row i of each argument is a positive pair; the other structure vectors in
    the batch serve as negatives.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if node_vecs.shape != struct_vecs.shape or node_vecs.ndim != 2:
        raise ValueError("expected matching (batch, dim) matrices")
    logits = _cosine_matrix(node_vecs, struct_vecs) / tau
    return (torch.logsumexp(logits, dim=1) - logits.diagonal()).sum()


def loss_ss(struct_vecs: torch.Tensor, corrupted_vecs: torch.Tensor, tau: float) -> torch.Tensor:
    """Structure-vs-corrupted-structure contrastive loss; same form as loss_ns."""
    return loss_ns(struct_vecs, corrupted_vecs, tau)


def _batch_ego_forward(enc, g, feats, centers, egos):
    """Encode all ego subgraphs of a batch in one pass over their union."""
    union = np.unique(np.concatenate([e.nodes for e in egos]))
    sub = Subgraph(union, g.induced_edges(union), tuple(int(c) for c in centers))
    z_all, _ = encode_subgraph(enc, sub, feats)
    z_node = z_all[sub.local_index(np.asarray(centers, dtype=np.int64))]
    positions = np.concatenate([sub.local_index(e.nodes) for e in egos])
    segments = np.concatenate([np.full(len(e.nodes), i) for i, e in enumerate(egos)])
    z_struct = segment_sum(
        z_all[index_tensor(positions)],
        index_tensor(segments),
        len(egos),
    )
    return z_node, z_struct


def _block_diagonal_forward(enc, feats, subs):
    """Encode disjoint subgraphs jointly and sum-pool each block."""
    offsets = np.cumsum([0] + [len(s) for s in subs])
    x = to_tensor(np.concatenate([feats.matrix[s.nodes] for s in subs]))
    edges = [s.local_edges() + off for s, off in zip(subs, offsets) if len(s.edges)]
    all_edges = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    z = enc.forward(x, all_edges)
    segments = index_tensor(np.concatenate([np.full(len(s), i) for i, s in enumerate(subs)]))
    return segment_sum(z, segments, len(subs))


def pretrain_encoder(
    g: Graph,
    feats: FeatureTable,
    cfg: EncoderConfig,
    rng: np.random.Generator,
    gen: torch.Generator,
    seed: int = 0,
):
    """Train the encoder by epochs of one contrastive batch each.

    Returns (trained Encoder, per-epoch loss history). Parameters are snapped
    to float32 at the end so saved checkpoints reproduce the model exactly.
    """
    cfg.validate()
    enc = Encoder.initial(cfg, gen, seed)
    opt = Adam(enc.parameters(), lr=cfg.lr)
    ego_cache: dict = {}
    history = []
    batch_size = min(cfg.batch_size, g.num_nodes)
    for epoch in range(cfg.epochs):
        batch = np.sort(rng.choice(g.num_nodes, size=batch_size, replace=False))
        egos = []
        for v in batch:
            v = int(v)
            if v not in ego_cache:
                ego_cache[v] = k_ego(g, [v], cfg.ego_hops, cap=cfg.ego_cap)
            egos.append(ego_cache[v])
        corrupted = [corrupt(e, cfg.rho, rng) for e in egos]

        z_node, z_struct = _batch_ego_forward(enc, g, feats, batch, egos)
        z_corr = _block_diagonal_forward(enc, feats, corrupted)
        loss = loss_ns(z_node, z_struct, cfg.tau) + cfg.loss_weight * loss_ss(
            z_struct, z_corr, cfg.tau
        )
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite encoder loss at epoch {epoch}: {loss.item()}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.item()))
        logger.debug("encoder epoch %d loss %.6f", epoch, history[-1])
    round_trip_float32(enc.parameters())
    return enc, history


class EmbeddingTable:
    """Per-node embedding rows, float64 values exactly representable in float32."""

    def __init__(self, matrix: np.ndarray):
        mat = np.asarray(matrix, dtype=np.float64)
        if not np.all(np.isfinite(mat)):
            raise ValueError("embedding table contains non-finite values")
        self.matrix = mat
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def row(self, node: int) -> np.ndarray:
        return self.matrix[node]

    def rows(self, nodes) -> np.ndarray:
        return self.matrix[np.asarray(nodes, dtype=np.int64)]


def encode_all(enc: Encoder, g: Graph, feats: FeatureTable) -> EmbeddingTable:
    """One forward pass over the full graph, rounded through float32 storage."""
    x = to_tensor(feats.matrix)
    with torch.no_grad():
        z = enc.forward(x, g.edges)
    return EmbeddingTable(z.numpy().astype(np.float32).astype(np.float64))


def embed_community(tab: EmbeddingTable, members) -> np.ndarray:
    """Sum of member rows."""
    idx = np.array(sorted(set(int(v) for v in members)), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cannot embed an empty community")
    return tab.matrix[idx].sum(axis=0)


def save_encoder(path, enc: Encoder) -> None:
    cfg = enc.cfg
    meta = {
        "feature_dim": cfg.feature_dim,
        "hidden_dim": cfg.hidden_dim,
        "embed_dim": cfg.embed_dim,
        "ego_hops": cfg.ego_hops,
        "ego_cap": cfg.ego_cap,
        "tau": cfg.tau,
        "rho": cfg.rho,
        "loss_weight": cfg.loss_weight,
        "seed": enc.seed,
    }
    named = [(n, p) for n, p in zip(Encoder.PARAM_NAMES, enc.parameters())]
    checkpoint.save_checkpoint(path, "encoder", meta, named)


def load_encoder(path) -> Encoder:
    meta, arrays = checkpoint.load_checkpoint(path, "encoder")
    cfg = EncoderConfig(
        feature_dim=int(meta["feature_dim"]),
        hidden_dim=int(meta["hidden_dim"]),
        embed_dim=int(meta["embed_dim"]),
        ego_hops=int(meta["ego_hops"]),
        ego_cap=int(meta["ego_cap"]),
        tau=float(meta["tau"]),
        rho=float(meta["rho"]),
        loss_weight=float(meta["loss_weight"]),
    )
    params = checkpoint.tensors_from_arrays(arrays)
    return Encoder(cfg, params, int(meta["seed"]))


def save_embeddings(path, tab: EmbeddingTable, meta: dict) -> None:
    checkpoint.save_checkpoint(path, "embeddings", meta, [("rows", tab.matrix)])


def load_embeddings(path):
    meta, arrays = checkpoint.load_checkpoint(path, "embeddings")
    return EmbeddingTable(arrays["rows"].astype(np.float64)), meta
