"""Dataset loading, query/known splits, artifact files and pipeline assembly."""

import json
import logging
import os
from dataclasses import dataclass

from . import seeding
from .config import PipelineConfig
from .encoder import (
    EmbeddingTable,
    encode_all,
    load_embeddings,
    load_encoder,
    pretrain_encoder,
    save_embeddings,
    save_encoder,
)
from .graph import (
    CommunitySet,
    FeatureTable,
    Graph,
    load_communities,
    load_edge_list,
    sample_query_nodes,
    select_known_communities,
    structural_features,
)
from .sampler import Agent, load_agent, save_agent, train_agent

logger = logging.getLogger(__name__)

VARIANTS = ("full", "no-ne", "no-sg", "no-pf")

ENCODER_CKPT = "encoder.ckpt"
EMBEDDINGS_CKPT = "embeddings.ckpt"
AGENT_CKPT = "agent.ckpt"
AGENT_RAW_CKPT = "agent-raw.ckpt"


def artifact(out_dir, name: str) -> str:
    return os.path.join(out_dir, name)


def write_history(out_dir, name: str, history) -> None:
    path = artifact(out_dir, name)
    with open(path, "w") as fh:
        json.dump(history, fh, sort_keys=True)
        fh.write("\n")


@dataclass
class PipelineHandle:
    """Everything a query evaluation needs, immutable once assembled."""

    cfg: PipelineConfig
    graph: Graph
    feats: FeatureTable
    tab: EmbeddingTable
    agent: Agent | None
    known: CommunitySet
    truth: CommunitySet
    queries: list
    embedding_source: str
    size_cap: int

    def __post_init__(self):
        if self.embedding_source not in ("encoder", "structural"):
            raise ValueError(f"unknown embedding source {self.embedding_source!r}")
        if len(self.tab) != self.graph.num_nodes:
            raise ValueError("embedding table does not cover the graph")


def load_dataset(cfg: PipelineConfig):
    if not cfg.data.edges:
        raise ValueError("config data.edges is not set")
    if not cfg.data.communities:
        raise ValueError("config data.communities is not set")
    g = load_edge_list(cfg.data.edges)
    truth = load_communities(cfg.data.communities, g)
    feats = structural_features(g)
    cfg.encoder.feature_dim = feats.dim
    return g, feats, truth


def derive_split(cfg: PipelineConfig, truth: CommunitySet):
    """Query nodes plus the known-community training set, fixed by the run seed."""
    queries = sample_query_nodes(truth, cfg.run.queries)
    excluded = {gt for _, gt in queries if gt is not None}
    rng = seeding.numpy_rng(cfg.run.seed, seeding.STREAM_SPLIT)
    known = select_known_communities(truth, excluded, cfg.run.known, rng)
    return queries, known


def run_pretrain(cfg: PipelineConfig, out_dir) -> dict:
    """Train the encoder, cache full-graph embeddings, record the loss history."""
    g, feats, _ = load_dataset(cfg)
    rng = seeding.numpy_rng(cfg.run.seed, seeding.STREAM_ENCODER)
    gen = seeding.torch_generator(cfg.run.seed, seeding.STREAM_ENCODER)
    enc, history = pretrain_encoder(g, feats, cfg.encoder, rng, gen, seed=cfg.run.seed)
    os.makedirs(out_dir, exist_ok=True)
    save_encoder(artifact(out_dir, ENCODER_CKPT), enc)
    tab = encode_all(enc, g, feats)
    save_embeddings(
        artifact(out_dir, EMBEDDINGS_CKPT),
        tab,
        {"embed_dim": tab.dim, "num_nodes": len(tab), "seed": cfg.run.seed},
    )
    write_history(out_dir, "encoder-history.json", history)
    logger.info("encoder trained: %d epochs, final loss %.4f", len(history), history[-1])
    return {"encoder": artifact(out_dir, ENCODER_CKPT)}


def _load_embedding_table(cfg: PipelineConfig, out_dir, g, feats) -> EmbeddingTable:
    emb_path = artifact(out_dir, EMBEDDINGS_CKPT)
    if os.path.exists(emb_path):
        tab, _ = load_embeddings(emb_path)
        if len(tab) != g.num_nodes:
            raise ValueError(f"{emb_path}: embeddings cover {len(tab)} nodes, graph has {g.num_nodes}")
        return tab
    enc_path = artifact(out_dir, ENCODER_CKPT)
    if not os.path.exists(enc_path):
        raise FileNotFoundError(f"missing encoder checkpoint {enc_path}; run pretrain first")
    return encode_all(load_encoder(enc_path), g, feats)


def _train_agent_on(cfg, g, known, tab, stream_keys, seed):
    rng = seeding.numpy_rng(*stream_keys)
    gen = seeding.torch_generator(*stream_keys)
    return train_agent(g, known, tab, cfg.sampler, rng, gen, seed=seed)


def run_train_agent(cfg: PipelineConfig, out_dir) -> dict:
    """Train the expansion agent on the known communities over encoder embeddings."""
    g, feats, truth = load_dataset(cfg)
    _, known = derive_split(cfg, truth)
    tab = _load_embedding_table(cfg, out_dir, g, feats)
    agent, history = _train_agent_on(
        cfg, g, known, tab, (cfg.run.seed, seeding.STREAM_AGENT), cfg.run.seed
    )
    os.makedirs(out_dir, exist_ok=True)
    save_agent(artifact(out_dir, AGENT_CKPT), agent)
    write_history(out_dir, "agent-history.json", history)
    logger.info("agent trained on %d communities", len(known))
    return {"agent": artifact(out_dir, AGENT_CKPT)}


def build_handle(cfg: PipelineConfig, out_dir, variant: str = "full") -> PipelineHandle:
    """Assemble the evaluation pipeline for a variant from saved artifacts.

    The raw-feature variant trains its own agent over structural features
    (saved beside the main artifacts); the fixed-neighborhood variant needs
    no agent at all.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    g, feats, truth = load_dataset(cfg)
    queries, known = derive_split(cfg, truth)

    if variant == "no-ne":
        tab = EmbeddingTable(feats.matrix)
        embedding_source = "structural"
    else:
        tab = _load_embedding_table(cfg, out_dir, g, feats)
        embedding_source = "encoder"

    agent = None
    if variant in ("full", "no-pf"):
        agent_path = artifact(out_dir, AGENT_CKPT)
        if not os.path.exists(agent_path):
            raise FileNotFoundError(f"missing agent checkpoint {agent_path}; run train-agent first")
        agent = load_agent(agent_path)
    elif variant == "no-ne":
        agent, history = _train_agent_on(
            cfg, g, known, tab, (cfg.run.seed, seeding.STREAM_AGENT, 1), cfg.run.seed
        )
        os.makedirs(out_dir, exist_ok=True)
        save_agent(artifact(out_dir, AGENT_RAW_CKPT), agent)
        write_history(out_dir, "agent-raw-history.json", history)

    return PipelineHandle(
        cfg=cfg,
        graph=g,
        feats=feats,
        tab=tab,
        agent=agent,
        known=known,
        truth=truth,
        queries=queries,
        embedding_source=embedding_source,
        size_cap=known.max_size(),
    )
