"""Per-query fine-tuning of a pair-scoring perceptron and final membership prediction.

The model scores candidate nodes against a center node on concatenated
embeddings; candidates from the expanded neighborhood of the generated
community whose sigmoid score clears the threshold form the final community.
"""

import logging
from dataclasses import dataclass

import numpy as np
import torch

from . import checkpoint
from .encoder import EmbeddingTable
from .graph import Community, CommunitySet, Graph, k_ego
from .nnops import DTYPE, init_linear, linear, round_trip_float32, sgd_step, to_tensor

logger = logging.getLogger(__name__)

LOGIT_CLAMP = 30.0


@dataclass
class PromptConfig:
    hidden_dim: int = 128
    epochs: int = 30
    lr: float = 1e-3
    ego_hops: int = 3
    ego_cap: int = 2000
    alpha: float = 0.2
    num_similar: int = 20
    all_centers: bool = False

    def validate(self) -> None:
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")
        if self.hidden_dim < 1 or self.epochs < 0:
            raise ValueError("hidden_dim must be >= 1 and epochs >= 0")
        if self.num_similar < 1:
            raise ValueError("num_similar must be >= 1")


@dataclass(frozen=True)
class PromptSample:
    center: int
    candidate: int
    label: int


class PromptModel:
    """Two linear layers over z(candidate)‖z(center); carries alpha and ego radius."""

    PARAM_NAMES = ("w1", "b1", "w2", "b2")

    def __init__(self, embed_dim: int, alpha: float, ego_hops: int, ego_cap: int, params: dict, seed: int):
        if not 0 <= alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")
        self.embed_dim = embed_dim
        self.alpha = alpha
        self.ego_hops = ego_hops
        self.ego_cap = ego_cap
        self.seed = seed
        self.w1 = params["w1"]
        self.b1 = params["b1"]
        self.w2 = params["w2"]
        self.b2 = params["b2"]
        if self.w1.shape[1] != 2 * embed_dim or self.w2.shape[0] != 1:
            raise ValueError("prompt layer shapes inconsistent with embedding dim")

    @classmethod
    def initial(
        cls, embed_dim: int, cfg: PromptConfig, gen: torch.Generator, seed: int
    ) -> "PromptModel":
        cfg.validate()
        w1, b1 = init_linear(2 * embed_dim, cfg.hidden_dim, gen)
        # Zero output layer: every pair starts at logit 0 (probability one half).
        w2 = torch.zeros((1, cfg.hidden_dim), dtype=DTYPE, requires_grad=True)
        b2 = torch.zeros(1, dtype=DTYPE, requires_grad=True)
        return cls(
            embed_dim, cfg.alpha, cfg.ego_hops, cfg.ego_cap,
            {"w1": w1, "b1": b1, "w2": w2, "b2": b2}, seed,
        )

    def parameters(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]

    def logits(self, cand_rows: torch.Tensor, center_rows: torch.Tensor) -> torch.Tensor:
        x = torch.cat([cand_rows, center_rows], dim=1)
        h = torch.relu(linear(x, self.w1, self.b1))
        out = linear(h, self.w2, self.b2).squeeze(-1)
        return out.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)


def build_prompt_samples(
    similar: CommunitySet,
    g: Graph,
    k: int,
    rng: np.random.Generator,
    cap: int | None = None,
    all_centers: bool = False,
) -> list:
    """Labeled (center, candidate) pairs from ego structures of community centers.

    Default: one random community and one random center per call. With
    all_centers, every member of every community serves as a center once.
    """
    if all_centers:
        picks = [(c, w) for c in similar.communities for w in sorted(c.members)]
    else:
        comm = similar.communities[int(rng.choice(len(similar)))]
        members = comm.sorted_members()
        picks = [(comm, int(rng.choice(members)))]
    samples = []
    for comm, w in picks:
        ego = k_ego(g, [w], k, cap=cap)
        for u in map(int, ego.nodes):
            if u == w:
                continue
            samples.append(PromptSample(w, u, 1 if u in comm.members else 0))
    return samples


def prompt_loss(model: PromptModel, samples: list, tab: EmbeddingTable) -> torch.Tensor:
    """Summed binary cross-entropy of pair scores against membership labels."""
    if not samples:
        raise ValueError("need at least one sample")
    cand = to_tensor(tab.rows([s.candidate for s in samples]))
    cent = to_tensor(tab.rows([s.center for s in samples]))
    labels = to_tensor([float(s.label) for s in samples])
    logits = model.logits(cand, cent)
    return torch.nn.functional.binary_cross_entropy_with_logits(logits, labels, reduction="sum")


def train_prompt(
    similar: CommunitySet,
    g: Graph,
    tab: EmbeddingTable,
    cfg: PromptConfig,
    rng: np.random.Generator,
    gen: torch.Generator,
    seed: int = 0,
):
    """One full-batch descent step per epoch on freshly drawn samples.

    Returns (model, loss history). Epochs whose drawn center has an empty
    ego neighborhood are skipped (history records a None).
    """
    cfg.validate()
    model = PromptModel.initial(tab.dim, cfg, gen, seed)
    history = []
    for epoch in range(cfg.epochs):
        samples = build_prompt_samples(
            similar, g, cfg.ego_hops, rng, cap=cfg.ego_cap, all_centers=cfg.all_centers
        )
        if not samples:
            history.append(None)
            continue
        loss = prompt_loss(model, samples, tab)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite prompt loss at epoch {epoch}")
        params = model.parameters()
        for p in params:
            p.grad = None
        loss.backward()
        sgd_step(params, cfg.lr)
        history.append(float(loss.item()))
    round_trip_float32(model.parameters())
    return model, history


def predict_community(
    model: PromptModel,
    tab: EmbeddingTable,
    g: Graph,
    query: int,
    initial: Community,
    alpha: float | None = None,
) -> Community:
    """Threshold pair scores over the ego neighborhood of the generated community.

    The query node is always included. ``alpha`` overrides the model's
    stored threshold when given.
    """
    if query not in initial.members:
        raise ValueError("initial community must contain the query node")
    threshold = model.alpha if alpha is None else alpha
    if not 0 <= threshold <= 1:
        raise ValueError("alpha must be in [0, 1]")
    ego = k_ego(g, initial.sorted_members(), model.ego_hops, cap=model.ego_cap)
    candidates = np.asarray(ego.nodes, dtype=np.int64)
    with torch.no_grad():
        logits = model.logits(
            to_tensor(tab.rows(candidates)),
            to_tensor(np.tile(tab.row(query), (len(candidates), 1))),
        )
        probs = torch.sigmoid(logits).numpy()
    members = {int(u) for u, p in zip(candidates, probs) if p >= threshold}
    members.add(int(query))
    return Community(frozenset(members))


def save_prompt(path, model: PromptModel) -> None:
    meta = {
        "embed_dim": model.embed_dim,
        "alpha": model.alpha,
        "ego_hops": model.ego_hops,
        "ego_cap": model.ego_cap,
        "seed": model.seed,
    }
    named = [(n, p) for n, p in zip(PromptModel.PARAM_NAMES, model.parameters())]
    checkpoint.save_checkpoint(path, "prompt", meta, named)


def load_prompt(path) -> PromptModel:
    meta, arrays = checkpoint.load_checkpoint(path, "prompt")
    params = checkpoint.tensors_from_arrays(arrays)
    return PromptModel(
        int(meta["embed_dim"]),
        float(meta["alpha"]),
        int(meta["ego_hops"]),
        int(meta["ego_cap"]),
        params,
        int(meta["seed"]),
    )
