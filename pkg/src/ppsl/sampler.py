"""Policy-gradient agent that grows a community around a query node.

The agent scores frontier nodes with message passing over the current
state subgraph plus a learned stop action. Rewards are F-score deltas
against the training community; similar known communities are retrieved
afterwards by embedding distance to the generated community.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from . import checkpoint
from .encoder import EmbeddingTable, embed_community
from .graph import Community, CommunitySet, Graph, ROLE_PROMPT_SAMPLES
from .metrics import fscore
from .nnops import (
    DTYPE,
    index_tensor,
    init_linear,
    linear,
    mean_neighbor_aggregate,
    round_trip_float32,
    sgd_step,
    to_tensor,
)

logger = logging.getLogger(__name__)

STOP = -1


@dataclass
class SamplerConfig:
    embed_dim: int = 64
    mp_rounds: int = 3
    mlp_layers: int = 3
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-2
    gamma: float = 1.0

    def validate(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.embed_dim < 1 or self.mp_rounds < 1 or self.mlp_layers < 1:
            raise ValueError("dimensions and layer counts must be >= 1")


class Agent:
    """Projection of node embeddings, type vectors, message passing and scoring head."""

    def __init__(self, cfg: SamplerConfig, in_dim: int, params: dict, seed: int):
        cfg.validate()
        self.cfg = cfg
        self.in_dim = in_dim
        self.seed = seed
        self.params_by_name = dict(params)
        for name in self.param_names(cfg):
            if name not in params:
                raise ValueError(f"missing agent parameter {name}")

    @staticmethod
    def param_names(cfg: SamplerConfig) -> list:
        names = ["proj_w", "proj_b", "q1", "q2"]
        for i in range(cfg.mp_rounds):
            names += [f"mp{i}_self", f"mp{i}_nbr", f"mp{i}_bias"]
        for i in range(cfg.mlp_layers):
            names += [f"head{i}_w", f"head{i}_b"]
        names.append("stop")
        return names

    @classmethod
    def initial(cls, cfg: SamplerConfig, in_dim: int, gen: torch.Generator, seed: int) -> "Agent":
        d = cfg.embed_dim
        params = {}
        params["proj_w"], params["proj_b"] = init_linear(in_dim, d, gen)
        scale = 1.0 / np.sqrt(d)
        for q in ("q1", "q2"):
            vec = (torch.rand(d, generator=gen, dtype=DTYPE) * 2 - 1) * scale
            params[q] = vec.requires_grad_(True)
        for i in range(cfg.mp_rounds):
            params[f"mp{i}_self"], params[f"mp{i}_bias"] = init_linear(d, d, gen)
            params[f"mp{i}_nbr"], _ = init_linear(d, d, gen, bias=False)
        for i in range(cfg.mlp_layers):
            out = 1 if i == cfg.mlp_layers - 1 else d
            params[f"head{i}_w"], params[f"head{i}_b"] = init_linear(d, out, gen)
        params["stop"] = torch.zeros(1, dtype=DTYPE, requires_grad=True)
        return cls(cfg, in_dim, params, seed)

    def parameters(self) -> list:
        return [self.params_by_name[n] for n in self.param_names(self.cfg)]

    def p(self, name: str) -> torch.Tensor:
        return self.params_by_name[name]

    def project(self, row: np.ndarray) -> torch.Tensor:
        return linear(to_tensor(row), self.p("proj_w"), self.p("proj_b"))

    def message_pass(self, x: torch.Tensor, local_edges: np.ndarray) -> torch.Tensor:
        h = x
        for i in range(self.cfg.mp_rounds):
            agg = mean_neighbor_aggregate(h, local_edges)
            h = torch.relu(
                linear(h, self.p(f"mp{i}_self"), self.p(f"mp{i}_bias"))
                + linear(agg, self.p(f"mp{i}_nbr"), None)
            )
        return h

    def score_head(self, h: torch.Tensor) -> torch.Tensor:
        for i in range(self.cfg.mlp_layers):
            h = linear(h, self.p(f"head{i}_w"), self.p(f"head{i}_b"))
            if i < self.cfg.mlp_layers - 1:
                h = torch.relu(h)
        return h.squeeze(-1)


@dataclass(frozen=True)
class ExpansionState:
    """Current community (insertion order), its frontier and their induced subgraph."""

    community: tuple
    members: frozenset
    frontier: np.ndarray
    nodes: np.ndarray
    local_edges: np.ndarray

    @classmethod
    def create(cls, g: Graph, ordered_members) -> "ExpansionState":
        community = tuple(int(v) for v in ordered_members)
        members = frozenset(community)
        if len(members) != len(community):
            raise ValueError("duplicate community members")
        frontier_set = set()
        for v in members:
            for w in g.neighbors(v):
                if int(w) not in members:
                    frontier_set.add(int(w))
        frontier = np.array(sorted(frontier_set), dtype=np.int64)
        nodes = np.array(sorted(members | frontier_set), dtype=np.int64)
        edges = g.induced_edges(nodes)
        local = np.searchsorted(nodes, edges) if len(edges) else edges
        return cls(community, members, frontier, nodes, local)

    def extend(self, g: Graph, node: int) -> "ExpansionState":
        if node not in set(map(int, self.frontier)):
            raise ValueError(f"node {node} is not in the frontier")
        return ExpansionState.create(g, self.community + (int(node),))


@dataclass
class Trajectory:
    query: int
    truth: frozenset
    actions: list
    rewards: list
    returns: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)


def init_node_features(
    agent: Agent, state: ExpansionState, query: int, tab: EmbeddingTable
) -> torch.Tensor:
    """Type-vector features: community members get q2, the query adds max(z)·q1."""
    if query not in set(map(int, state.nodes)):
        raise ValueError("query must be part of the state")
    n = len(state.nodes)
    member_mask = to_tensor([1.0 if int(v) in state.members else 0.0 for v in state.nodes])
    query_mask = to_tensor([1.0 if int(v) == query else 0.0 for v in state.nodes])
    g_val = agent.project(tab.row(query)).max()
    return query_mask.unsqueeze(1) * (g_val * agent.p("q1")) + member_mask.unsqueeze(1) * agent.p(
        "q2"
    )


def action_log_probs(
    agent: Agent, state: ExpansionState, query: int, tab: EmbeddingTable
) -> torch.Tensor:
    """Log-probabilities over [frontier nodes..., stop], differentiable."""
    if len(state.frontier) == 0:
        return torch.zeros(1, dtype=DTYPE)
    x = init_node_features(agent, state, query, tab)
    h = agent.message_pass(x, state.local_edges)
    frontier_pos = np.searchsorted(state.nodes, state.frontier)
    scores = agent.score_head(h[index_tensor(frontier_pos)])
    logits = torch.cat([scores.reshape(-1), agent.p("stop").reshape(1)])
    if not torch.isfinite(logits).all():
        raise RuntimeError("non-finite policy logits")
    return torch.log_softmax(logits, dim=0)


def policy_distribution(
    agent: Agent, state: ExpansionState, query: int, tab: EmbeddingTable
) -> np.ndarray:
    """Probabilities over frontier ∪ {stop}; the stop entry is last."""
    with torch.no_grad():
        return torch.exp(action_log_probs(agent, state, query, tab)).numpy()


def step_reward(c_t, c_prev, c_true) -> float:
    """F-score gain of the expansion step; a stop step (c_t == c_prev) earns 0."""
    if not c_true:
        raise ValueError("true community must be nonempty")
    return fscore(c_t, c_true) - fscore(c_prev, c_true)


def returns(rewards: list, gamma: float) -> list:
    """Discounted suffix sums of the reward sequence."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    out = []
    acc = 0.0
    for r in reversed(rewards):
        acc = r + gamma * acc
        out.append(acc)
    return out[::-1]


def sample_trajectory(
    agent: Agent,
    g: Graph,
    tab: EmbeddingTable,
    query: int,
    truth: frozenset,
    gamma: float,
    rng: np.random.Generator,
) -> Trajectory:
    """Roll the stochastic policy out until truth size is reached, stop, or dead end."""
    state = ExpansionState.create(g, [query])
    actions, rewards, log_probs = [], [], []
    while len(state.community) < len(truth):
        probs = policy_distribution(agent, state, query, tab)
        idx = int(rng.choice(len(probs), p=probs / probs.sum()))
        log_probs.append(float(np.log(max(probs[idx], 1e-300))))
        if idx == len(state.frontier):
            actions.append(STOP)
            rewards.append(0.0)
            break
        node = int(state.frontier[idx])
        prev = set(state.community)
        state = state.extend(g, node)
        actions.append(node)
        rewards.append(step_reward(set(state.community), prev, truth))
    traj = Trajectory(query, frozenset(truth), actions, rewards)
    traj.returns = returns(rewards, gamma)
    traj.log_probs = log_probs
    return traj


def trajectory_objective(agent: Agent, g: Graph, tab: EmbeddingTable, traj: Trajectory):
    """Recompute sum_t log pi(a_t | S_{t-1}) * G_t with gradients attached."""
    state = ExpansionState.create(g, [traj.query])
    total = torch.zeros((), dtype=DTYPE)
    for action, g_t in zip(traj.actions, traj.returns):
        lp = action_log_probs(agent, state, traj.query, tab)
        if action == STOP:
            total = total + lp[-1] * g_t
            break
        idx = int(np.searchsorted(state.frontier, action))
        total = total + lp[idx] * g_t
        state = state.extend(g, action)
    return total


def policy_update(agent: Agent, g: Graph, tab: EmbeddingTable, trajectories: list, lr: float):
    """One gradient-ascent step on the batch-mean policy objective."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    objective = torch.zeros((), dtype=DTYPE)
    for traj in trajectories:
        objective = objective + trajectory_objective(agent, g, tab, traj)
    objective = objective / len(trajectories)
    params = agent.parameters()
    for p in params:
        p.grad = None
    (-objective).backward()
    for p in params:
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise RuntimeError("non-finite policy gradient")
    sgd_step(params, lr)
    return float(objective.item())


def teacher_forcing_update(
    agent: Agent,
    community: Community,
    g: Graph,
    tab: EmbeddingTable,
    lr: float,
    rng: np.random.Generator,
):
    """Supervised pass: from a random member seed, reward any in-community frontier node.

    The per-step target is uniform over frontier ∩ community; one descent
    step on the summed cross-entropy. Returns the loss value.
    """
    members = community.sorted_members()
    if len(members) < 2:
        raise ValueError("teacher forcing needs a community of size >= 2")
    seed_node = int(rng.choice(members))
    state = ExpansionState.create(g, [seed_node])
    loss = torch.zeros((), dtype=DTYPE)
    while len(state.community) < len(members):
        in_comm = np.array([int(v) in community.members for v in state.frontier], dtype=bool)
        correct = state.frontier[in_comm]
        if len(correct) == 0:
            logger.warning(
                "community unreachable from seed %d after %d nodes; stopping early",
                seed_node,
                len(state.community),
            )
            break
        lp = action_log_probs(agent, state, seed_node, tab)
        correct_pos = np.searchsorted(state.frontier, correct)
        loss = loss - lp[index_tensor(correct_pos)].mean()
        forced = int(rng.choice(correct))
        state = state.extend(g, forced)
    params = agent.parameters()
    for p in params:
        p.grad = None
    if loss.requires_grad:
        loss.backward()
        for p in params:
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise RuntimeError("non-finite teacher-forcing gradient")
    sgd_step(params, lr)
    return float(loss.item())


def train_agent(
    g: Graph,
    known: CommunitySet,
    tab: EmbeddingTable,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    gen: torch.Generator,
    seed: int = 0,
):
    """Alternate policy-gradient batches and per-community teacher forcing.

    Returns (trained Agent, per-epoch history records). Parameters are
    snapped to float32 at the end to match checkpoint round trips.
    """
    cfg.validate()
    agent = Agent.initial(cfg, tab.dim, gen, seed)
    history = []
    for epoch in range(cfg.epochs):
        trajectories = []
        for comm in known.communities:
            members = comm.sorted_members()
            query = int(rng.choice(members))
            trajectories.append(
                sample_trajectory(agent, g, tab, query, comm.members, cfg.gamma, rng)
            )
        objectives = []
        for start in range(0, len(trajectories), cfg.batch_size):
            batch = trajectories[start : start + cfg.batch_size]
            objectives.append(policy_update(agent, g, tab, batch, cfg.lr))
        tf_losses = [
            teacher_forcing_update(agent, comm, g, tab, cfg.lr, rng)
            for comm in known.communities
            if len(comm) >= 2
        ]
        record = {
            "epoch": epoch,
            "mean_return": float(np.mean([t.returns[0] if t.returns else 0.0 for t in trajectories])),
            "policy_objective": float(np.mean(objectives)) if objectives else 0.0,
            "teacher_forcing_loss": float(np.mean(tf_losses)) if tf_losses else 0.0,
        }
        history.append(record)
        logger.debug(
            "agent epoch %d return %.4f tf-loss %.4f",
            epoch,
            record["mean_return"],
            record["teacher_forcing_loss"],
        )
    round_trip_float32(agent.parameters())
    return agent, history


def generate_initial_community(
    agent: Agent, g: Graph, query: int, tab: EmbeddingTable, size_cap: int
) -> Community:
    """Greedy argmax expansion from the query; halts on stop, dead end, or size cap."""
    state = ExpansionState.create(g, [query])
    while True:
        if len(state.community) > size_cap:
            break
        probs = policy_distribution(agent, state, query, tab)
        idx = int(np.argmax(probs))
        if idx == len(state.frontier):
            break
        state = state.extend(g, int(state.frontier[idx]))
    return Community(frozenset(state.community))


def retrieve_similar(
    tab: EmbeddingTable, initial: Community, known: CommunitySet, m: int
) -> CommunitySet:
    """Top-m known communities by embedding distance to the generated community.

    Ties break by ascending position in the known set; result keeps rank order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > len(known):
        raise ValueError(f"m={m} exceeds the {len(known)} known communities")
    z0 = embed_community(tab, initial.members)
    dists = np.array(
        [np.linalg.norm(z0 - embed_community(tab, c.members)) for c in known.communities]
    )
    order = np.lexsort((np.arange(len(dists)), dists))
    picked = tuple(known.communities[int(i)] for i in order[:m])
    return CommunitySet(picked, ROLE_PROMPT_SAMPLES)


def save_agent(path, agent: Agent) -> None:
    cfg = agent.cfg
    meta = {
        "in_dim": agent.in_dim,
        "embed_dim": cfg.embed_dim,
        "mp_rounds": cfg.mp_rounds,
        "mlp_layers": cfg.mlp_layers,
        "gamma": cfg.gamma,
        "seed": agent.seed,
    }
    named = [(n, agent.p(n)) for n in Agent.param_names(cfg)]
    checkpoint.save_checkpoint(path, "agent", meta, named)


def load_agent(path) -> Agent:
    meta, arrays = checkpoint.load_checkpoint(path, "agent")
    cfg = SamplerConfig(
        embed_dim=int(meta["embed_dim"]),
        mp_rounds=int(meta["mp_rounds"]),
        mlp_layers=int(meta["mlp_layers"]),
        gamma=float(meta["gamma"]),
    )
    params = checkpoint.tensors_from_arrays(arrays)
    return Agent(cfg, int(meta["in_dim"]), params, int(meta["seed"]))
