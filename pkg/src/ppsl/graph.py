"""Graph data model, SNAP-format ingestion, structural features and fixtures.

Node ids inside the library are always dense internal indices 0..n-1; the
mapping to the external ids found in edge-list files lives on the Graph.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class Graph:
    """Immutable undirected graph with dense internal node indices.

    Invariants: no self-loops, no duplicate edges, symmetric adjacency.
    """

    def __init__(self, num_nodes: int, edges, external_ids=None):
        if num_nodes <= 0:
            raise ValueError("graph must have at least one node")
        edge_arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if edge_arr.size:
            if edge_arr.min() < 0 or edge_arr.max() >= num_nodes:
                raise ValueError("edge endpoint outside 0..num_nodes-1")
            if np.any(edge_arr[:, 0] == edge_arr[:, 1]):
                raise ValueError("self-loops are not allowed")
            edge_arr = np.sort(edge_arr, axis=1)
            edge_arr = np.unique(edge_arr, axis=0)
        self.num_nodes = int(num_nodes)
        self.edges = edge_arr
        self.edges.setflags(write=False)

        neighbor_lists = [[] for _ in range(num_nodes)]
        for u, v in edge_arr:
            neighbor_lists[u].append(v)
            neighbor_lists[v].append(u)
        self._adj = [np.array(sorted(nbrs), dtype=np.int64) for nbrs in neighbor_lists]
        for arr in self._adj:
            arr.setflags(write=False)
        self._adj_sets = [set(map(int, nbrs)) for nbrs in self._adj]
        self.degrees = np.array([len(a) for a in self._adj], dtype=np.int64)
        self.degrees.setflags(write=False)

        if external_ids is None:
            external_ids = np.arange(num_nodes, dtype=np.int64)
        self.external_ids = np.asarray(external_ids, dtype=np.int64)
        if self.external_ids.shape != (num_nodes,):
            raise ValueError("external_ids must have one entry per node")
        self.external_ids.setflags(write=False)
        self._to_internal = {int(e): i for i, e in enumerate(self.external_ids)}
        if len(self._to_internal) != num_nodes:
            raise ValueError("external ids must be unique")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int) -> np.ndarray:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return int(self.degrees[u])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj_sets[u]

    def to_internal(self, external_id: int) -> int:
        try:
            return self._to_internal[int(external_id)]
        except KeyError:
            raise KeyError(f"unknown external node id {external_id}") from None

    def to_external(self, internal_id: int) -> int:
        return int(self.external_ids[internal_id])

    def induced_edges(self, nodes) -> np.ndarray:
        """Edges of the subgraph induced by ``nodes`` (internal ids), as (m, 2)."""
        node_set = set(int(v) for v in nodes)
        out = []
        for u in sorted(node_set):
            for v in self._adj[u]:
                if v > u and int(v) in node_set:
                    out.append((u, int(v)))
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    def write_edge_list(self, path) -> None:
        """Write external-id edge list, one "u<TAB>v" line per edge."""
        order = np.lexsort((self.edges[:, 1], self.edges[:, 0])) if self.num_edges else []
        with open(path, "w") as fh:
            fh.write("# undirected edge list\n")
            for idx in order:
                u, v = self.edges[idx]
                fh.write(f"{self.to_external(u)}\t{self.to_external(v)}\n")


@dataclass(frozen=True)
class Community:
    """Nonempty set of internal node ids."""

    members: frozenset

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(v) for v in self.members))
        if not self.members:
            raise ValueError("community must be nonempty")

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, node: int) -> bool:
        return node in self.members

    def __iter__(self):
        return iter(sorted(self.members))

    def sorted_members(self) -> np.ndarray:
        return np.array(sorted(self.members), dtype=np.int64)


ROLE_KNOWN = "known-training"
ROLE_GROUND_TRUTH = "ground-truth-evaluation"
ROLE_PROMPT_SAMPLES = "prompt-samples"


@dataclass(frozen=True)
class CommunitySet:
    communities: tuple
    role: str

    def __post_init__(self):
        object.__setattr__(self, "communities", tuple(self.communities))
        if not self.communities:
            raise ValueError("community set must be nonempty")
        if self.role not in (ROLE_KNOWN, ROLE_GROUND_TRUTH, ROLE_PROMPT_SAMPLES):
            raise ValueError(f"unknown community-set role {self.role!r}")

    def __len__(self) -> int:
        return len(self.communities)

    def __iter__(self):
        return iter(self.communities)

    def max_size(self) -> int:
        return max(len(c) for c in self.communities)


class FeatureTable:
    """Per-node degree-statistics vectors: [deg, max, min, mean, std of neighbor degrees]."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def row(self, node: int) -> np.ndarray:
        return self.matrix[node]


@dataclass(frozen=True)
class Subgraph:
    """Induced subgraph of a parent Graph with a designated center.

    ``nodes`` is sorted ascending; ``edges`` are exactly the parent's edges
    with both endpoints in ``nodes``; ``center`` holds the seed node(s).
    """

    nodes: np.ndarray
    edges: np.ndarray
    center: tuple

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))
        if nodes.size == 0:
            raise ValueError("subgraph must be nonempty")
        self.nodes.setflags(write=False)
        self.edges.setflags(write=False)

    def __len__(self) -> int:
        return len(self.nodes)

    def local_index(self, nodes) -> np.ndarray:
        """Map parent-graph ids to positions in the sorted ``nodes`` array."""
        idx = np.searchsorted(self.nodes, nodes)
        if np.any(idx >= len(self.nodes)) or np.any(self.nodes[idx] != nodes):
            raise KeyError("node not in subgraph")
        return idx

    def local_edges(self) -> np.ndarray:
        if self.edges.size == 0:
            return self.edges
        return np.searchsorted(self.nodes, self.edges)


def load_edge_list(path) -> Graph:
    """Load a whitespace-separated edge list ('#' comments allowed).

    External ids are remapped to dense internal indices in ascending
    external-id order. Duplicate and reversed edges collapse to one edge;
    self-loop lines are skipped (counted in a log message).
    """
    ext_edges = []
    self_loops = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two node ids, got {text!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer node id in {text!r}") from None
            if u < 0 or v < 0:
                raise ValueError(f"{path}:{lineno}: negative node id in {text!r}")
            if u == v:
                self_loops += 1
                continue
            ext_edges.append((u, v))
    if not ext_edges:
        raise ValueError(f"{path}: no edges found, graph would be empty")
    if self_loops:
        logger.warning("%s: skipped %d self-loop line(s)", path, self_loops)

    ext_ids = np.unique(np.array(ext_edges, dtype=np.int64).ravel())
    index = {int(e): i for i, e in enumerate(ext_ids)}
    internal = [(index[u], index[v]) for u, v in ext_edges]
    return Graph(len(ext_ids), internal, external_ids=ext_ids)


def load_communities(path, g: Graph) -> CommunitySet:
    """Load one whitespace-separated community per line, remapped to internal ids.

    Ids absent from the graph are dropped (one warning with the total count);
    lines left empty by the drop are skipped.
    """
    communities = []
    dropped = 0
    with open(path) as fh:
        for line in fh:
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            members = set()
            for token in text.split():
                ext = int(token)
                if ext in g._to_internal:
                    members.add(g._to_internal[ext])
                else:
                    dropped += 1
            if members:
                communities.append(Community(frozenset(members)))
    if dropped:
        logger.warning("%s: dropped %d node id(s) not present in the graph", path, dropped)
    if not communities:
        raise ValueError(f"{path}: no communities found")
    return CommunitySet(tuple(communities), ROLE_GROUND_TRUTH)


def structural_features(g: Graph) -> FeatureTable:
    """Degree-statistics node features; std is the population std, isolated rows are 0."""
    degs = g.degrees.astype(np.float64)
    rows = np.zeros((g.num_nodes, 5), dtype=np.float64)
    for v in range(g.num_nodes):
        nbrs = g.neighbors(v)
        if len(nbrs) == 0:
            continue
        nd = degs[nbrs]
        rows[v] = [degs[v], nd.max(), nd.min(), nd.mean(), nd.std()]
    return FeatureTable(rows)


def k_ego(g: Graph, seeds, k: int, cap: int | None = None) -> Subgraph:
    """Nodes within k hops of any seed, with induced edges.

    When ``cap`` is given, nodes are kept in BFS layer order, breaking the
    last admitted layer by ascending id.
    """
    seed_list = sorted(set(int(s) for s in seeds))
    if not seed_list:
        raise ValueError("seeds must be nonempty")
    for s in seed_list:
        if s < 0 or s >= g.num_nodes:
            raise ValueError(f"invalid seed id {s}")
    if k < 0:
        raise ValueError("k must be >= 0")

    kept = list(seed_list)
    visited = set(seed_list)
    frontier = seed_list
    for _ in range(k):
        if cap is not None and len(kept) >= cap:
            break
        nxt = set()
        for u in frontier:
            for v in g.neighbors(u):
                if int(v) not in visited:
                    nxt.add(int(v))
        layer = sorted(nxt)
        if cap is not None and len(kept) + len(layer) > cap:
            layer = layer[: cap - len(kept)]
        kept.extend(layer)
        visited.update(layer)
        frontier = layer
        if not frontier:
            break
    nodes = np.array(sorted(kept), dtype=np.int64)
    return Subgraph(nodes, g.induced_edges(nodes), tuple(seed_list))


def corrupt(s: Subgraph, rho: float, rng: np.random.Generator) -> Subgraph:
    """Keep the center plus ceil(rho * (|s|-1)) uniformly chosen other nodes."""
    if not 0 < rho <= 1:
        raise ValueError("rho must be in (0, 1]")
    if len(s.center) != 1:
        raise ValueError("corruption requires a single-node center")
    center = s.center[0]
    others = s.nodes[s.nodes != center]
    if len(others) + 1 != len(s.nodes):
        raise ValueError("center must be contained in the subgraph")
    keep = int(np.ceil(rho * len(others)))
    chosen = rng.choice(others, size=keep, replace=False) if keep else np.empty(0, np.int64)
    nodes = np.array(sorted({center, *map(int, chosen)}), dtype=np.int64)
    node_set = set(map(int, nodes))
    mask = [u in node_set and v in node_set for u, v in s.edges]
    edges = s.edges[np.array(mask, dtype=bool)] if len(s.edges) else s.edges
    return Subgraph(nodes, edges, (center,))


def ground_truth_for(node: int, cs: CommunitySet) -> int | None:
    """Index of the node's ground-truth community.

    Overlaps resolve to the community with the smallest minimum member id
    (ties broken by lexicographically smallest member tuple).
    """
    best = None
    best_key = None
    for idx, comm in enumerate(cs.communities):
        if node in comm:
            key = (min(comm.members), tuple(sorted(comm.members)))
            if best_key is None or key < best_key:
                best, best_key = idx, key
    return best


def sample_query_nodes(cs: CommunitySet, count: int) -> list:
    """Sample query nodes at regular intervals from the community-node pool.

    Returns (node, ground-truth community index) pairs; the pool is the
    id-sorted union of community members, sampled at stride floor(pool/count)
    starting at index 0.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    pool = sorted({v for comm in cs.communities for v in comm.members})
    if len(pool) < count:
        raise ValueError(f"query pool has {len(pool)} nodes, need {count}")
    stride = len(pool) // count
    picked = [pool[i * stride] for i in range(count)]
    return [(node, ground_truth_for(node, cs)) for node in picked]


def select_known_communities(
    cs: CommunitySet, excluded: set, count: int, rng: np.random.Generator
) -> CommunitySet:
    """Uniformly sample known-training communities, avoiding query ground truths.

    Communities whose index is in ``excluded`` are used only to top up when
    fewer than ``count`` others exist; the final size is min(count, |cs|).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    eligible = [i for i in range(len(cs.communities)) if i not in excluded]
    rest = [i for i in range(len(cs.communities)) if i in excluded]
    take = min(count, len(cs.communities))
    chosen = list(rng.choice(eligible, size=min(take, len(eligible)), replace=False)) if eligible else []
    if len(chosen) < take:
        deficit = take - len(chosen)
        chosen.extend(rng.choice(rest, size=deficit, replace=False))
        logger.warning(
            "known-community pool short of %d after excluding query ground truths; "
            "reused %d excluded communities", count, deficit,
        )
    if take < count:
        logger.warning("only %d communities available, requested %d", take, count)
    picked = tuple(cs.communities[int(i)] for i in sorted(chosen))
    return CommunitySet(picked, ROLE_KNOWN)


def generate_planted_partition(
    n_communities: int, size: int, p_in: float, p_out: float, rng: np.random.Generator
):
    """Planted-partition fixture: disjoint blocks with dense intra-block edges.

    Returns (Graph, ground-truth CommunitySet); deterministic given the rng.
    """
    if not 0 <= p_out < p_in <= 1:
        raise ValueError("need 0 <= p_out < p_in <= 1")
    if n_communities < 1 or size < 1:
        raise ValueError("n_communities and size must be >= 1")
    n = n_communities * size
    block = np.arange(n) // size
    draws = rng.random((n, n))
    prob = np.where(block[:, None] == block[None, :], p_in, p_out)
    upper = np.triu(draws < prob, k=1)
    edges = np.argwhere(upper)
    g = Graph(n, edges)
    comms = tuple(
        Community(frozenset(range(b * size, (b + 1) * size))) for b in range(n_communities)
    )
    return g, CommunitySet(comms, ROLE_GROUND_TRUTH)
