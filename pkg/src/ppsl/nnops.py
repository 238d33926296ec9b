"""Small shared torch building blocks.

Everything computes in float64 on CPU; aggregation uses index_add so repeated
runs produce identical bits.
"""

import numpy as np
import torch

DTYPE = torch.float64


def _writable(arr: np.ndarray) -> np.ndarray:
    return arr.copy() if not arr.flags.writeable else arr


def to_tensor(arr) -> torch.Tensor:
    return torch.as_tensor(_writable(np.asarray(arr)), dtype=DTYPE)


def index_tensor(arr) -> torch.Tensor:
    return torch.as_tensor(_writable(np.asarray(arr, dtype=np.int64)), dtype=torch.long)


def init_linear(
    in_dim: int, out_dim: int, gen: torch.Generator, bias: bool = True, scale: float | None = None
):
    """Uniform(-s, s) weight with s = 1/sqrt(in_dim) by default, zero bias.

    Returns (weight, bias_or_None) leaf tensors with requires_grad set.
    """
    s = scale if scale is not None else 1.0 / np.sqrt(in_dim)
    w = (torch.rand((out_dim, in_dim), generator=gen, dtype=DTYPE) * 2 - 1) * s
    w.requires_grad_(True)
    if not bias:
        return w, None
    b = torch.zeros(out_dim, dtype=DTYPE, requires_grad=True)
    return w, b


def linear(x: torch.Tensor, w: torch.Tensor, b: torch.Tensor | None) -> torch.Tensor:
    out = x @ w.T
    return out if b is None else out + b


def segment_sum(values: torch.Tensor, segments: torch.Tensor, num_segments: int) -> torch.Tensor:
    """Sum rows of ``values`` grouped by ``segments`` (shape (n,), ids < num_segments)."""
    out = torch.zeros((num_segments, values.shape[1]), dtype=values.dtype)
    return out.index_add(0, segments, values)


def segment_mean(values: torch.Tensor, segments: torch.Tensor, num_segments: int) -> torch.Tensor:
    sums = segment_sum(values, segments, num_segments)
    counts = torch.zeros(num_segments, dtype=values.dtype)
    counts = counts.index_add(0, segments, torch.ones(len(segments), dtype=values.dtype))
    return sums / counts.clamp(min=1.0).unsqueeze(1)


def symmetric_gcn_propagate(x: torch.Tensor, local_edges: np.ndarray) -> torch.Tensor:
    """One D^-1/2 (A+I) D^-1/2 propagation over a local edge list.

    ``local_edges`` indexes rows of ``x``; self-loops are added internally.
    """
    n = x.shape[0]
    if len(local_edges):
        e = index_tensor(local_edges)
        src = torch.cat([e[:, 0], e[:, 1], torch.arange(n)])
        dst = torch.cat([e[:, 1], e[:, 0], torch.arange(n)])
    else:
        src = dst = torch.arange(n)
    deg = torch.zeros(n, dtype=x.dtype).index_add(0, dst, torch.ones(len(src), dtype=x.dtype))
    inv_sqrt = deg.rsqrt()
    messages = x[src] * (inv_sqrt[src] * inv_sqrt[dst]).unsqueeze(1)
    return torch.zeros_like(x).index_add(0, dst, messages)


def mean_neighbor_aggregate(x: torch.Tensor, local_edges: np.ndarray) -> torch.Tensor:
    """Mean of neighbor rows (no self term); isolated rows aggregate to zero."""
    n = x.shape[0]
    if not len(local_edges):
        return torch.zeros_like(x)
    e = index_tensor(local_edges)
    src = torch.cat([e[:, 0], e[:, 1]])
    dst = torch.cat([e[:, 1], e[:, 0]])
    return segment_mean(x[src], dst, n)


def cosine(a: torch.Tensor, b: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Row-wise cosine similarity with clamped norms."""
    num = (a * b).sum(-1)
    den = a.norm(dim=-1).clamp(min=eps) * b.norm(dim=-1).clamp(min=eps)
    return num / den


def flatten_params(params: list) -> torch.Tensor:
    return torch.cat([p.detach().reshape(-1) for p in params])


def assign_flat(params: list, flat: torch.Tensor) -> None:
    offset = 0
    with torch.no_grad():
        for p in params:
            num = p.numel()
            p.copy_(flat[offset : offset + num].reshape(p.shape))
            offset += num
    if offset != len(flat):
        raise ValueError("flat vector length does not match parameter count")


def round_trip_float32(params: list) -> None:
    """Snap parameters to their float32 representation in place.

    Keeps in-memory models bit-identical to what a checkpoint save/load
    round trip would produce.
    """
    with torch.no_grad():
        for p in params:
            p.copy_(p.to(torch.float32).to(DTYPE))


class Adam:
    """Standard adaptive-moment optimizer over a list of leaf tensors."""

    def __init__(self, params: list, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [torch.zeros_like(p) for p in params]
        self.v = [torch.zeros_like(p) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.grad = None

    def step(self) -> None:
        self.t += 1
        with torch.no_grad():
            for p, m, v in zip(self.params, self.m, self.v):
                if p.grad is None:
                    continue
                g = p.grad
                m.mul_(self.b1).add_(g, alpha=1 - self.b1)
                v.mul_(self.b2).addcmul_(g, g, value=1 - self.b2)
                m_hat = m / (1 - self.b1**self.t)
                v_hat = v / (1 - self.b2**self.t)
                p.addcdiv_(m_hat, v_hat.sqrt().add_(self.eps), value=-self.lr)


def sgd_step(params: list, lr: float) -> None:
    """One plain gradient-descent step (caller controls the loss sign)."""
    with torch.no_grad():
        for p in params:
            if p.grad is not None:
                p.add_(p.grad, alpha=-lr)
