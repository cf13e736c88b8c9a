"""Graph pointer policy that builds spanning trees or perfect matchings edge by edge.

The encoder runs residual message passing on the complete graph and turns
vertex embeddings into one embedding per canonical edge. An LSTM cell
summarizes the edges picked so far into a query, and an additive attention
head scores every edge. Infeasible edges are masked out before the softmax,
so each rollout is a valid tree (no cycles) or matching (no shared endpoint)
by construction.

Everything is batched over instances ``B`` and samples per instance ``S``;
the single-instance helpers at the bottom wrap the batched code.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from .instance import EdgeId, Instance, canonical_edge, edge_endpoints

MODES = ("tree", "matching")
CHECKPOINT_VERSION = 1


class NumericalError(FloatingPointError):
    def __init__(self, message: str, layer: Optional[int] = None):
        self.layer = layer
        super().__init__(message if layer is None else f"{message} (encoder layer {layer})")


class NoFeasibleActionError(RuntimeError):
    pass


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


@dataclass(frozen=True)
class SpanningTree:
    n: int
    edges: Tuple[EdgeId, ...]

    def __post_init__(self):
        edges = tuple(sorted(canonical_edge(u, v) for u, v in self.edges))
        object.__setattr__(self, "edges", edges)

    def validate(self) -> None:
        if len(self.edges) != self.n - 1:
            raise ValueError(f"a spanning tree on {self.n} vertices has {self.n - 1} edges, got {len(self.edges)}")
        uf = UnionFind(self.n)
        for u, v in self.edges:
            if not (0 <= u < v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range")
            if not uf.union(u, v):
                raise ValueError(f"edge ({u}, {v}) closes a cycle")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except ValueError:
            return False
        return True

    def adjacency(self) -> List[List[int]]:
        adj = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for nbrs in adj:
            nbrs.sort()
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def weight(self, inst: Instance) -> float:
        return float(sum(inst.weight(u, v) for u, v in self.edges))


@dataclass(frozen=True)
class Matching:
    odd_set: Tuple[int, ...]
    edges: Tuple[EdgeId, ...]

    def __post_init__(self):
        object.__setattr__(self, "odd_set", tuple(sorted(int(v) for v in self.odd_set)))
        object.__setattr__(self, "edges", tuple(sorted(canonical_edge(u, v) for u, v in self.edges)))

    def validate(self) -> None:
        if len(self.odd_set) % 2:
            raise ValueError(f"vertex set of odd size {len(self.odd_set)} has no perfect matching")
        if len(self.edges) != len(self.odd_set) // 2:
            raise ValueError("wrong number of matching edges")
        covered = [v for e in self.edges for v in e]
        if sorted(covered) != list(self.odd_set):
            raise ValueError("matching does not cover the vertex set exactly once")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except ValueError:
            return False
        return True

    def weight(self, inst: Instance) -> float:
        return float(sum(inst.weight(u, v) for u, v in self.edges))


@dataclass
class RolloutTrace:
    mode: str
    chosen: List[EdgeId]
    step_logprob: np.ndarray
    step_entropy: np.ndarray
    step_reward: np.ndarray
    feasible_count: np.ndarray
    vertex_subset: Optional[Tuple[int, ...]] = None

    @property
    def total_reward(self) -> float:
        return float(self.step_reward.sum())

    def tree(self, n: int) -> SpanningTree:
        return SpanningTree(n, tuple(self.chosen))

    def matching(self) -> Matching:
        return Matching(self.vertex_subset, tuple(self.chosen))


@dataclass
class BatchRollout:
    """Tensor results of a batched decode, each shaped ``(B, S, kappa)``.

    ``log_prob`` and ``entropy`` keep their autograd history.
    """

    mode: str
    chosen: torch.Tensor
    log_prob: torch.Tensor
    entropy: torch.Tensor
    reward: torch.Tensor
    feasible_count: torch.Tensor

    @property
    def total_reward(self) -> torch.Tensor:
        return self.reward.sum(-1)

    def mean_entropy(self) -> torch.Tensor:
        return self.entropy.mean(-1)


def _sample_categorical(p: torch.Tensor, feasible: torch.Tensor, generator) -> torch.Tensor:
    """Inverse-CDF draw along the last axis; never returns a zero-probability index."""
    cum = p.cumsum(-1)
    u = torch.rand(p.shape[:-1], generator=generator, dtype=p.dtype)
    target = (u * cum[..., -1])[..., None]
    idx = torch.searchsorted(cum, target, right=True)[..., 0]
    last = (feasible * torch.arange(1, p.shape[-1] + 1)).argmax(-1)
    return torch.where(idx >= p.shape[-1], last, idx)


def torch_generator(rng: Union[np.random.Generator, int, None]) -> torch.Generator:
    """A torch generator seeded from one draw of a numpy stream."""
    if isinstance(rng, torch.Generator):
        return rng
    rng = np.random.default_rng(rng)
    return torch.Generator().manual_seed(int(rng.integers(0, 2 ** 63 - 1)))


def _edge_index_tensors(n: int) -> Tuple[torch.Tensor, torch.Tensor]:
    iu, iv = edge_endpoints(n)
    return torch.from_numpy(iu.astype(np.int64)), torch.from_numpy(iv.astype(np.int64))


class GraphPointerPolicy(nn.Module):
    """Encoder/decoder weights plus the fixed hyperparameters.

    ``aggregation="set"`` divides the neighbor sum by ``|N(u) + {u}| = n``;
    ``"neighbors"`` divides by ``|N(u)| = n - 1``.
    """

    def __init__(
        self,
        hidden_dim: int = 128,
        n_layers: int = 3,
        gamma: float = 0.5,
        d_scale: float = 10.0,
        mode: str = "tree",
        aggregation: str = "set",
    ):
        super().__init__()
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if aggregation not in ("set", "neighbors"):
            raise ValueError("aggregation must be 'set' or 'neighbors'")
        if d_scale <= 0:
            raise ValueError("d_scale must be positive")
        d = hidden_dim
        self.hidden_dim = d
        self.n_layers = n_layers
        self.gamma = float(gamma)
        self.d_scale = float(d_scale)
        self.mode = mode
        self.aggregation = aggregation

        self.vertex_embed = nn.Linear(2, d)
        self.theta = nn.ModuleList(nn.Linear(d, d, bias=False) for _ in range(n_layers))
        self.phi = nn.ModuleList(nn.Linear(d, d) for _ in range(n_layers))
        self.edge_embed = nn.Linear(5, d)
        self.cell = nn.LSTMCell(d, d)
        self.w_key = nn.Linear(d, d, bias=False)
        self.w_query = nn.Linear(d, d, bias=False)
        bound = 1.0 / math.sqrt(d)
        self.v = nn.Parameter(torch.empty(d).uniform_(-bound, bound))
        self.start_token = nn.Parameter(torch.empty(d).uniform_(-bound, bound))

    def config(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "n_layers": self.n_layers,
            "gamma": self.gamma,
            "d_scale": self.d_scale,
            "mode": self.mode,
            "aggregation": self.aggregation,
        }

    @property
    def dtype(self) -> torch.dtype:
        return self.v.dtype

    # -- encoder -----------------------------------------------------------

    def vertex_embeddings(self, coords: torch.Tensor) -> torch.Tensor:
        """Final-layer vertex embeddings ``(B, n, d)``."""
        if coords.dim() == 2:
            coords = coords[None]
        coords = coords.to(self.dtype)
        n = coords.shape[1]
        if n < 2:
            raise ValueError("need at least two vertices to form an edge")
        divisor = n if self.aggregation == "set" else n - 1
        x = self.vertex_embed(coords)
        for layer, (theta, phi) in enumerate(zip(self.theta, self.phi), start=1):
            # complete graph: N(u) + {u} is every vertex, so the aggregate is shared
            agg = x.sum(dim=1, keepdim=True) / divisor
            x = self.gamma * theta(x) + (1.0 - self.gamma) * torch.tanh(phi(agg))
            if not torch.isfinite(x).all():
                raise NumericalError("non-finite vertex embedding", layer=layer)
        return x

    def encode(self, coords: torch.Tensor) -> torch.Tensor:
        """Edge embeddings ``(B, E, d)`` for coordinates ``(B, n, 2)``."""
        if coords.dim() == 2:
            coords = coords[None]
        coords = coords.to(self.dtype)
        n = coords.shape[1]
        x = self.vertex_embeddings(coords)
        iu, iv = _edge_index_tensors(n)
        pu, pv = coords[:, iu], coords[:, iv]
        w = (pu - pv).pow(2).sum(-1, keepdim=True).sqrt()
        feats = torch.cat([w, pu, pv], dim=-1)
        z = self.edge_embed(feats) + x[:, iu] + x[:, iv]
        if not torch.isfinite(z).all():
            raise NumericalError("non-finite edge embedding", layer=self.n_layers)
        return z

    # -- decoder -----------------------------------------------------------

    def scores(self, keys: torch.Tensor, query: torch.Tensor) -> torch.Tensor:
        """Compatibility ``v . tanh(K z + Q q)``; keys ``(B, E, d)``, query ``(B, S, d)``."""
        q = self.w_query(query)
        return torch.tanh(keys[:, None, :, :] + q[:, :, None, :]) @ self.v

    def step_distribution(self, keys, query, feasible, buffer=None):
        if buffer is None:
            y = self.scores(keys, query)
        else:
            # inference only: reuse one (B, S, E, d) buffer instead of reallocating
            torch.add(keys[:, None, :, :], self.w_query(query)[:, :, None, :], out=buffer)
            y = torch.tanh_(buffer) @ self.v
        logits = (self.d_scale * y).masked_fill(~feasible, float("-inf"))
        log_p = torch.log_softmax(logits, dim=-1)
        p = log_p.exp()
        entropy = -(p * log_p.masked_fill(~feasible, 0.0)).sum(-1)
        return p, log_p, entropy

    def decode(
        self,
        z: torch.Tensor,
        weights: torch.Tensor,
        n: int,
        samples: int = 1,
        greedy: bool = False,
        generator: Optional[torch.Generator] = None,
        forced: Optional[torch.Tensor] = None,
        mode: Optional[str] = None,
    ) -> BatchRollout:
        """Run one full decode per (instance, sample).

        ``z``: edge embeddings ``(B, E, d)``; ``weights``: ``(B, E)``.
        ``forced`` (``(B, S, kappa)`` edge indices) replays given choices.
        """
        mode = mode or self.mode
        B, E, d = z.shape
        S = samples if forced is None else forced.shape[1]
        iu, iv = _edge_index_tensors(n)
        kappa = n - 1 if mode == "tree" else n // 2
        if mode == "matching" and n % 2:
            raise ValueError(f"perfect matching needs an even vertex count, got {n}")
        keys = self.w_key(z)
        h = z.new_zeros(B * S, d)
        c = z.new_zeros(B * S, d)
        inp = self.start_token.expand(B * S, d)
        if mode == "tree":
            comp = torch.arange(n).expand(B, S, n).clone()
        else:
            covered = torch.zeros(B, S, n, dtype=torch.bool)
        rows_b = torch.arange(B)[:, None].expand(B, S)
        buffer = None if torch.is_grad_enabled() else z.new_empty(B, S, E, d)
        chosen, logps, ents, rewards, counts = [], [], [], [], []
        for t in range(kappa):
            h, c = self.cell(inp, (h, c))
            if mode == "tree":
                feasible = comp[..., iu] != comp[..., iv]
            else:
                feasible = ~(covered[..., iu] | covered[..., iv])
            count = feasible.sum(-1)
            if (count == 0).any():
                raise NoFeasibleActionError(f"no feasible edge at step {t}")
            p, log_p, entropy = self.step_distribution(keys, h.view(B, S, d), feasible, buffer)
            if forced is not None:
                action = forced[..., t]
                if not feasible.gather(-1, action[..., None]).all():
                    raise ValueError(f"forced edge at step {t} is infeasible")
            elif greedy:
                action = log_p.argmax(-1)
            else:
                action = _sample_categorical(p.detach(), feasible, generator)
            chosen.append(action)
            logps.append(log_p.gather(-1, action[..., None])[..., 0])
            ents.append(entropy)
            rewards.append(-weights[rows_b, action])
            counts.append(count)
            a_u, a_v = iu[action], iv[action]
            if mode == "tree":
                cu = comp.gather(-1, a_u[..., None])
                cv = comp.gather(-1, a_v[..., None])
                comp = torch.where(comp == cv, cu, comp)
            else:
                covered = covered.scatter(-1, a_u[..., None], True).scatter(-1, a_v[..., None], True)
            inp = z[rows_b, action].reshape(B * S, d)
        return BatchRollout(
            mode=mode,
            chosen=torch.stack(chosen, -1),
            log_prob=torch.stack(logps, -1),
            entropy=torch.stack(ents, -1),
            reward=torch.stack(rewards, -1),
            feasible_count=torch.stack(counts, -1),
        )

    def rollout_batch(
        self,
        coords: torch.Tensor,
        samples: int = 1,
        greedy: bool = False,
        generator: Optional[torch.Generator] = None,
        forced: Optional[torch.Tensor] = None,
        mode: Optional[str] = None,
    ) -> BatchRollout:
        """Encode ``(B, n, 2)`` coordinates and decode ``samples`` rollouts each."""
        if coords.dim() == 2:
            coords = coords[None]
        coords = coords.to(self.dtype)
        n = coords.shape[1]
        z = self.encode(coords)
        iu, iv = _edge_index_tensors(n)
        weights = (coords[:, iu] - coords[:, iv]).pow(2).sum(-1).sqrt()
        return self.decode(z, weights, n, samples, greedy, generator, forced, mode)

    def check_finite(self) -> bool:
        return all(bool(torch.isfinite(p).all()) for p in self.parameters())


# -- single-instance operations ------------------------------------------------


def _coords_tensor(policy: GraphPointerPolicy, coords: np.ndarray) -> torch.Tensor:
    return torch.tensor(np.asarray(coords), dtype=policy.dtype)


def encode(policy: GraphPointerPolicy, inst: Instance) -> torch.Tensor:
    """Edge embedding table ``(E, d)`` in lexicographic edge order."""
    with torch.no_grad():
        return policy.encode(_coords_tensor(policy, inst.coords))[0]


def decode_step(
    policy: GraphPointerPolicy,
    z: torch.Tensor,
    query: torch.Tensor,
    feasible: Union[np.ndarray, torch.Tensor],
) -> Tuple[np.ndarray, np.ndarray]:
    """One attention step: probabilities over all edges and the step entropy.

    ``z`` is ``(E, d)``, ``query`` the recurrent hidden state ``(d,)``.
    Infeasible edges get probability exactly zero.
    """
    feasible = torch.as_tensor(np.asarray(feasible), dtype=torch.bool)
    if not feasible.any():
        raise NoFeasibleActionError("decode step called with an empty feasible set")
    with torch.no_grad():
        keys = policy.w_key(z)[None]
        p, _, entropy = policy.step_distribution(keys, query.reshape(1, 1, -1), feasible[None, None])
    return p[0, 0].numpy(), float(entropy[0, 0])


def feasible_mask_tree(n: int, chosen: Sequence[EdgeId]) -> np.ndarray:
    """Edges of K_n joining two different components of ``chosen``."""
    uf = UnionFind(n)
    for u, v in chosen:
        if not uf.union(u, v):
            raise ValueError(f"chosen edges contain a cycle at ({u}, {v})")
    roots = np.array([uf.find(i) for i in range(n)])
    iu, iv = edge_endpoints(n)
    return roots[iu] != roots[iv]


def induced_edges(vertex_subset: Sequence[int]) -> List[EdgeId]:
    """Global edges of the subgraph induced by a sorted vertex subset, lexicographic."""
    vs = sorted(int(v) for v in vertex_subset)
    iu, iv = edge_endpoints(len(vs))
    return [(vs[a], vs[b]) for a, b in zip(iu, iv)]


def feasible_mask_matching(vertex_subset: Sequence[int], chosen: Sequence[EdgeId]) -> np.ndarray:
    """Mask over ``induced_edges(vertex_subset)``: both endpoints still uncovered."""
    covered = set()
    for u, v in chosen:
        if u in covered or v in covered:
            raise ValueError("chosen edges share an endpoint")
        covered.update((u, v))
    return np.array([u not in covered and v not in covered for u, v in induced_edges(vertex_subset)], dtype=bool)


def _traces_from_batch(res: BatchRollout, edges: List[EdgeId], vertex_subset=None) -> List[List[RolloutTrace]]:
    chosen = res.chosen.numpy()
    lp = res.log_prob.detach().numpy()
    ent = res.entropy.detach().numpy()
    rew = res.reward.detach().numpy()
    cnt = res.feasible_count.numpy()
    out = []
    for b in range(chosen.shape[0]):
        row = []
        for s in range(chosen.shape[1]):
            row.append(
                RolloutTrace(
                    mode=res.mode,
                    chosen=[edges[e] for e in chosen[b, s]],
                    step_logprob=lp[b, s].astype(np.float64),
                    step_entropy=ent[b, s].astype(np.float64),
                    step_reward=rew[b, s].astype(np.float64),
                    feasible_count=cnt[b, s],
                    vertex_subset=vertex_subset,
                )
            )
        out.append(row)
    return out


def _local_problem(inst: Instance, mode: str, vertex_subset):
    if mode == "tree":
        if vertex_subset is not None:
            raise ValueError("vertex_subset is only used in matching mode")
        return inst.coords, list(zip(*map(list, edge_endpoints(inst.n)))), None
    if vertex_subset is None:
        vertex_subset = range(inst.n)
    vs = tuple(sorted(int(v) for v in vertex_subset))
    if len(vs) < 2 or len(vs) % 2:
        raise ValueError(f"matching mode needs an even vertex subset of size >= 2, got {len(vs)}")
    if len(set(vs)) != len(vs) or vs[0] < 0 or vs[-1] >= inst.n:
        raise ValueError("vertex subset must hold distinct in-range vertices")
    return inst.coords[list(vs)], induced_edges(vs), vs


def _to_local(edges: List[EdgeId], forced: Sequence[EdgeId]) -> torch.Tensor:
    lookup = {e: i for i, e in enumerate(edges)}
    return torch.tensor([[[lookup[canonical_edge(*e)] for e in forced]]], dtype=torch.long)


def rollout(
    policy: GraphPointerPolicy,
    inst: Instance,
    mode: Optional[str] = None,
    vertex_subset: Optional[Sequence[int]] = None,
    rng=None,
    greedy: bool = False,
    forced: Optional[Sequence[EdgeId]] = None,
) -> RolloutTrace:
    """Decode one spanning tree (or perfect matching of ``vertex_subset``).

    In matching mode the embeddings are computed on the subgraph induced by
    ``vertex_subset``. ``forced`` replays a given edge sequence.
    """
    mode = mode or policy.mode
    coords, edges, vs = _local_problem(inst, mode, vertex_subset)
    forced_t = None if forced is None else _to_local(edges, forced)
    gen = None if (greedy or forced is not None) else torch_generator(rng)
    with torch.no_grad():
        res = policy.rollout_batch(_coords_tensor(policy, coords), 1, greedy, gen, forced_t, mode)
    return _traces_from_batch(res, edges, vs)[0][0]


def sample_rollouts(
    policy: GraphPointerPolicy,
    inst: Instance,
    samples: int,
    rng=None,
    mode: Optional[str] = None,
    vertex_subset: Optional[Sequence[int]] = None,
    max_elements: int = 1 << 24,
) -> List[RolloutTrace]:
    """Many sampled rollouts on one instance, chunked to bound memory."""
    mode = mode or policy.mode
    coords, edges, vs = _local_problem(inst, mode, vertex_subset)
    gen = torch_generator(rng)
    chunk = max(1, max_elements // max(1, len(edges) * policy.hidden_dim))
    traces = []
    with torch.no_grad():
        x = _coords_tensor(policy, coords)[None]
        n = x.shape[1]
        z = policy.encode(x)
        iu, iv = _edge_index_tensors(n)
        weights = (x[:, iu] - x[:, iv]).pow(2).sum(-1).sqrt()
        for start in range(0, samples, chunk):
            s = min(chunk, samples - start)
            res = policy.decode(z, weights, n, s, False, gen, None, mode)
            traces.extend(_traces_from_batch(res, edges, vs)[0])
    return traces


def sample_trees(policy: GraphPointerPolicy, inst: Instance, samples: int, rng=None, max_elements: int = 1 << 24) -> List[SpanningTree]:
    """Edge lists of sampled spanning trees (lighter than full traces)."""
    edges = list(zip(*map(list, edge_endpoints(inst.n))))
    gen = torch_generator(rng)
    chunk = max(1, max_elements // max(1, len(edges) * policy.hidden_dim))
    trees = []
    with torch.no_grad():
        x = _coords_tensor(policy, inst.coords)[None]
        z = policy.encode(x)
        iu, iv = _edge_index_tensors(inst.n)
        weights = (x[:, iu] - x[:, iv]).pow(2).sum(-1).sqrt()
        for start in range(0, samples, chunk):
            s = min(chunk, samples - start)
            chosen = policy.decode(z, weights, inst.n, s, False, gen, None, "tree").chosen[0].numpy()
            trees.extend(SpanningTree(inst.n, tuple(edges[e] for e in row)) for row in chosen)
    return trees


def sample_matchings(
    policy: GraphPointerPolicy,
    inst: Instance,
    vertex_subsets: Sequence[Sequence[int]],
    rng=None,
    max_elements: int = 1 << 24,
) -> List[Matching]:
    """One sampled matching per subset; equal-size subsets are decoded as one batch.

    Each subset's embeddings come from its own induced subgraph.
    """
    subsets = [tuple(sorted(int(v) for v in vs)) for vs in vertex_subsets]
    out: List[Optional[Matching]] = [None] * len(subsets)
    by_size = {}
    for i, vs in enumerate(subsets):
        if len(vs) < 2 or len(vs) % 2:
            raise ValueError(f"subset {i} has size {len(vs)}; need an even size >= 2")
        by_size.setdefault(len(vs), []).append(i)
    gen = torch_generator(rng)
    with torch.no_grad():
        for m in sorted(by_size):
            idx = by_size[m]
            n_edges = m * (m - 1) // 2
            chunk = max(1, max_elements // max(1, n_edges * policy.hidden_dim))
            iu, iv = edge_endpoints(m)
            for start in range(0, len(idx), chunk):
                part = idx[start:start + chunk]
                coords = np.stack([inst.coords[list(subsets[i])] for i in part])
                res = policy.rollout_batch(_coords_tensor(policy, coords), 1, False, gen, None, "matching")
                chosen = res.chosen[:, 0].numpy()
                for row, i in zip(chosen, part):
                    vs = subsets[i]
                    out[i] = Matching(vs, tuple((vs[iu[e]], vs[iv[e]]) for e in row))
    return out


def sequence_entropy(trace: RolloutTrace) -> Tuple[float, float]:
    """Sum of per-step entropies and its mean over the sequence length."""
    total = float(np.sum(trace.step_entropy))
    return total, total / max(1, len(trace.step_entropy))


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(policy: GraphPointerPolicy, path: Union[str, Path], **metadata) -> None:
    """Write parameters as shape-annotated flat lists in a JSON document.

    Values go through Python floats, whose ``repr`` round-trips exactly.
    """
    params = {
        name: {"shape": list(t.shape), "dtype": str(t.dtype).replace("torch.", ""), "data": t.detach().reshape(-1).tolist()}
        for name, t in policy.state_dict().items()
    }
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": policy.config(),
        "metadata": metadata,
        "params": params,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: Union[str, Path]) -> Tuple[GraphPointerPolicy, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    policy = GraphPointerPolicy(**doc["config"])
    state = {}
    for name, entry in doc["params"].items():
        dtype = getattr(torch, entry["dtype"])
        state[name] = torch.tensor(entry["data"], dtype=dtype).reshape(entry["shape"])
    dtypes = {t.dtype for t in state.values()}
    if dtypes == {torch.float64}:
        policy = policy.double()
    policy.load_state_dict(state)
    return policy, doc["metadata"]
