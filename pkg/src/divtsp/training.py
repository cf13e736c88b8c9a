"""Entropy-regularized REINFORCE with a central self-critic baseline."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch

from .construction import randomized_double_tree
from .dispersion import pairwise_stats
from .instance import Instance, random_instance
from .policy import (
    BatchRollout,
    GraphPointerPolicy,
    rollout,
    sample_rollouts,
    save_checkpoint,
    torch_generator,
)

log = logging.getLogger(__name__)

REPORT_FIELDS = ("epoch", "mean_sampled_reward", "mean_greedy_reward", "mean_entropy", "val_cost", "val_jaccard", "seconds")


class TrainingFailedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mode: str = "tree"
    n_train: int = 40
    epochs: int = 100
    steps_per_epoch: int = 1000
    batch_size: Optional[int] = None
    learning_rate: float = 5e-4
    alpha: float = 0.0
    seed: int = 0
    checkpoint_every: int = 1
    hidden_dim: int = 128
    n_layers: int = 3
    gamma: float = 0.5
    d_scale: float = 10.0
    aggregation: str = "set"
    entropy_term: str = "mean"
    advantage: str = "sequence"
    val_instances: int = 32
    val_pool: int = 64
    dtype: str = "float32"
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.batch_size is None:
            self.batch_size = 256 if self.mode == "tree" else 128
        if self.mode not in ("tree", "matching"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        for name in ("n_train", "steps_per_epoch", "batch_size", "checkpoint_every", "hidden_dim", "n_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.mode == "matching" and self.n_train % 2:
            raise ValueError("matching mode trains on perfect matchings and needs an even n_train")
        if self.entropy_term not in ("mean", "sum"):
            raise ValueError("entropy_term must be 'mean' or 'sum'")
        if self.advantage not in ("sequence", "per_step"):
            raise ValueError("advantage must be 'sequence' or 'per_step'")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


@dataclass
class EpochRecord:
    epoch: int
    mean_sampled_reward: float
    mean_greedy_reward: float
    mean_entropy: float
    val_cost: float
    val_jaccard: float
    seconds: float


@dataclass
class TrainReport:
    records: List[EpochRecord] = field(default_factory=list)
    aborted_steps: int = 0
    total_steps: int = 0

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
            writer.writeheader()
            for rec in self.records:
                writer.writerow(asdict(rec))


def build_policy(config: TrainConfig) -> GraphPointerPolicy:
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        policy = GraphPointerPolicy(
            hidden_dim=config.hidden_dim,
            n_layers=config.n_layers,
            gamma=config.gamma,
            d_scale=config.d_scale,
            mode=config.mode,
            aggregation=config.aggregation,
        )
    return policy.double() if config.dtype == "float64" else policy.float()


def central_self_critic_baseline(sampled, greedy):
    """Per-instance baselines and advantages ``(b, A)``.

    ``b_i = greedy_i + mean_j(sampled_j - greedy_j)`` and ``A_i = sampled_i - b_i``.
    The advantage is formed as ``gap_i - mean(gap)`` so that a batch of one
    gives exactly zero. Object arrays of ``Fraction`` are computed exactly.
    """
    sampled = np.asarray(sampled)
    greedy = np.asarray(greedy)
    if sampled.shape != greedy.shape or sampled.ndim != 1:
        raise ValueError(f"batch shapes differ: {sampled.shape} vs {greedy.shape}")
    gap = sampled - greedy
    correction = gap.sum() / len(gap)
    return greedy + correction, gap - correction


def entropy_bonus(res: BatchRollout, entropy_term: str) -> torch.Tensor:
    return res.entropy.mean(-1) if entropy_term == "mean" else res.entropy.sum(-1)


def surrogate_loss(
    res: BatchRollout,
    advantages: torch.Tensor,
    alpha: float,
    entropy_term: str = "mean",
    advantage: str = "sequence",
    baselines: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """``mean_i[-A_i * sum_t log p_it - alpha * H_i]`` with ``A`` held constant.

    ``advantage="per_step"`` uses ``sum_t (r_it - b_i) log p_it`` instead.
    Shapes are ``(B, 1, kappa)`` for ``res`` and ``(B,)`` for the weights.
    """
    logp = res.log_prob[:, 0]
    if advantage == "sequence":
        pg = -(advantages.detach()[:, None] * logp).sum(-1)
    else:
        weight = (res.reward[:, 0] - baselines.detach()[:, None]).detach()
        pg = -(weight * logp).sum(-1)
    bonus = entropy_bonus(res, entropy_term)[:, 0]
    return (pg - alpha * bonus).mean()


def draw_batch(config: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.random((config.batch_size, config.n_train, 2))


def train_step(
    policy: GraphPointerPolicy,
    optimizer: torch.optim.Optimizer,
    config: TrainConfig,
    rng: np.random.Generator,
    generator: Optional[torch.Generator] = None,
    coords: Optional[np.ndarray] = None,
) -> dict:
    """One Adam update on a fresh batch. Returns step statistics.

    A non-finite loss or gradient skips the update and sets ``aborted``.
    """
    if coords is None:
        coords = draw_batch(config, rng)
    generator = generator if generator is not None else torch_generator(rng)
    x = torch.as_tensor(coords, dtype=policy.dtype)
    with torch.no_grad():
        greedy = policy.rollout_batch(x, 1, greedy=True, mode=config.mode)
    res = policy.rollout_batch(x, 1, greedy=False, generator=generator, mode=config.mode)
    r_sampled = res.total_reward[:, 0].detach()
    r_greedy = greedy.total_reward[:, 0]
    baselines, adv = central_self_critic_baseline(r_sampled.double().numpy(), r_greedy.double().numpy())
    adv_t = torch.as_tensor(adv, dtype=policy.dtype)
    base_t = torch.as_tensor(baselines, dtype=policy.dtype)
    loss = surrogate_loss(res, adv_t, config.alpha, config.entropy_term, config.advantage, base_t)
    optimizer.zero_grad()
    stats = {
        "loss": float(loss.detach()),
        "mean_sampled_reward": float(r_sampled.mean()),
        "mean_greedy_reward": float(r_greedy.mean()),
        "mean_entropy": float(res.entropy.detach().mean(-1).mean()),
        "aborted": False,
    }
    if not torch.isfinite(loss):
        log.warning("non-finite loss; step skipped")
        stats["aborted"] = True
        return stats
    loss.backward()
    if not all(p.grad is None or bool(torch.isfinite(p.grad).all()) for p in policy.parameters()):
        log.warning("non-finite gradient; step skipped")
        optimizer.zero_grad()
        stats["aborted"] = True
        return stats
    optimizer.step()
    return stats


def make_optimizer(policy: GraphPointerPolicy, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(policy.parameters(), lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8)


def validation_set(config: TrainConfig) -> List[Instance]:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xBA11]))
    return [random_instance(config.n_train, rng, name=f"val{i}") for i in range(config.val_instances)]


def validate(policy: GraphPointerPolicy, instances: List[Instance], config: TrainConfig) -> Tuple[float, float]:
    """Mean greedy cost over ``instances`` and the pool Jaccard on the first one.

    Tree mode reports tour costs (first-child traversal of the greedy tree) and
    the Jaccard of Method-1 tours; matching mode reports matching weights and
    the Jaccard of matching edge sets.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7A1]))
    costs = []
    for inst in instances:
        trace = rollout(policy, inst, config.mode, greedy=True)
        if config.mode == "tree":
            costs.append(randomized_double_tree(trace.tree(inst.n), inst).cost)
        else:
            costs.append(-trace.total_reward)
    traces = sample_rollouts(policy, instances[0], config.val_pool, rng, mode=config.mode)
    if config.mode == "tree":
        tours = [randomized_double_tree(t.tree(instances[0].n), instances[0], rng) for t in traces]
        jac, _ = pairwise_stats(tours)
    else:
        sets = [set(t.chosen) for t in traces]
        vals = [len(a & b) / len(a | b) for i, a in enumerate(sets) for b in sets[i + 1:]]
        jac = float(np.mean(vals))
    return float(np.mean(costs)), float(jac)


def train(config: TrainConfig, policy: Optional[GraphPointerPolicy] = None) -> Tuple[GraphPointerPolicy, TrainReport]:
    """Run ``epochs * steps_per_epoch`` updates with per-epoch validation.

    Checkpoints and ``train_report.csv`` go to ``config.out_dir`` when set.
    """
    policy = policy if policy is not None else build_policy(config)
    report = TrainReport()
    out = Path(config.out_dir) if config.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if config.epochs == 0:
        return policy, report
    data_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xDA7A]))
    gen = torch_generator(np.random.default_rng(np.random.SeedSequence([config.seed, 0x5A3])))
    optimizer = make_optimizer(policy, config)
    val = validation_set(config)
    meta = {k: v for k, v in asdict(config).items() if k != "out_dir"}
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        sums = np.zeros(3)
        done = 0
        policy.train()
        for _ in range(config.steps_per_epoch):
            stats = train_step(policy, optimizer, config, data_rng, gen)
            report.total_steps += 1
            if stats["aborted"]:
                report.aborted_steps += 1
                continue
            sums += (stats["mean_sampled_reward"], stats["mean_greedy_reward"], stats["mean_entropy"])
            done += 1
        _check_abort_rate(report)
        policy.eval()
        val_cost, val_jac = validate(policy, val, config)
        means = sums / max(done, 1)
        rec = EpochRecord(epoch, *map(float, means), val_cost, val_jac, time.perf_counter() - t0)
        report.records.append(rec)
        log.info("epoch %d: sampled %.4f greedy %.4f entropy %.4f val_cost %.4f val_jaccard %.4f",
                 epoch, rec.mean_sampled_reward, rec.mean_greedy_reward, rec.mean_entropy, val_cost, val_jac)
        if out is not None:
            if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
                save_checkpoint(policy, out / f"checkpoint_epoch{epoch:03d}.json", epoch=epoch, **meta)
            report.to_csv(out / "train_report.csv")
    if out is not None:
        save_checkpoint(policy, out / "final.json", epoch=config.epochs, **meta)
    return policy, report


def _check_abort_rate(report: TrainReport) -> None:
    if report.aborted_steps > 0.01 * report.total_steps:
        raise TrainingFailedError(f"{report.aborted_steps} of {report.total_steps} steps aborted (> 1%)")
