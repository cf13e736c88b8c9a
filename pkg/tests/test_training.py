import csv
from fractions import Fraction

import numpy as np
import pytest
import torch

from divtsp.policy import load_checkpoint
from divtsp.training import (
    REPORT_FIELDS,
    TrainConfig,
    TrainingFailedError,
    build_policy,
    central_self_critic_baseline,
    make_optimizer,
    surrogate_loss,
    train,
    train_step,
)


def tiny(**kw):
    base = dict(n_train=6, epochs=1, steps_per_epoch=3, batch_size=4, hidden_dim=8, n_layers=1,
                val_instances=2, val_pool=4, dtype="float64")
    base.update(kw)
    return TrainConfig(**base)


def params(policy):
    return [p.detach().clone() for p in policy.parameters()]


def test_baseline_hand_example():
    b, a = central_self_critic_baseline(np.array([-10.0, -6.0]), np.array([-8.0, -7.0]))
    np.testing.assert_array_equal(b, [-8.5, -7.5])
    np.testing.assert_array_equal(a, [-1.5, 1.5])


def test_baseline_single_instance_has_zero_advantage():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r, g = rng.normal(size=1) * 10, rng.normal(size=1) * 10
        b, a = central_self_critic_baseline(r, g)
        assert a[0] == 0.0
        assert b[0] == pytest.approx(r[0], abs=1e-12)


def test_advantages_sum_to_zero_exactly_in_rationals():
    rng = np.random.default_rng(1)
    for _ in range(200):
        B = int(rng.integers(1, 40))
        r = np.array([Fraction(float(x)) for x in rng.normal(size=B)], dtype=object)
        g = np.array([Fraction(float(x)) for x in rng.normal(size=B)], dtype=object)
        b, a = central_self_critic_baseline(r, g)
        assert sum(a) == 0
        assert all(ai == ri - bi for ai, ri, bi in zip(a, r, b))


def test_baseline_shape_mismatch():
    with pytest.raises(ValueError):
        central_self_critic_baseline(np.zeros(3), np.zeros(2))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(alpha=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(steps_per_epoch=0)
    with pytest.raises(ValueError):
        TrainConfig(mode="matching", n_train=7)
    assert TrainConfig().batch_size == 256
    assert TrainConfig(mode="matching").batch_size == 128


def test_single_instance_step_with_no_entropy_leaves_params_unchanged():
    cfg = tiny(batch_size=1, alpha=0.0)
    pol = build_policy(cfg)
    before = params(pol)
    opt = make_optimizer(pol, cfg)
    stats = train_step(pol, opt, cfg, np.random.default_rng(0))
    assert not stats["aborted"]
    for a, b in zip(before, pol.parameters()):
        assert torch.equal(a, b)


def test_step_changes_params_and_stays_finite():
    cfg = tiny(alpha=1.0)
    pol = build_policy(cfg)
    before = params(pol)
    train_step(pol, make_optimizer(pol, cfg), cfg, np.random.default_rng(0))
    assert any(not torch.equal(a, b) for a, b in zip(before, pol.parameters()))
    assert pol.check_finite()


def test_step_statistics_are_reproducible():
    runs = []
    for _ in range(2):
        cfg = tiny(alpha=0.5)
        pol = build_policy(cfg)
        opt = make_optimizer(pol, cfg)
        rng = np.random.default_rng(3)
        runs.append([train_step(pol, opt, cfg, rng) for _ in range(3)])
    assert runs[0] == runs[1]


def test_nonfinite_step_is_skipped():
    cfg = tiny()
    pol = build_policy(cfg)
    with torch.no_grad():
        pol.w_key.weight[0, 0] = float("nan")
    before = params(pol)
    stats = train_step(pol, make_optimizer(pol, cfg), cfg, np.random.default_rng(0))
    assert stats["aborted"]
    for a, b in zip(before, pol.parameters()):
        assert torch.equal(a.nan_to_num(), b.detach().nan_to_num())


def test_surrogate_loss_formula():
    cfg = tiny()
    pol = build_policy(cfg)
    x = torch.tensor(np.random.default_rng(0).random((3, 6, 2)))
    with torch.no_grad():
        res = pol.rollout_batch(x, 1, generator=torch.Generator().manual_seed(0))
    adv = torch.tensor([0.5, -1.0, 0.5], dtype=torch.float64)
    loss = surrogate_loss(res, adv, alpha=2.0)
    expect = (-(adv * res.log_prob[:, 0].sum(-1)) - 2.0 * res.entropy[:, 0].mean(-1)).mean()
    assert loss.item() == pytest.approx(expect.item(), abs=1e-12)
    summed = surrogate_loss(res, adv, alpha=2.0, entropy_term="sum")
    expect_sum = (-(adv * res.log_prob[:, 0].sum(-1)) - 2.0 * res.entropy[:, 0].sum(-1)).mean()
    assert summed.item() == pytest.approx(expect_sum.item(), abs=1e-12)
    base = torch.tensor([-1.0, -2.0, -3.0], dtype=torch.float64)
    per_step = surrogate_loss(res, adv, alpha=0.0, advantage="per_step", baselines=base)
    w = res.reward[:, 0] - base[:, None]
    assert float(per_step) == pytest.approx(float(-(w * res.log_prob[:, 0]).sum(-1).mean()), abs=1e-12)


def test_zero_epochs_returns_initial_params():
    cfg = tiny(epochs=0)
    pol, report = train(cfg)
    assert report.records == []
    for a, b in zip(build_policy(cfg).parameters(), pol.parameters()):
        assert torch.equal(a, b)


def test_train_writes_checkpoints_and_report(tmp_path):
    cfg = tiny(epochs=2, out_dir=str(tmp_path), alpha=1.0)
    pol, report = train(cfg)
    assert len(report.records) == 2
    assert (tmp_path / "checkpoint_epoch001.json").exists()
    assert (tmp_path / "checkpoint_epoch002.json").exists()
    back, meta = load_checkpoint(tmp_path / "final.json")
    assert meta["alpha"] == 1.0 and meta["epoch"] == 2
    for a, b in zip(pol.parameters(), back.parameters()):
        assert torch.equal(a, b)
    with open(tmp_path / "train_report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == REPORT_FIELDS
    assert len(rows) == 2


def test_matching_mode_trains():
    pol, report = train(tiny(mode="matching", n_train=6, alpha=0.5))
    assert pol.mode == "matching"
    assert np.isfinite(report.records[0].val_cost)


def test_too_many_aborts_fail_loudly():
    cfg = tiny(steps_per_epoch=2)
    pol = build_policy(cfg)
    with torch.no_grad():
        pol.w_key.weight[0, 0] = float("nan")
    with pytest.raises(TrainingFailedError):
        train(cfg, pol)
