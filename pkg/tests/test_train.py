import numpy as np
import pytest

from fewloc.data import SynthConfig, generate_scene, synth_dataset
from fewloc.model import LocalizationModel, ModelConfig
from fewloc.optim import Adam, step_decay_lr
from fewloc.tensor import Tensor
from fewloc.train import TrainConfig, evaluate_model, fit, train_step


def test_schedule():
    assert step_decay_lr(2e-5, 79) == 2e-5
    assert step_decay_lr(2e-5, 80) == 2e-5 * 0.25
    assert step_decay_lr(2e-5, 160) == 2e-5 * 0.0625
    cfg = TrainConfig()
    assert cfg.lr == 2e-5 and cfg.epochs == 200 and cfg.lr_at(160) == cfg.lr * 0.0625
    assert TrainConfig.desk().lr == 100 * cfg.lr


def test_one_shot_only():
    with pytest.raises(ValueError):
        TrainConfig(shots=3)


def test_adam_matches_hand_update():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam({"p": p})
    p.grad = np.array([0.5, -1.0])
    opt.step(0.1)
    # first bias-corrected step moves each coordinate by lr * sign(g)
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-7)


def test_zero_lr_leaves_parameters():
    model = LocalizationModel(ModelConfig(), seed=0)
    before = {k: p.data.copy() for k, p in model.parameters().items()}
    opt = Adam(model.parameters())
    loss = train_step(model, generate_scene(SynthConfig(seed=1)), opt, 0.0)
    assert np.isfinite(loss) and loss > 0
    assert all(np.array_equal(before[k], p.data) for k, p in model.parameters().items())


def test_non_finite_loss_names_episode():
    model = LocalizationModel(ModelConfig(), seed=0)
    ep = generate_scene(SynthConfig(seed=1), image_id="broken-7")
    model.head_out.bias.data[...] = np.inf
    with pytest.raises(FloatingPointError, match="broken-7"):
        train_step(model, ep, Adam(model.parameters()), 1e-3)


def test_overfit_single_episode_trend():
    model = LocalizationModel(ModelConfig(), seed=0)
    ep = generate_scene(SynthConfig(seed=2))
    opt = Adam(model.parameters())
    losses = [train_step(model, ep, opt, 2e-3) for _ in range(200)]
    windows = [np.mean(losses[i : i + 50]) for i in range(0, 200, 50)]
    assert all(b < a for a, b in zip(windows, windows[1:])), windows


def test_fit_keeps_best_epoch_and_is_deterministic():
    train = synth_dataset(["disc"], 4, seed=0)
    val = synth_dataset(["square"], 2, seed=1)
    cfg = TrainConfig.desk(epochs=3, max_steps=None)
    runs = []
    for _ in range(2):
        model = LocalizationModel(ModelConfig(), seed=0)
        runs.append((fit(model, train, cfg, val), model))
    (a, ma), (b, _) = runs
    assert [r.loss for r in a.history] == [r.loss for r in b.history]
    assert a.steps == 12
    best = max(range(3), key=lambda i: (a.history[i].val_f1, -i))
    assert a.best_epoch == best
    f1s = [r.val_f1 for r in a.history]
    assert a.history[a.best_epoch].val_f1 == max(f1s)
    for k, p in ma.parameters().items():
        p.data[...] = a.best_state[k]
    assert evaluate_model(ma, val, (10,)).f1(10) == max(f1s)


def test_max_steps_caps_training():
    res = fit(LocalizationModel(ModelConfig(), seed=0), synth_dataset(["disc"], 4, seed=0), TrainConfig.desk(epochs=5, max_steps=6))
    assert res.steps == 6 and len(res.history) == 2
