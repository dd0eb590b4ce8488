import numpy as np
import pytest

from bfinet.data import Dataset, load_delimited, standardize
from bfinet.linalg import ContractError
from bfinet.model import ModelConfig, build_model
from bfinet.train import (
    DataConfig,
    DivergenceError,
    Optimizer,
    TrainConfig,
    adam_step,
    evaluate,
    prepare_data,
    run_experiment,
    sgd_step,
    train_epoch,
)


def test_sgd_examples():
    p = {"w": np.array([1.0])}
    sgd_step(p, {"w": np.array([2.0])}, TrainConfig(optimizer="sgd", lr=0.1), {})
    assert p["w"][0] == pytest.approx(0.8, abs=1e-15)
    q = {"w": np.array([3.0, -1.0])}
    sgd_step(q, {"w": np.zeros(2)}, TrainConfig(optimizer="sgd", lr=0.5), {})
    np.testing.assert_array_equal(q["w"], [3.0, -1.0])


def test_sgd_momentum_accumulates():
    cfg = TrainConfig(optimizer="sgd", lr=0.1, momentum=0.9)
    p, state = {"w": np.array([0.0])}, {}
    sgd_step(p, {"w": np.array([1.0])}, cfg, state)
    sgd_step(p, {"w": np.array([1.0])}, cfg, state)
    # v1 = 1, v2 = 1.9; p = -0.1 - 0.19
    assert p["w"][0] == pytest.approx(-0.29)


def test_adam_first_step_is_lr_times_sign():
    cfg = TrainConfig(lr=1e-3)
    p = {"w": np.array([1.0])}
    adam_step(p, {"w": np.array([2.0])}, cfg, {}, t=1)
    # m_hat = 2, v_hat = 4 -> step = lr * 2 / (2 + eps)
    assert p["w"][0] == pytest.approx(1.0 - 1e-3 * 2 / (2 + 1e-8), abs=1e-15)


def test_optimizer_shape_mismatch():
    with pytest.raises(ContractError):
        sgd_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, TrainConfig(optimizer="sgd"), {})


@pytest.mark.parametrize("bad", [dict(optimizer="rmsprop"), dict(lr=-1), dict(beta1=1.0),
                                 dict(batch_size=0), dict(epochs=0), dict(eps=0)])
def test_train_config_validation(bad):
    with pytest.raises(ContractError):
        TrainConfig(**bad)


@pytest.fixture
def small(make_csv):
    return prepare_data(DataConfig(path=str(make_csv(n=300, d=6, classes=3)), train_fraction=0.5))


def test_lr_zero_leaves_parameters_and_matches_evaluation(small):
    train, _ = small
    m = build_model(ModelConfig(D=6, C=2, K=3, L=1, hidden=8, M=3, variant="P"))
    before = {n: p.copy() for n, p in m.named_parameters()}
    loss = train_epoch(m, train, TrainConfig(lr=0.0, batch_size=32), epoch=0)
    for n, p in m.named_parameters():
        np.testing.assert_array_equal(p, before[n])
    assert loss == pytest.approx(evaluate(m, train)[0], rel=1e-6)


def test_overfit_smoke(make_csv):
    ds = load_delimited(make_csv(n=100, d=6, classes=3, seed=4))
    _, train = standardize(ds)
    cfg = TrainConfig(lr=2e-3, batch_size=100, epochs=250, seed=1)
    log, m, _ = run_experiment(ModelConfig(D=6, C=2, K=2, L=2, hidden=64, M=3, variant="P"),
                               cfg, (train, train))
    assert log.rows[-1]["train_acc"] >= 0.99
    losses = [r["train_loss"] for r in log.rows]
    start = len(losses) // 10
    for prev, cur in zip(losses[start:], losses[start + 1:]):
        assert cur <= prev * 1.05
    assert evaluate(m, train)[1] == log.rows[-1]["train_acc"]


def test_runs_are_deterministic(small):
    mc = ModelConfig(D=6, C=2, K=3, L=1, hidden=8, M=3, variant="T", seed=3)
    tc = TrainConfig(epochs=3, batch_size=32, seed=9)
    a, _, _ = run_experiment(mc, tc, small)
    b, _, _ = run_experiment(mc, tc, small)
    assert a.to_csv(timing=False) == b.to_csv(timing=False)


def test_baseline_and_p_k1_logs_identical(small):
    tc = TrainConfig(epochs=3, batch_size=32, seed=2)
    a, _, _ = run_experiment(ModelConfig(D=6, C=2, L=1, hidden=8, M=3, seed=5), tc, small)
    b, _, _ = run_experiment(ModelConfig(D=6, C=2, K=1, L=1, hidden=8, M=3, seed=5, variant="P"),
                             tc, small)
    assert a.to_csv(timing=False) == b.to_csv(timing=False)


def test_constant_logits_give_chance_accuracy():
    X = np.random.default_rng(0).normal(size=(700, 4))
    ds = Dataset(X, np.repeat(np.arange(7), 100))
    m = build_model(ModelConfig(D=4, C=1, L=1, hidden=3, M=7))
    for _, p in m.named_parameters():
        p[...] = 0
    loss, acc = evaluate(m, ds)
    assert acc == pytest.approx(1 / 7)
    assert loss == pytest.approx(np.log(7), rel=1e-6)


def test_evaluate_is_order_invariant(small):
    train, _ = small
    m = build_model(ModelConfig(D=6, C=2, K=3, L=1, hidden=8, M=3, variant="Q"))
    idx = np.random.default_rng(0).permutation(len(train))
    l1, a1 = evaluate(m, train)
    l2, a2 = evaluate(m, train.subset(idx))
    assert a1 == a2 and l1 == pytest.approx(l2, rel=1e-6)
    assert 0 <= a1 <= 1


def test_divergence_aborts(small):
    train, _ = small
    m = build_model(ModelConfig(D=6, C=3, L=1, hidden=8, M=3))
    with np.errstate(all="ignore"), pytest.raises(DivergenceError):
        for epoch in range(5):
            train_epoch(m, train, TrainConfig(optimizer="sgd", lr=1e37, batch_size=8), epoch)


def test_run_experiment_writes_outputs(small, tmp_path):
    mc = ModelConfig(D=6, C=1, K=2, L=1, hidden=4, M=3, variant="S")
    log, _, ckpt = run_experiment(mc, TrainConfig(epochs=2), small, tmp_path)
    text = (tmp_path / "S_K2_C1_L1.csv").read_text().splitlines()
    assert text[0] == "epoch,train_loss,train_acc,test_acc,wall_seconds" and len(text) == 3
    assert ckpt.name == "S_K2_C1_L1.bfic" and ckpt.read_bytes()[:4] == b"BFIC"


def test_run_experiment_checks_shapes(small):
    with pytest.raises(Exception, match="features"):
        run_experiment(ModelConfig(D=5, C=1, M=3), TrainConfig(epochs=1), small)
