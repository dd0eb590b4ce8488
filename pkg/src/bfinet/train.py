"""Optimizers, the minibatch training loop, evaluation and experiment runs."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import DataError, Dataset, apply_standardize, batches, fit_standardize, load_delimited, split
from .layers import softmax_xent
from .linalg import ContractError
from .model import Model, ModelConfig, build_model, model_backward, model_forward

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch,train_loss,train_acc,test_acc,wall_seconds"


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        opt = self.optimizer.lower()
        if opt not in ("sgd", "adam"):
            raise ContractError(f"TrainConfig.optimizer must be sgd or adam, got {self.optimizer!r}")
        object.__setattr__(self, "optimizer", opt)
        if not self.lr >= 0:
            raise ContractError(f"TrainConfig.lr must be non-negative, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ContractError(f"TrainConfig.momentum must be in [0, 1), got {self.momentum}")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ContractError(f"TrainConfig.{name} must be in (0, 1)")
        if self.eps <= 0:
            raise ContractError("TrainConfig.eps must be positive")
        for name in ("batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ContractError(f"TrainConfig.{name} must be >= 1")


def _check_shapes(params: dict, grads: dict) -> None:
    for name, p in params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape:
            raise ContractError(f"gradient for {name} has shape "
                                f"{None if g is None else g.shape}, parameter {p.shape}")


def sgd_step(params: dict, grads: dict, cfg: TrainConfig, state: dict) -> None:
    """In-place momentum SGD: ``v = mu v + g``, ``p -= lr v``."""
    _check_shapes(params, grads)
    for name, p in params.items():
        g = grads[name]
        if cfg.momentum:
            v = state.setdefault(name, np.zeros_like(p))
            v *= cfg.momentum
            v += g
            g = v
        p -= cfg.lr * g


def adam_step(params: dict, grads: dict, cfg: TrainConfig, state: dict, t: int) -> None:
    """In-place bias-corrected Adam update for step ``t`` (1-based)."""
    _check_shapes(params, grads)
    c1 = 1 - cfg.beta1**t
    c2 = 1 - cfg.beta2**t
    for name, p in params.items():
        g = grads[name]
        m, v = state.setdefault(name, (np.zeros_like(p), np.zeros_like(p)))
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * (g * g)
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


class Optimizer:
    """Holds per-parameter state and the step counter for one model."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.state: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        if self.cfg.optimizer == "adam":
            adam_step(params, grads, self.cfg, self.state, self.t)
        else:
            sgd_step(params, grads, self.cfg, self.state)


def loss_and_grads(model: Model, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over a batch and its parameter gradients."""
    logits, tape = model_forward(model, x)
    losses, g = softmax_xent(logits, y)
    grads = model_backward(model, tape, g / len(y))
    return float(np.mean(losses, dtype=np.float64)), grads, logits


def train_epoch(model: Model, train: Dataset, cfg: TrainConfig, epoch: int,
                opt: Optimizer | None = None) -> float:
    """One pass over ``train``; returns the sample-weighted mean training loss."""
    if train.n_features != model.config.D:
        raise ContractError(f"dataset has {train.n_features} features, model expects {model.config.D}")
    opt = opt or Optimizer(cfg)
    params = model.parameters()
    total = 0.0
    for idx in batches(len(train), cfg.batch_size, cfg.seed, epoch):
        loss, grads, _ = loss_and_grads(model, train.features[idx], train.labels[idx])
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}, step {opt.t + 1}")
        opt.step(params, grads)
        total += loss * len(idx)
    return total / len(train)


def evaluate(model: Model, ds: Dataset, chunk: int = 4096) -> tuple[float, float]:
    """Mean loss and argmax accuracy; ties go to the lowest class index."""
    loss = 0.0
    correct = 0
    for start in range(0, len(ds), chunk):
        x = ds.features[start:start + chunk]
        y = ds.labels[start:start + chunk]
        logits, _ = model_forward(model, x)
        losses, _ = softmax_xent(logits, y)
        loss += float(np.sum(losses, dtype=np.float64))
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
    return loss / len(ds), correct / len(ds)


@dataclass
class MetricsLog:
    rows: list[dict] = field(default_factory=list)

    def append(self, epoch, train_loss, train_acc, test_acc, wall_seconds) -> None:
        self.rows.append(dict(epoch=epoch, train_loss=train_loss, train_acc=train_acc,
                              test_acc=test_acc, wall_seconds=wall_seconds))

    @property
    def final_test_accuracy(self) -> float:
        return self.rows[-1]["test_acc"]

    def to_csv(self, timing: bool = True) -> str:
        lines = [METRICS_HEADER]
        for r in self.rows:
            wall = r["wall_seconds"] if timing else 0.0
            lines.append(f"{r['epoch']},{r['train_loss']!r},{r['train_acc']!r},"
                         f"{r['test_acc']!r},{wall:.3f}")
        return "\n".join(lines) + "\n"

    def write(self, path, timing: bool = True) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(timing))
        return path


def metrics_filename(cfg: ModelConfig) -> str:
    K = cfg.K if cfg.spec.blockwise else 1
    return f"{cfg.variant}_K{K}_C{cfg.C}_L{cfg.L}.csv"


@dataclass(frozen=True)
class DataConfig:
    path: str
    delimiter: str = ","
    label_column: str = "last"
    label_base: int = 1
    train_fraction: float = 0.5
    split_seed: int = 0
    train_rows: int = 0  # 0 keeps the whole side
    test_rows: int = 0


def prepare_data(dc: DataConfig) -> tuple[Dataset, Dataset]:
    """Load, split, cap each side, and z-score with training-split statistics."""
    ds = load_delimited(dc.path, dc.delimiter, dc.label_column, dc.label_base)
    train, test = split(ds, dc.train_fraction, dc.split_seed)
    if dc.train_rows:
        if dc.train_rows > len(train):
            raise DataError(f"train_rows={dc.train_rows} but the split has {len(train)}")
        train = train.subset(np.arange(dc.train_rows))
    if dc.test_rows:
        if dc.test_rows > len(test):
            raise DataError(f"test_rows={dc.test_rows} but the split has {len(test)}")
        test = test.subset(np.arange(dc.test_rows))
    stats = fit_standardize(train)
    return apply_standardize(stats, train), apply_standardize(stats, test)


def run_experiment(model_cfg: ModelConfig, train_cfg: TrainConfig, data, out_dir=None,
                   timing: bool = True, dtype=np.float32):
    """Train one grid point, evaluating after every epoch.

    ``data`` is a :class:`DataConfig` or an already prepared ``(train, test)``
    pair. When ``out_dir`` is given the metrics CSV and a ``.bfic``
    checkpoint are written there. Returns ``(log, model, checkpoint_path)``.
    """
    train, test = prepare_data(data) if isinstance(data, DataConfig) else data
    for part in (train, test):
        if part.n_features != model_cfg.D:
            raise DataError(f"data has {part.n_features} features, model D={model_cfg.D}")
        if part.n_classes > model_cfg.M:
            raise DataError(f"data has label {part.n_classes - 1}, model M={model_cfg.M}")
    model = build_model(model_cfg, dtype=dtype)
    opt = Optimizer(train_cfg)
    metrics = MetricsLog()
    for epoch in range(train_cfg.epochs):
        start = time.perf_counter()
        train_loss = train_epoch(model, train, train_cfg, epoch, opt)
        wall = time.perf_counter() - start
        _, train_acc = evaluate(model, train)
        _, test_acc = evaluate(model, test)
        metrics.append(epoch + 1, train_loss, train_acc, test_acc, wall)
        log.info("%s epoch %d loss %.4f train %.4f test %.4f", metrics_filename(model_cfg),
                 epoch + 1, train_loss, train_acc, test_acc)
    ckpt = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = metrics_filename(model_cfg)
        metrics.write(out / name, timing)
        ckpt = checkpoint.save(model, out / name.replace(".csv", ".bfic"))
    return metrics, model, ckpt
