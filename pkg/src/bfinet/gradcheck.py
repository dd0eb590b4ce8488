"""Central finite-difference checks of the analytic backward passes (float64)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .linalg import SeededRng, derive_seed
from .model import Model, ModelConfig, build_model, model_backward, model_forward

TINY = dict(D=6, C=2, K=3, L=2, hidden=5, M=3)


def finite_diff(loss_fn, params: dict, eps: float = 1e-5) -> dict:
    """Central differences of ``loss_fn()`` w.r.t. every scalar in ``params``.

    ``params`` maps names to float64 arrays that ``loss_fn`` reads; each
    coordinate is nudged in place and restored. Coordinates whose probes
    give a non-finite loss are reported as NaN.
    """
    out = {}
    for name, p in params.items():
        if p.dtype != np.float64:
            raise TypeError(f"finite_diff needs float64 buffers, {name} is {p.dtype}")
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps) if np.isfinite(up) and np.isfinite(down) else np.nan
        out[name] = g
    return out


@dataclass
class BufferCheck:
    name: str
    max_relative_error: float
    max_absolute_error: float
    passed: bool
    worst_index: tuple = ()


@dataclass
class GradCheckReport:
    label: str
    buffers: list[BufferCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.buffers)

    def failing(self) -> list[BufferCheck]:
        return [b for b in self.buffers if not b.passed]

    def table(self) -> str:
        lines = [f"{self.label}: {'PASS' if self.passed else 'FAIL'}",
                 f"  {'buffer':<14}{'max_rel':>12}{'max_abs':>12}  ok"]
        for b in self.buffers:
            lines.append(f"  {b.name:<14}{b.max_relative_error:>12.3e}"
                         f"{b.max_absolute_error:>12.3e}  {'yes' if b.passed else 'NO ' + str(b.worst_index)}")
        return "\n".join(lines)

    def csv_rows(self) -> list[str]:
        return [f"{self.label},{b.name},{b.max_relative_error!r},{b.max_absolute_error!r},"
                f"{int(b.passed)}" for b in self.buffers]


def compare(name: str, analytic: np.ndarray, numeric: np.ndarray,
            tol: float = 1e-5, abs_floor: float = 1e-8) -> BufferCheck:
    """A coordinate passes if its relative error <= tol or its absolute error <= abs_floor."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    abs_err = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    rel = np.divide(abs_err, scale, out=np.zeros_like(abs_err), where=scale > 0)
    bad = ~((rel <= tol) | (abs_err <= abs_floor))
    bad |= ~np.isfinite(n)
    worst = np.unravel_index(int(np.argmax(np.where(np.isfinite(abs_err), abs_err, np.inf))), a.shape) if a.size else ()
    return BufferCheck(name, float(rel.max(initial=0.0)), float(abs_err.max(initial=0.0)),
                       not bool(bad.any()), tuple(int(i) for i in worst))


def _near_kink(m: Model, x: np.ndarray, margin: float) -> bool:
    _, tape = model_forward(m, x)
    return any(np.any(np.abs(t.z) < margin) for t in tape.dense)


def check_model(cfg: ModelConfig, eps: float = 1e-5, tol: float = 1e-5, abs_floor: float = 1e-8,
                batch: int = 2, backward=model_backward, check_input: bool = True) -> GradCheckReport:
    """Compare ``backward`` with finite differences on a small float64 model.

    Inputs and labels are drawn from ``cfg.seed``. Inputs are redrawn while
    any dense pre-activation sits within ``10 * eps`` of the ReLU kink.
    Biases are given small random values so their gradients are exercised
    away from the all-zero initialization.
    """
    m = build_model(cfg, dtype=np.float64)
    rng = SeededRng(derive_seed(cfg.seed, 7))
    for layer in [*m.cross, *m.dense, m.head]:
        layer.b[...] = rng.uniform(-0.3, 0.3, layer.b.shape, dtype=np.float64)
    for _ in range(100):
        x = rng.uniform(-1.0, 1.0, (batch, cfg.D), dtype=np.float64)
        if not _near_kink(m, x, 10 * eps):
            break
    else:
        raise RuntimeError("could not find an input away from ReLU kinks")
    y = np.array([rng.below(cfg.M) for _ in range(batch)])

    params = m.parameters()
    logits, tape = model_forward(m, x)
    _, g = layers.softmax_xent(logits, y)
    analytic, gin = backward(m, tape, g, return_input_grad=True)

    def loss():
        out, _ = model_forward(m, x)
        return float(np.sum(layers.softmax_xent(out, y)[0]))

    numeric = finite_diff(loss, params, eps)
    report = GradCheckReport(f"{cfg.variant} K={cfg.K} C={cfg.C} L={cfg.L} seed={cfg.seed}")
    for name in params:
        report.buffers.append(compare(name, analytic[name], numeric[name], tol, abs_floor))
    if check_input:
        numeric_in = finite_diff(loss, {"input": x}, eps)["input"]
        report.buffers.append(compare("input", gin, numeric_in, tol, abs_floor))
    return report


def check_variants(variants, seeds, base: dict | None = None, **kw) -> list[GradCheckReport]:
    """Run :func:`check_model` on the tiny config for every (variant, seed)."""
    base = dict(TINY if base is None else base)
    return [check_model(ModelConfig(**base, variant=v, seed=s), **kw)
            for v in variants for s in seeds]
