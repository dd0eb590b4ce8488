"""Classifier assembly: cross or blockwise stack, dense ReLU tower, class head.

Variant table::

    kind      shuffle    share
    Baseline  none       -
    P         per layer  no
    Q         once       no
    T         per layer  yes
    S         once       yes
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .layers import BlockwiseLayerParams, CrossLayerParams, DenseLayerParams
from .linalg import ContractError, MultiplyCounter, SeededRng, derive_seed, sample_permutation

BASELINE = "Baseline"


@dataclass(frozen=True)
class VariantSpec:
    kind: str
    shuffle_mode: str  # "per_layer" | "once" | "none"
    share: bool

    @property
    def blockwise(self) -> bool:
        return self.kind != BASELINE


VARIANTS = {
    BASELINE: VariantSpec(BASELINE, "none", False),
    "P": VariantSpec("P", "per_layer", False),
    "Q": VariantSpec("Q", "once", False),
    "T": VariantSpec("T", "per_layer", True),
    "S": VariantSpec("S", "once", True),
}


def variant(kind: str) -> VariantSpec:
    for name, spec in VARIANTS.items():
        if kind.lower() == name.lower():
            return spec
    raise ContractError(f"unknown variant {kind!r}; expected one of {list(VARIANTS)}")


@dataclass(frozen=True)
class ModelConfig:
    D: int
    C: int
    K: int = 1
    L: int = 2
    hidden: int = 256
    M: int = 2
    variant: str = BASELINE
    seed: int = 0

    def __post_init__(self):
        for name in ("D", "C", "K", "L", "hidden", "M"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ContractError(f"ModelConfig.{name} must be a positive integer, got {value!r}")
        spec = variant(self.variant)
        object.__setattr__(self, "variant", spec.kind)
        if spec.blockwise and self.K > self.D:
            raise ContractError(f"ModelConfig.K={self.K} exceeds D={self.D}")
        if not 0 <= int(self.seed) < 2**64:
            raise ContractError(f"ModelConfig.seed must fit in 64 bits, got {self.seed}")

    @property
    def spec(self) -> VariantSpec:
        return VARIANTS[self.variant]

    @property
    def padded_dim(self) -> int:
        if not self.spec.blockwise:
            return self.D
        return math.ceil(self.D / self.K) * self.K

    @property
    def block_size(self) -> int:
        return self.padded_dim // self.K if self.spec.blockwise else self.D


@dataclass
class Model:
    config: ModelConfig
    cross: list
    dense: list[DenseLayerParams]
    head: DenseLayerParams
    input_perm: np.ndarray | None = None
    dtype: type = np.float32

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        """Live parameter buffers in a fixed order (shared blocks appear once)."""
        out = []
        for c, layer in enumerate(self.cross):
            out += [(f"cross.{c}.W", layer.W), (f"cross.{c}.b", layer.b)]
        for i, layer in enumerate(self.dense):
            out += [(f"dense.{i}.W", layer.W), (f"dense.{i}.b", layer.b)]
        out += [("head.W", self.head.W), ("head.b", self.head.b)]
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def permutations(self) -> list[np.ndarray]:
        if self.input_perm is not None:
            return [self.input_perm]
        return [layer.perm for layer in self.cross if getattr(layer, "perm", None) is not None]

    def astype(self, dtype) -> "Model":
        """Copy of the model with every parameter cast to ``dtype``."""
        def cast(p):
            kw = {k: getattr(p, k) for k in p.__dataclass_fields__}
            kw["W"] = p.W.astype(dtype)
            kw["b"] = p.b.astype(dtype)
            return type(p)(**kw)
        return Model(self.config, [cast(p) for p in self.cross], [cast(p) for p in self.dense],
                     cast(self.head), self.input_perm, dtype)


def _uniform(rng: SeededRng, fan_in: int, shape, dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape, dtype=dtype)


def build_model(cfg: ModelConfig, dtype=np.float32) -> Model:
    """Initialize a model deterministically from ``cfg.seed``.

    Weights are uniform in +-1/sqrt(fan_in), biases zero, drawn layer by
    layer from one stream; permutations come from a separate stream so the
    weights do not depend on the variant's shuffle schedule. With K=1 there
    is a single block and nothing is shuffled.
    """
    spec = cfg.spec
    init_rng = SeededRng(cfg.seed)
    perm_rng = SeededRng(derive_seed(cfg.seed, 1))
    Dp, d = cfg.padded_dim, cfg.block_size
    shuffles = spec.blockwise and cfg.K > 1

    input_perm = None
    if shuffles and spec.shuffle_mode == "once":
        input_perm = sample_permutation(cfg.D, perm_rng)

    cross = []
    for _ in range(cfg.C):
        if not spec.blockwise:
            W = _uniform(init_rng, cfg.D, (cfg.D, cfg.D), dtype)
            cross.append(CrossLayerParams(W, np.zeros(cfg.D, dtype)))
            continue
        n = 1 if spec.share else cfg.K
        W = _uniform(init_rng, d, (n, d, d), dtype)
        perm = None
        if shuffles and spec.shuffle_mode == "per_layer":
            perm = sample_permutation(Dp, perm_rng)
        cross.append(BlockwiseLayerParams(W, np.zeros((n, d), dtype), cfg.K, spec.share, perm))

    dense = []
    fan_in = cfg.D
    for _ in range(cfg.L):
        dense.append(DenseLayerParams(_uniform(init_rng, fan_in, (cfg.hidden, fan_in), dtype),
                                      np.zeros(cfg.hidden, dtype)))
        fan_in = cfg.hidden
    head = DenseLayerParams(_uniform(init_rng, fan_in, (cfg.M, fan_in), dtype),
                            np.zeros(cfg.M, dtype))
    return Model(cfg, cross, dense, head, input_perm, dtype)


@dataclass
class ModelTape:
    squeeze: bool
    cross: list = field(default_factory=list)
    dense: list = field(default_factory=list)
    head: object = None


def model_forward(m: Model, x, counter: MultiplyCounter | None = None):
    """Logits for one instance ``(D,)`` or a batch ``(B, D)``."""
    cfg = m.config
    x, squeeze = layers._batch(np.asarray(x, dtype=m.dtype))
    if x.shape[1] != cfg.D:
        raise ContractError(f"model expects {cfg.D} features, got {x.shape[1]}")
    if m.input_perm is not None:
        x = x[:, m.input_perm]
    x0 = x
    if cfg.padded_dim != cfg.D:
        x0 = np.zeros((x.shape[0], cfg.padded_dim), dtype=m.dtype)
        x0[:, :cfg.D] = x
    tape = ModelTape(squeeze)
    h = x0
    for layer in m.cross:
        fwd = layers.bfi_forward if isinstance(layer, BlockwiseLayerParams) else layers.cross_forward
        h, t = fwd(layer, x0, h, counter)
        tape.cross.append(t)
    h = h[:, :cfg.D]
    for layer in m.dense:
        h, t = layers.dense_forward(layer, h, relu=True)
        tape.dense.append(t)
    logits, tape.head = layers.dense_forward(m.head, h, relu=False)
    return (logits[0] if squeeze else logits), tape


def model_backward(m: Model, tape: ModelTape, grad_logits, return_input_grad: bool = False):
    """Parameter gradients keyed like ``m.named_parameters()``.

    The x0 contributions of every cross layer are accumulated and routed
    back through the input permutation; that input gradient is only
    returned when asked for.
    """
    cfg = m.config
    g, _ = layers._batch(np.asarray(grad_logits, dtype=m.dtype))
    if len(tape.cross) != len(m.cross) or len(tape.dense) != len(m.dense):
        raise ContractError("tape was not produced by this model")
    grads = {}
    gW, gb, g = layers.dense_backward(m.head, tape.head, g)
    grads["head.W"], grads["head.b"] = gW, gb
    for i in reversed(range(len(m.dense))):
        gW, gb, g = layers.dense_backward(m.dense[i], tape.dense[i], g)
        grads[f"dense.{i}.W"], grads[f"dense.{i}.b"] = gW, gb
    if cfg.padded_dim != cfg.D:
        g = np.concatenate([g, np.zeros((g.shape[0], cfg.padded_dim - cfg.D), g.dtype)], axis=1)
    gx0 = np.zeros_like(g)
    for c in reversed(range(len(m.cross))):
        layer = m.cross[c]
        bwd = layers.bfi_backward if isinstance(layer, BlockwiseLayerParams) else layers.cross_backward
        gW, gb, g, gx = bwd(layer, tape.cross[c], g)
        grads[f"cross.{c}.W"], grads[f"cross.{c}.b"] = gW, gb
        gx0 += gx
    ordered = {name: grads[name] for name, _ in m.named_parameters()}
    if not return_input_grad:
        return ordered
    gin = (gx0 + g)[:, :cfg.D]
    if m.input_perm is not None:
        shuffled, gin = gin, np.empty_like(gin)
        gin[:, m.input_perm] = shuffled
    return ordered, (gin[0] if tape.squeeze else gin)


@dataclass(frozen=True)
class CostReport:
    variant: str
    D: int
    K: int
    C: int
    padded_dim: int
    block_size: int
    cross_weight_params_per_layer: int
    cross_params_per_layer: int
    cross_params: int
    dense_params: int
    total_params: int
    cross_flops_per_layer: int
    cross_flops_per_instance: int
    dense_flops_per_instance: int
    memory_bytes: int


def _cost(cfg: ModelConfig, bytes_per_param: int = 4) -> CostReport:
    spec = cfg.spec
    d = cfg.block_size
    if not spec.blockwise:
        weights, biases, mults = cfg.D * cfg.D, cfg.D, cfg.D * cfg.D
    else:
        n = 1 if spec.share else cfg.K
        weights, biases = n * d * d, n * d
        mults = cfg.K * d * d  # sharing saves memory, not multiplies
    per_layer = weights + biases
    widths = [cfg.D] + [cfg.hidden] * cfg.L + [cfg.M]
    dense_params = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    dense_flops = sum(a * b for a, b in zip(widths[:-1], widths[1:]))
    total = per_layer * cfg.C + dense_params
    return CostReport(
        variant=cfg.variant, D=cfg.D, K=cfg.K if spec.blockwise else 1, C=cfg.C,
        padded_dim=cfg.padded_dim, block_size=d,
        cross_weight_params_per_layer=weights, cross_params_per_layer=per_layer,
        cross_params=per_layer * cfg.C, dense_params=dense_params, total_params=total,
        cross_flops_per_layer=mults, cross_flops_per_instance=mults * cfg.C,
        dense_flops_per_instance=dense_flops, memory_bytes=total * bytes_per_param,
    )


def param_count(cfg: ModelConfig) -> CostReport:
    """Closed-form parameter counts (the report also carries FLOP figures)."""
    return _cost(cfg)


def flop_count(cfg: ModelConfig) -> CostReport:
    """Closed-form multiply counts; cross multiplies are D^2 per layer, D^2/K blockwise."""
    return _cost(cfg)


def enumerate_parameters(m: Model) -> dict[str, int]:
    """Count allocated parameter scalars by group, walking the live buffers."""
    counts = {"cross": 0, "cross_weights": 0, "dense": 0}
    for name, buf in m.named_parameters():
        group = name.split(".")[0]
        if group == "cross":
            counts["cross"] += buf.size
            if name.endswith(".W"):
                counts["cross_weights"] += buf.size
        else:
            counts["dense"] += buf.size
    counts["total"] = counts["cross"] + counts["dense"]
    return counts
