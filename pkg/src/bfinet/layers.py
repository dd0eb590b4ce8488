"""Forward/backward kernels for cross, blockwise cross, dense ReLU and loss.

All kernels take batches ``(B, D)``; 1-D inputs are treated as a batch of
one and the result is squeezed back. Weight gradients are summed over the
batch, so callers average if they want a mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ContractError, MultiplyCounter, apply_permutation, invert_permutation


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ContractError(f"expected a vector or a (batch, features) array, got {x.shape}")
    return x, False


def _unbatch(x: np.ndarray, squeeze: bool) -> np.ndarray:
    return x[0] if squeeze else x


def _affine(x: np.ndarray, W: np.ndarray, b: np.ndarray, counter: MultiplyCounter | None):
    if counter is not None:
        counter.add(x.shape[0] * W.shape[0] * W.shape[1])
    return x @ W.T + b


@dataclass
class CrossLayerParams:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1]:
            raise ContractError(f"cross weight must be square, got {self.W.shape}")
        if self.b.shape != (self.W.shape[0],):
            raise ContractError(f"cross bias {self.b.shape} does not match W {self.W.shape}")

    @property
    def dim(self) -> int:
        return self.W.shape[0]


@dataclass
class BlockwiseLayerParams:
    """K affine blocks acting on a shuffled-and-split activation.

    ``W`` has shape ``(n, d, d)`` and ``b`` shape ``(n, d)``, where ``n`` is
    ``K`` for independent blocks and 1 when all blocks share one buffer.
    ``perm`` is present only on layers that shuffle.
    """

    W: np.ndarray
    b: np.ndarray
    K: int
    shared: bool = False
    perm: np.ndarray | None = None

    def __post_init__(self):
        n = 1 if self.shared else self.K
        if self.W.ndim != 3 or self.W.shape[0] != n or self.W.shape[1] != self.W.shape[2]:
            raise ContractError(f"block weights must be ({n}, d, d), got {self.W.shape}")
        if self.b.shape != self.W.shape[:2]:
            raise ContractError(f"block bias {self.b.shape} does not match W {self.W.shape}")
        if self.perm is not None and self.perm.shape != (self.dim,):
            raise ContractError(f"perm length {self.perm.shape} != padded width {self.dim}")

    @property
    def block_size(self) -> int:
        return self.W.shape[1]

    @property
    def dim(self) -> int:
        return self.K * self.block_size

    def block(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        j = 0 if self.shared else i
        return self.W[j], self.b[j]


@dataclass
class DenseLayerParams:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ContractError(f"dense shapes W {self.W.shape}, b {self.b.shape} disagree")


@dataclass
class LayerTape:
    """Activations cached by a forward call for its backward pass."""

    x0: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    z: np.ndarray | None = None
    blocks: np.ndarray | None = None  # (K, B, d) split of the shuffled input
    squeeze: bool = False


def _check_cross_inputs(D: int, x0: np.ndarray, x_prev: np.ndarray) -> None:
    if x0.shape != x_prev.shape or x0.shape[1] != D:
        raise ContractError(
            f"cross layer of width {D} got x0 {x0.shape} and x_prev {x_prev.shape}")


def cross_forward(p: CrossLayerParams, x0, x_prev, counter: MultiplyCounter | None = None):
    """``x_next = x0 * (W x_prev + b) + x_prev``."""
    x0, squeeze = _batch(x0)
    x_prev, _ = _batch(x_prev)
    _check_cross_inputs(p.dim, x0, x_prev)
    z = _affine(x_prev, p.W, p.b, counter)
    out = x0 * z + x_prev
    return _unbatch(out, squeeze), LayerTape(x0=x0, x_prev=x_prev, z=z, squeeze=squeeze)


def cross_backward(p: CrossLayerParams, tape: LayerTape, grad_out):
    """Returns ``(grad_W, grad_b, grad_x_prev, grad_x0)``."""
    g, _ = _batch(grad_out)
    if g.shape != tape.z.shape:
        raise ContractError(f"grad_out {g.shape} does not match forward output {tape.z.shape}")
    gz = g * tape.x0
    grad_W = gz.T @ tape.x_prev
    grad_b = gz.sum(axis=0)
    grad_x_prev = g + gz @ p.W
    grad_x0 = g * tape.z
    s = tape.squeeze
    return grad_W, grad_b, _unbatch(grad_x_prev, s), _unbatch(grad_x0, s)


def shuffle_split(x, K: int, perm=None) -> list[np.ndarray]:
    """Optionally permute the last axis of ``x`` and cut it into K equal blocks."""
    x = np.asarray(x)
    D = x.shape[-1]
    if K < 1 or K > D:
        raise ContractError(f"cannot split {D} features into K={K} blocks")
    if D % K:
        raise ContractError(f"width {D} is not a multiple of K={K}; pad first")
    y = apply_permutation(perm, x) if perm is not None else x
    d = D // K
    return [y[..., i * d:(i + 1) * d] for i in range(K)]


def bfi_forward(p: BlockwiseLayerParams, x0, x_prev, counter: MultiplyCounter | None = None):
    """One blockwise cross layer.

    The block outputs are concatenated in shuffled order and multiplied
    with ``x0`` as given; nothing is permuted back. For K > 1 the blocks
    run as one stacked matmul over a ``(K, B, d)`` view.
    """
    x0, squeeze = _batch(x0)
    x_prev, _ = _batch(x_prev)
    _check_cross_inputs(p.dim, x0, x_prev)
    B, K, d = x_prev.shape[0], p.K, p.block_size
    if K == 1:
        (y,) = shuffle_split(x_prev, 1, p.perm)
        z = _affine(y, p.W[0], p.b[0], counter)
        stacked = y[None]
    else:
        y = apply_permutation(p.perm, x_prev) if p.perm is not None else x_prev
        stacked = y.reshape(B, K, d).transpose(1, 0, 2)
        if counter is not None:
            counter.add(B * K * d * d)
        zk = stacked @ p.W.transpose(0, 2, 1) + p.b[:, None, :]
        z = zk.transpose(1, 0, 2).reshape(B, K * d)
    out = x0 * z + x_prev
    tape = LayerTape(x0=x0, x_prev=x_prev, z=z, blocks=stacked, squeeze=squeeze)
    return _unbatch(out, squeeze), tape


def bfi_backward(p: BlockwiseLayerParams, tape: LayerTape, grad_out):
    """Returns ``(grad_W, grad_b, grad_x_prev, grad_x0)``.

    ``grad_W``/``grad_b`` have the same shapes as ``p.W``/``p.b``; with
    sharing the K block contributions are summed into the single buffer.
    """
    g, _ = _batch(grad_out)
    if g.shape != tape.z.shape:
        raise ContractError(f"grad_out {g.shape} does not match forward output {tape.z.shape}")
    B, K, d = g.shape[0], p.K, p.block_size
    gz = g * tape.x0
    if K == 1:
        y = tape.blocks[0]
        grad_W = (gz.T @ y)[None]
        grad_b = gz.sum(axis=0)[None]
        gy = gz @ p.W[0]
    else:
        gzk = gz.reshape(B, K, d).transpose(1, 0, 2)
        grad_W = gzk.transpose(0, 2, 1) @ tape.blocks
        grad_b = gzk.sum(axis=1)
        if p.shared:
            grad_W = grad_W.sum(axis=0, keepdims=True)
            grad_b = grad_b.sum(axis=0, keepdims=True)
        gy = (gzk @ p.W).transpose(1, 0, 2).reshape(B, K * d)
    if p.perm is not None:
        gy = apply_permutation(invert_permutation(p.perm), gy)
    grad_x_prev = g + gy
    grad_x0 = g * tape.z
    s = tape.squeeze
    return grad_W, grad_b, _unbatch(grad_x_prev, s), _unbatch(grad_x0, s)


def dense_forward(p: DenseLayerParams, x, relu: bool = True):
    """Affine map, followed by ReLU unless ``relu`` is false (the class head)."""
    x, squeeze = _batch(x)
    if x.shape[1] != p.W.shape[1]:
        raise ContractError(f"dense layer expects {p.W.shape[1]} inputs, got {x.shape}")
    z = x @ p.W.T + p.b
    y = np.maximum(z, 0) if relu else z
    return _unbatch(y, squeeze), LayerTape(x_prev=x, z=z if relu else None, squeeze=squeeze)


def dense_backward(p: DenseLayerParams, tape: LayerTape, grad_out):
    """Returns ``(grad_W, grad_b, grad_x)``; the ReLU subgradient at 0 is 0."""
    g, _ = _batch(grad_out)
    if g.shape != (tape.x_prev.shape[0], p.W.shape[0]):
        raise ContractError(f"grad_out {g.shape} does not match dense output")
    if tape.z is not None:
        g = g * (tape.z > 0)
    grad_W = g.T @ tape.x_prev
    grad_b = g.sum(axis=0)
    grad_x = g @ p.W
    return grad_W, grad_b, _unbatch(grad_x, tape.squeeze)


def dense_relu_forward(p: DenseLayerParams, x):
    return dense_forward(p, x, relu=True)


def dense_relu_backward(p: DenseLayerParams, tape: LayerTape, grad_out):
    return dense_backward(p, tape, grad_out)


def softmax(logits) -> np.ndarray:
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Per-instance cross-entropy and its gradient w.r.t. the logits.

    Uses a max-shifted log-sum-exp, so large logits do not overflow.
    Returns a scalar loss for a single vector, else a ``(B,)`` array.
    """
    logits, squeeze = _batch(logits)
    labels = np.atleast_1d(np.asarray(labels))
    B, M = logits.shape
    if labels.shape != (B,):
        raise ContractError(f"{labels.shape[0]} labels for {B} rows of logits")
    if labels.size and (labels.min() < 0 or labels.max() >= M):
        raise ContractError(f"label out of range [0, {M})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(B)
    loss = lse - shifted[rows, labels]
    grad = np.exp(shifted - lse[:, None])
    grad[rows, labels] -= 1
    if squeeze:
        return float(loss[0]), grad[0]
    return loss, grad
