"""Dense numeric helpers, a portable seeded generator, and permutations.

Vectors and matrices are plain numpy arrays (row-major, ``float32`` by
default, ``float64`` for gradient checking). Batched inputs are 2-D arrays
of shape ``(batch, features)``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class ContractError(ValueError):
    """Raised when an operation is called with arguments that break its contract."""


def mix64(z: int) -> int:
    """splitmix64 output finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer keys into a seed, giving independent sub-streams."""
    s = seed & MASK64
    for k in keys:
        s = mix64(s + ((k + 1) * GOLDEN_GAMMA))
    return s


class SeededRng:
    """splitmix64 generator.

    The state advances by the golden-ratio increment and every output is the
    finalizer applied to the new state, so the stream is identical on any
    platform for a given seed. Array draws are vectorized with wrapping
    ``uint64`` arithmetic and consume exactly as much state as the
    equivalent sequence of scalar draws.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def u64_array(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GOLDEN_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return z

    def below(self, n: int) -> int:
        """Integer in ``[0, n)`` by 64x64 multiply-high of one draw."""
        if n < 1:
            raise ContractError(f"below() needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def random(self, size: int) -> np.ndarray:
        """``size`` doubles in ``[0, 1)`` from the top 53 bits of each draw."""
        return (self.u64_array(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, low: float, high: float, shape, dtype=np.float32) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = self.random(n)
        return (low + (high - low) * u).reshape(shape).astype(dtype)


def _check_finite(out: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{what} produced non-finite values")
    return out


def matvec(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    W = np.asarray(W)
    x = np.asarray(x)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise ContractError(f"matvec shape mismatch: W {W.shape} vs x {x.shape}")
    return _check_finite(W @ x, "matvec")


def elementwise_mult(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractError(f"elementwise_mult length mismatch: {a.shape} vs {b.shape}")
    return _check_finite(a * b, "elementwise_mult")


def is_permutation(p) -> bool:
    p = np.asarray(p)
    return p.ndim == 1 and np.array_equal(np.sort(p), np.arange(p.size))


def sample_permutation(n: int, rng: SeededRng) -> np.ndarray:
    """Fisher-Yates shuffle of ``range(n)`` driven by ``rng``."""
    if n < 1:
        raise ContractError(f"sample_permutation needs n >= 1, got {n}")
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm, dtype=np.int64)


def apply_permutation(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``out[..., i] = x[..., p[i]]``; works on vectors and on batches of rows."""
    p = np.asarray(p)
    x = np.asarray(x)
    if p.ndim != 1 or x.shape[-1] != p.size:
        raise ContractError(
            f"apply_permutation length mismatch: perm {p.shape} vs x {x.shape}")
    return x[..., p]


def invert_permutation(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p)
    if not is_permutation(p):
        raise ContractError("invert_permutation: not a bijection on 0..n-1")
    inv = np.empty_like(p)
    inv[p] = np.arange(p.size, dtype=p.dtype)
    return inv


class MultiplyCounter:
    """Tallies scalar multiplies spent in weight-matrix products."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)
