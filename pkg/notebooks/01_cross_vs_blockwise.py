"""
Cross layers and their blockwise counterpart
============================================

A cross layer mixes every feature with every other through one square
matrix. The blockwise layer first shuffles the features, cuts them into K
groups and gives each group its own small matrix. This walk-through builds
both by hand and checks that K=1 without a shuffle is the same computation.
"""

# %%
import numpy as np

from bfinet import layers
from bfinet.layers import BlockwiseLayerParams, CrossLayerParams
from bfinet.linalg import SeededRng, sample_permutation

rng = np.random.default_rng(0)
D = 6
x0 = rng.normal(size=(4, D)).astype(np.float32)

W = rng.normal(size=(D, D)).astype(np.float32)
b = rng.normal(size=D).astype(np.float32)
full = CrossLayerParams(W, b)
out_full, _ = layers.cross_forward(full, x0, x0)

# %%
# With a single block and no shuffle the blockwise layer holds the same
# matrix, so the outputs agree bit for bit.
one_block = BlockwiseLayerParams(W[None], b[None], K=1)
out_one, _ = layers.bfi_forward(one_block, x0, x0)
print("K=1 matches the full layer:", np.array_equal(out_full, out_one))

# %%
# Three blocks of width two. The permutation decides which features end up
# in the same block, and the outputs stay in shuffled order.
perm = sample_permutation(D, SeededRng(7))
print("shuffle:", perm.tolist())
for i, block in enumerate(layers.shuffle_split(np.arange(D), 3, perm)):
    print(f"block {i} sees features {block.tolist()}")

Wk = rng.normal(size=(3, 2, 2)).astype(np.float32)
bk = rng.normal(size=(3, 2)).astype(np.float32)
blockwise = BlockwiseLayerParams(Wk, bk, K=3, perm=perm)
out_blk, _ = layers.bfi_forward(blockwise, x0, x0)
print("output shape:", out_blk.shape)

# %%
# Sharing keeps one 2x2 matrix for all three blocks.
shared = BlockwiseLayerParams(Wk[:1], bk[:1], K=3, shared=True, perm=perm)
print("weights per layer: full", W.size, "| blockwise", Wk.size, "| shared", shared.W.size)
