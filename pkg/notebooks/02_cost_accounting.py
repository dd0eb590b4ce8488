"""
Counting parameters and multiplies
==================================

The cost report is computed from the configuration alone. Here we print it
for every variant on a 54-feature table, confirm one entry against the
weights a built model actually holds, and time the cross stack at a wider
input where the savings become visible.
"""

# %%
import time

import numpy as np

from bfinet import VARIANTS, ModelConfig, build_model, model_forward, param_count
from bfinet.model import enumerate_parameters

print(f"{'variant':>8} {'w/layer':>8} {'cross':>7} {'total':>8} {'mults/inst':>11}")
for name in VARIANTS:
    rep = param_count(ModelConfig(D=54, C=3, K=3, L=2, M=7, variant=name))
    print(f"{name:>8} {rep.cross_weight_params_per_layer:>8} {rep.cross_params:>7} "
          f"{rep.total_params:>8} {rep.cross_flops_per_instance:>11}")

# %%
# The closed form agrees with what the built model stores.
cfg = ModelConfig(D=54, C=3, K=3, L=2, M=7, variant="T")
print("T stores", enumerate_parameters(build_model(cfg))["total"],
      "parameters; report says", param_count(cfg).total_params)

# %%
# When D is not a multiple of K the input is zero-padded to the next
# multiple, so the report uses the padded block size.
rep = param_count(ModelConfig(D=54, C=1, K=4, variant="P"))
print("D=54 K=4 pads to", rep.padded_dim, "with blocks of", rep.block_size)

# %%
# Wall-clock on a wide input. Only the cross stack is timed.
x = np.random.default_rng(0).normal(size=(256, 1024)).astype(np.float32)
for name, K in [("Baseline", 1), ("P", 8)]:
    model = build_model(ModelConfig(D=1024, C=3, K=K, L=1, hidden=8, M=2, variant=name))
    model_forward(model, x)
    start = time.perf_counter()
    for _ in range(10):
        model_forward(model, x)
    print(f"{name:>8} K={K}: {(time.perf_counter() - start) / 10 * 1e3:.2f} ms per batch")
