"""
Checking the hand-written backward pass
=======================================

Every gradient in the package is derived by hand. A central finite
difference in float64 gives an independent answer. The table below lists
the worst relative error per parameter buffer for a tiny model.
"""

# %%
from bfinet.gradcheck import TINY, check_model
from bfinet.model import ModelConfig

report = check_model(ModelConfig(**TINY, variant="Q", seed=3), eps=1e-5, tol=1e-5, abs_floor=1e-8)
print(report.table())
print("passed:", report.passed)

# %%
# The same check across variants and seeds, which is what
# ``bfinet gradcheck --seeds 5`` runs.
from bfinet.gradcheck import check_variants

reports = check_variants(["Baseline", "P", "Q", "T", "S"], range(3), TINY,
                         eps=1e-5, tol=1e-5, abs_floor=1e-8)
print(sum(r.passed for r in reports), "of", len(reports), "models pass")
