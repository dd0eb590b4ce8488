"""
Driving a sweep from an INI file
================================

The ``bfinet`` command reads one INI file and trains every point of a
variant by K by C by L grid. This script writes the config, calls the
command's entry point in-process and prints the summary it produces.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from bfinet.cli import main
from bfinet.data import Dataset, save_delimited

workdir = Path(tempfile.mkdtemp(prefix="bfinet-sweep-"))
rng = np.random.default_rng(1)
X = rng.normal(size=(800, 9))
y = (X[:, 0] * X[:, 4] > 0).astype(int)
save_delimited(Dataset(X, y, label_base=1), workdir / "table.csv")

config = workdir / "sweep.ini"
config.write_text(f"""\
[data]
path = {workdir / 'table.csv'}
train_fraction = 0.75

[model]
L = 1
hidden = 32

[train]
epochs = 40
batch = 64

[output]
dir = {workdir / 'runs'}
timing = false
""")

# %%
# Baseline ignores K, so it is trained once however many K values are given.
code = main(["sweep", str(config), "--variants", "Baseline,P,S", "--K", "3,9", "--C", "1-2"])
print("exit code", code)
print((workdir / "runs" / "summary.csv").read_text())

# %%
# The cost subcommand needs only the model section.
main(["cost", str(config), "--set", "model.D=9", "--set", "model.M=2",
      "--set", "model.K=3", "--set", "model.C=2", "--all-variants"])
