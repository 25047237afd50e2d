"""Tempered softmax: how T reshapes a posterior."""
# %%
import numpy as np

from softshift import SeededRng, log_softmax_tempered, softmax_tempered

logits = np.array([4.0, 2.0, 1.0, -1.0])
for T in (0.5, 1, 2, 5, 20):
    p = softmax_tempered(logits, T)
    print(f"T={T:<4} " + " ".join(f"{v:.3f}" for v in p))

# %% large logits stay finite because the row max is subtracted first
print(softmax_tempered([1000.0, 0.0, -1000.0]))
print(log_softmax_tempered([1000.0, 0.0, -1000.0]))

# %% random streams are named, so adding a draw elsewhere never shifts this one
root = SeededRng(0)
print(root.child("init", 0).standard_normal(3))
print(root.child("init", 0).standard_normal(3))   # same
print(root.child("init", 1).standard_normal(3))   # different
