"""Hard, soft and combined losses, and why the soft gradient carries T**2."""
# %%
import math

import numpy as np

from softshift import LossWeights, combined_loss, hard_loss, soft_cross_entropy, softmax_tempered

student = np.array([[2.0, 0.5, -1.0]])
teacher = np.array([[3.0, 1.0, -2.0]])
label = [0]

print("hard", hard_loss(student, label)[0])
for T in (1, 2, 5):
    targets = softmax_tempered(teacher, T)
    value, grad = soft_cross_entropy(student, targets, T)
    print(f"T={T} soft={value:.4f} |grad|={np.linalg.norm(grad):.4f} |T^2 grad|={np.linalg.norm(T * T * grad):.4f}")

# %% the raw soft gradient shrinks roughly like 1/T^2; rescaling keeps it on the hard loss's scale
for T in (1, 2, 5):
    targets = softmax_tempered(teacher, T)
    _, g = combined_loss(student, label, targets, LossWeights(T, 0.5))
    print(f"T={T} combined gradient {np.round(g, 4)}")

# %% rho = inf drops the hard term entirely
targets = softmax_tempered(teacher, 2.0)
print(combined_loss(student, label, targets, LossWeights.from_rho(2.0, math.inf))[0],
      soft_cross_entropy(student, targets, 2.0)[0])
