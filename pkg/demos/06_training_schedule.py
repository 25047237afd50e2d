"""Validation-driven LR halving, the stopping rule and the best-epoch snapshot."""
# %%
import numpy as np

from softshift import (SeededRng, ShiftConfig, TrainConfig, evaluate, generate_domain_pair, hard_objective,
                       init_params, mlp_specs, train)

pair = generate_domain_pair(ShiftConfig(source_train=200), SeededRng(1))
src = pair.source["train"]
model = init_params(mlp_specs(20, 10), SeededRng(1).child("model"))
best, run = train(model, src, pair.source["validation"], hard_objective(src.labels), TrainConfig())
run.test_acc = evaluate(best, pair.source["test"])   # train() never sees the test split
print(run.to_log())

# %% the returned model is the best-validation snapshot, not the last epoch
print("evaluate(best) =", evaluate(best, pair.source["validation"]), "max trace =", max(run.val_acc))

# %% with no progress at all the schedule walks down to the floor and stops
_, flat = train(model, src, pair.source["validation"], lambda z, idx: (0.0, np.zeros_like(z)), TrainConfig())
print("plateau LR trace:", flat.lr)
