"""A two-hidden-layer classifier, its backward pass and a finite-difference check."""
# %%
import numpy as np

from softshift import RmspropState, SeededRng, backward, forward, hard_loss, init_params, mlp_specs, rmsprop_step

specs = mlp_specs(input_dim=5, num_classes=3, hidden=(8, 8), activation="tanh")
params = init_params(specs, SeededRng(1))
x = np.random.default_rng(0).normal(size=(4, 5))
y = np.array([0, 2, 1, 1])

logits, cache = forward(params, x)
loss, dlogits = hard_loss(logits, y)
grads = backward(params, cache, dlogits)
print("loss", loss)

# %% compare one weight gradient against central differences
h = 1e-5
W = params.weights[0]
numeric = np.zeros_like(W)
for idx in np.ndindex(W.shape):
    old = W[idx]
    W[idx] = old + h
    up = hard_loss(forward(params, x)[0], y)[0]
    W[idx] = old - h
    down = hard_loss(forward(params, x)[0], y)[0]
    W[idx] = old
    numeric[idx] = (up - down) / (2 * h)
err = np.linalg.norm(numeric - grads.weights[0]) / max(np.linalg.norm(numeric), np.linalg.norm(grads.weights[0]))
print("relative error, first layer:", err)

# %% a few RMSprop steps on the same batch
state = RmspropState.for_params(params, learning_rate=0.004)
for step in range(50):
    logits, cache = forward(params, x)
    loss, dlogits = hard_loss(logits, y)
    rmsprop_step(params, backward(params, cache, dlogits), state)
print("loss after 50 steps", loss)
