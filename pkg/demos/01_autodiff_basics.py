"""A short tour of the reverse-mode tensor engine.

Builds a few small graphs, runs backward, and checks one gradient by hand so
you can see the engine is doing ordinary calculus, not magic.
"""

import numpy as np

import threadsum.autodiff as ad

# --- a scalar chain, gradient derived by hand -----------------------------
x = ad.Tensor(np.float64(1.5), requires_grad=True, name="x")
y = ad.tanh(x * 2.0 + 1.0)
y.backward()
by_hand = (1.0 - np.tanh(2.0 * 1.5 + 1.0) ** 2) * 2.0
print(f"y = tanh(2x + 1) at x=1.5 -> {y.item():.6f}")
print(f"dy/dx: engine {float(x.grad):.6f}, by hand {by_hand:.6f}")

# --- broadcasting: gradients fold back to the parameter's shape ------------
w = ad.Tensor(np.ones((3,)), requires_grad=True, name="w")
batch = ad.constant(np.arange(12.0).reshape(4, 3))
loss = ad.tsum(ad.mul(batch, w))          # w broadcasts over the batch axis
loss.backward()
print("\nsum(batch * w): grad on w is the column sums of the batch")
print("w.grad =", w.grad, " column sums =", batch.data.sum(axis=0))

# --- masked softmax: padding gets exactly zero weight ----------------------
scores = ad.Tensor(np.array([[2.0, 1.0, -1.0, 0.0]]), requires_grad=True)
mask = np.array([[True, True, False, False]])
alpha = ad.masked_softmax(scores, mask)
print("\nmasked softmax over [2, 1, pad, pad]:", alpha.data[0])
print("real entries sum to", alpha.data[0].sum(), "and padding is exactly 0")

# --- a two-layer scrap network trained by hand-rolled gradient descent -----
rng = np.random.default_rng(0)
w1 = ad.Tensor(rng.normal(0, 0.5, (2, 8)), requires_grad=True, name="w1")
w2 = ad.Tensor(rng.normal(0, 0.5, (8, 1)), requires_grad=True, name="w2")
inputs = ad.constant(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]))
targets = np.array([[0.0], [1.0], [1.0], [0.0]])      # XOR

print("\ntraining a 2-8-1 tanh net on XOR with plain SGD:")
for step in range(2001):
    hidden = ad.tanh(ad.matmul(inputs, w1))
    logits = ad.matmul(hidden, w2)
    err = logits - ad.constant(targets)
    loss = ad.mean(ad.mul(err, err))
    for p in (w1, w2):
        p.zero_grad()
    loss.backward()
    for p in (w1, w2):
        p.data -= 0.5 * p.grad
    if step % 500 == 0:
        print(f"  step {step:4d}  mse {loss.item():.6f}")
preds = ad.matmul(ad.tanh(ad.matmul(inputs, w1)), w2)
print("predictions:", np.round(preds.data.ravel(), 3), "(targets 0 1 1 0)")

# --- no_grad: inference builds no graph ------------------------------------
with ad.no_grad():
    frozen = ad.tanh(x * 2.0 + 1.0)
print("\nunder no_grad the result is a plain constant:", repr(frozen))
