"""
Checking gradients against finite differences
=============================================

The numerics package records every op on ``Tensor`` values and replays the
record backwards. Here a small softmax-regression loss is differentiated
both ways.
"""
import numpy as np

import genrec.numerics as nx
from genrec.numerics import Parameter

rng = np.random.default_rng(0)
x = rng.normal(size=(5, 4))
targets = np.array([0, 2, 1, 2, 0])
w = Parameter("w", rng.normal(size=(4, 3)), dtype=np.float64)

loss = nx.cross_entropy(nx.Tensor(x) @ w, targets)
nx.backward(loss)
print("loss", loss.item())

# central differences, one coordinate at a time
eps = 1e-6
numeric = np.zeros_like(w.data)
for idx in np.ndindex(w.data.shape):
    old = w.data[idx]
    w.data[idx] = old + eps
    with nx.no_grad():
        hi = nx.cross_entropy(nx.Tensor(x) @ w, targets).item()
    w.data[idx] = old - eps
    with nx.no_grad():
        lo = nx.cross_entropy(nx.Tensor(x) @ w, targets).item()
    w.data[idx] = old
    numeric[idx] = (hi - lo) / (2 * eps)

print("max abs difference", np.abs(numeric - w.grad).max())

# one AdamW step with the warmup schedule
from genrec.numerics import AdamWState, WarmupSchedule, adamw_step, lr_at

schedule = WarmupSchedule(total_steps=100, base_lr=1e-2)
state = AdamWState(lr=1e-2, weight_decay=1e-5)
adamw_step([w], state, lr_at(schedule, 1))
print("warmup steps", schedule.warmup_steps, "lr at step 1", lr_at(schedule, 1))
