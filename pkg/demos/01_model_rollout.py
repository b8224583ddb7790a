"""Tour of the benchmark dynamics: stepping, derivatives, batch evaluation.

The built-in plant is a two-state discrete-time system whose input enters
bilinearly (the effective input gain depends on the current state):

    x1+ = x1 + 0.1*x2 + 0.1*(0.5 + 0.5*x1)*u
    x2+ = x2 + 0.1*x1 + 0.1*(0.5 - 2.0*x2)*u

Run:  python demos/01_model_rollout.py
"""
import numpy as np

from satmpc import benchmark_model, step
from satmpc.model import fd_jacobians, jacobians

model = benchmark_model()
print(f"model: n={model.n} states, m={model.m} inputs")

x = np.array([1.0, -0.5])
u = np.array([-0.5])
print(f"\none step from x={x} with u={u}: {step(model, x, u)}")

A, B = jacobians(model, x, u)
A_fd, B_fd = fd_jacobians(model, x, u)
print("\nanalytic state Jacobian:\n", A)
print("max |analytic - finite difference|:",
      max(np.abs(A - A_fd).max(), np.abs(B - B_fd).max()))

# a short open-loop rollout under a constant input
xs = [np.array([1.0, -0.5])]
for _ in range(5):
    xs.append(step(model, xs[-1], np.array([-0.5])))
print("\nfive steps at u=-0.5:")
for k, xk in enumerate(xs):
    print(f"  k={k}: x=({xk[0]:+.4f}, {xk[1]:+.4f})")

# the same map evaluates on batches: 1000 states in one call
rng = np.random.default_rng(0)
batch = rng.uniform(-2, 2, size=(1000, 2))
nxt = model.step_map(batch, np.full((1000, 1), -0.5))
print(f"\nbatch evaluation: {batch.shape} -> {np.asarray(nxt).shape}")
