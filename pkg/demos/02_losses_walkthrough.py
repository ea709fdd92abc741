"""The two objective terms on toy data: what the cross-correlation matrix
looks like, what Sinkhorn balancing does to assignments, and where the
class-consistency loss bottoms out.
"""
import numpy as np

from mvfuse import LossWeights, class_loss, cross_correlation, instance_loss, sinkhorn

rng = np.random.default_rng(0)
np.set_printoptions(precision=3, suppress=True)

print("== 1. cross-correlation of a batch with itself ==")
z = rng.normal(size=(64, 4))
print(cross_correlation(z, z))
print("(identity diagonal: each dimension correlates perfectly with itself)")

print()
print("== 2. a noisy copy decorrelates ==")
h = z + rng.normal(size=z.shape) * 1.0
print(cross_correlation(z, h))

w = LossWeights()
print()
print("== 3. instance loss prefers aligned, non-redundant projections ==")
print(f"aligned copy:   {instance_loss(z, [z], w):.4f}")
print(f"noisy copy:     {instance_loss(z, [h], w):.4f}")
print(f"pure noise:     {instance_loss(z, [rng.normal(size=z.shape)], w):.4f}")

print()
print("== 4. Sinkhorn balancing ==")
scores = rng.normal(size=(8, 3)) * 0.05
plan = sinkhorn(scores, eps=0.05, iters=3)
print("plan (prototypes x samples):")
print(plan)
print("row sums (want 1/3): ", plan.sum(axis=1))
print("column sums (want 1/8):", plan.sum(axis=0))

print()
print("== 5. class-consistency floor ==")
k = 4
uniform = np.zeros((16, k))
print(f"identical uniform heads: {class_loss([uniform, uniform], w):.4f} "
      f"(= log {k} = {np.log(k):.4f})")
sharp = rng.normal(size=(16, k)) * 3.0
print(f"two unrelated heads:      {class_loss([sharp, rng.normal(size=(16, k)) * 3.0], w):.4f}")
