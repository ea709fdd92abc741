"""Tour of the reverse-mode core: build a tiny graph, pull gradients back,
and confirm them against central finite differences.
"""
import numpy as np

from mvfuse import backward, constant, grad_check, parameter
from mvfuse.autodiff import matmul, relu, sum_all

print("== 1. a three-node graph ==")
w = parameter([[1.0, -2.0], [0.5, 0.25]], name="w")
x = constant([[1.0, 1.0]], name="x")
y = sum_all(relu(matmul(x, w)))
print("forward value:", y.value[0, 0])

backward(y)
print("dL/dw:\n", w.grad)
# the second column's pre-activation is negative, so its weights get zeros

print()
print("== 2. gradients vs central differences ==")


def build(vs):
    return sum_all(relu(matmul(constant([[1.0, 1.0]]), vs["w"])))


err = grad_check(build, {"w": np.array([[1.0, -2.0], [0.5, 0.25]])},
                 step=1e-6)
print(f"max relative disagreement: {err:.2e}")

print()
print("== 3. define-by-run means graphs are throwaway ==")
for step in range(3):
    w_arr = np.array([[1.0 - 0.1 * step]])
    w = parameter(w_arr, name="w")
    loss = matmul(w, w)  # w^2
    backward(loss)
    print(f"w={w_arr[0,0]:.2f}  loss={loss.value[0,0]:.4f}  grad={w.grad[0,0]:.2f}")
