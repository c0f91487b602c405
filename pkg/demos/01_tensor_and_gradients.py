"""Tour of the tensor engine: forward ops, reverse-mode gradients, and the
finite-difference checker that guards every differentiable op.

Run:  python demos/01_tensor_and_gradients.py
"""

import numpy as np

from weakpose import autodiff
from weakpose.autodiff import Tensor
from weakpose.gradcheck import format_suite, gradcheck, run_suite

# A tiny computation: z = sum(relu(A @ B) * C).  Every op records itself on
# the implicit tape, so one backward() call fills in all gradients.
rng = np.random.default_rng(0)
A = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
B = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
C = Tensor(rng.normal(size=(3, 2)))

z = autodiff.sum_(autodiff.mul(autodiff.relu(autodiff.matmul(A, B)), C))
z.backward()
print("z =", float(z.data))
print("dz/dA:\n", A.grad)

# The same gradient, measured numerically.  gradcheck sweeps every entry of
# every parameter with central differences and reports relative errors.
report = gradcheck(lambda: autodiff.sum_(autodiff.mul(autodiff.relu(autodiff.matmul(A, B)), C)), {"A": A, "B": B})
print("\ngradcheck on the toy expression:")
print(report.format_table())

# The bundled suite covers each op the model uses, plus the whole network
# end to end (the same thing `weakpose gradcheck` runs).
print("\nfull op suite:")
entries = run_suite()
print(format_suite(entries))
assert all(e.passed for e in entries)
