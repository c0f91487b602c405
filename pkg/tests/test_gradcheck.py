"""The finite-difference checker itself."""

import numpy as np
import pytest

from weakpose import autodiff
from weakpose.autodiff import Tensor
from weakpose.gradcheck import GradcheckReport, ParamCheck, gradcheck


class TestGradcheck:
    def test_quadratic_at_three(self):
        theta = Tensor(np.array([3.0]), requires_grad=True)

        def f():
            return autodiff.sum_(autodiff.mul(theta, theta))

        report = gradcheck(f, {"theta": theta}, step=1e-3)
        # analytic 6 vs central difference 6 +- 1e-6: tiny relative error
        assert report.max_rel_error < 1e-7
        f()
        autodiff.zero_grads([theta])
        loss = f()
        loss.backward()
        assert theta.grad[0] == pytest.approx(6.0, abs=1e-12)

    def test_constant_function_both_zero(self):
        theta = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        constant = Tensor(np.array([5.0]))

        def f():
            return autodiff.sum_(constant)

        report = gradcheck(f, {"theta": theta}, step=1e-3)
        assert report.max_rel_error == 0.0

    def test_sampled_entries(self):
        theta = Tensor(np.arange(100, dtype=np.float64), requires_grad=True)

        def f():
            return autodiff.sum_(autodiff.mul(theta, theta))

        report = gradcheck(f, {"theta": theta}, step=1e-4, max_entries=7, rng=np.random.default_rng(0))
        assert report.params[0].entries_checked == 7
        assert report.max_rel_error < 1e-6

    def test_report_formatting_and_pass(self):
        report = GradcheckReport(params=[ParamCheck("w", 1e-6, 1e-7, 4), ParamCheck("b", 3e-5, 1e-5, 2)])
        assert report.max_rel_error == pytest.approx(3e-5)
        assert report.passes(1e-4) and not report.passes(1e-5)
        table = report.format_table()
        assert "w" in table and "OVERALL" in table

    def test_noncontiguous_parameter_rejected(self):
        theta = Tensor(np.zeros((4, 4))[::2], requires_grad=True)
        theta.data = np.zeros((8, 8))[::2]  # force a non-contiguous view
        with pytest.raises(ValueError, match="contiguous"):
            gradcheck(lambda: autodiff.sum_(theta), {"theta": theta})
