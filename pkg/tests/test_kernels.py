import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vqpd import kernels
from vqpd.kernels import (
    CoordinateSubproblem,
    NonConvexError,
    smooth_step,
    soft_threshold_box,
    solve_l1_scalar,
    solve_scalar_generic,
)
from vqpd.problem import BoxSet, Linear, ProblemSpec, ScalarFunction, SquaredNorm

from conftest import scan_min

BACKENDS = kernels.available_backends()


def grid_objective(sub, h=1e-6):
    return scan_min(sub.objective, sub.lo, sub.hi, h)


@pytest.fixture(params=BACKENDS)
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


class TestSolveL1Scalar:
    def test_shrinks_towards_zero(self, backend):
        sub = CoordinateSubproblem(1.0, 1.0, 0.0, 1.0, -10, 10)
        x = solve_l1_scalar(sub)
        assert x == 0.5
        # the grid oracle agrees on the objective
        assert sub.objective(x) <= grid_objective(CoordinateSubproblem(1.0, 1.0, 0.0, 1.0, -1, 2))[1] + 1e-12

    def test_dead_zone(self, backend):
        assert solve_l1_scalar(CoordinateSubproblem(1.0, 0.2, 0.0, 1.0, -10, 10)) == 0.0

    def test_identity(self, backend):
        assert solve_l1_scalar(CoordinateSubproblem(1.0, 0.3, 0.0, 0.0, 0, 1)) == 0.3

    def test_lower_bound_hit(self, backend):
        sub = CoordinateSubproblem(2.0, -1.0, 1.0, 1.0, -1, 1)
        assert solve_l1_scalar(sub) == -1.0
        xg, _ = grid_objective(sub, 1e-5)
        assert xg == pytest.approx(-1.0, abs=1e-5)

    def test_kink_tie_returns_clamped_zero(self, backend):
        # |x_prev - d/2a| == e/2a exactly
        assert solve_l1_scalar(CoordinateSubproblem(1.0, 0.5, 0.0, 1.0, 0.25, 2)) == 0.25

    @pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=-1.0), dict(e=-0.1), dict(lo=2.0, hi=1.0)])
    def test_invalid(self, kw):
        base = dict(alpha=1.0, x_prev=0.0, d=0.0, e=0.0, lo=-1.0, hi=1.0)
        with pytest.raises(ValueError):
            CoordinateSubproblem(**{**base, **kw})

    @given(
        alpha=st.floats(0.05, 50), x_prev=st.floats(-3, 3), d=st.floats(-20, 20), e=st.floats(0, 20),
        lo=st.floats(-2, 0.5), width=st.floats(0, 2.5),
    )
    def test_against_dense_grid(self, alpha, x_prev, d, e, lo, width):
        sub = CoordinateSubproblem(alpha, x_prev, d, e, lo, lo + width)
        x = solve_l1_scalar(sub)
        assert lo <= x <= lo + width
        # 1e-4 grid plus a local 1e-7 refinement around the grid argmin
        xg, vg = grid_objective(sub, 1e-4)
        _, vr = scan_min(sub.objective, max(sub.lo, xg - 2e-4), min(sub.hi, xg + 2e-4), 1e-7)
        assert sub.objective(x) <= min(vg, vr) + 1e-8


class TestSoftThresholdBox:
    def test_backends_bitwise_identical(self):
        rng = np.random.default_rng(3)
        n = 1000
        args = (rng.uniform(-1, 1, n), rng.normal(size=n) * 3, rng.uniform(0, 1, n), np.full(n, -0.5), np.full(n, 0.7))
        outs = []
        for b in BACKENDS:
            with kernels.use_backend(b):
                outs.append(soft_threshold_box(*args, 1.3))
        for o in outs[1:]:
            np.testing.assert_array_equal(o.view(np.uint64), outs[0].view(np.uint64))

    def test_matches_scalar(self, backend):
        rng = np.random.default_rng(5)
        n = 200
        x, d, e = rng.uniform(-1, 1, n), rng.normal(size=n), rng.uniform(0, 1, n)
        out = soft_threshold_box(x, d, e, -1.0, 1.0, 0.8)
        want = [solve_l1_scalar(CoordinateSubproblem(0.8, x[i], d[i], e[i], -1.0, 1.0)) for i in range(n)]
        np.testing.assert_array_equal(out, want)

    def test_order_independent(self, backend):
        rng = np.random.default_rng(9)
        n = 300
        x, d, e = rng.uniform(-1, 1, n), rng.normal(size=n), rng.uniform(0, 1, n)
        perm = rng.permutation(n)
        a = soft_threshold_box(x, d, e, -1.0, 1.0, 0.8)
        b = soft_threshold_box(x[perm], d[perm], e[perm], -1.0, 1.0, 0.8)
        np.testing.assert_array_equal(a[perm], b)

    @pytest.mark.skipif("cython" not in BACKENDS, reason="compiled backend not built")
    def test_threads_do_not_change_result(self):
        rng = np.random.default_rng(2)
        n = 5000
        args = (rng.uniform(-1, 1, n), rng.normal(size=n), rng.uniform(0, 1, n), -1.0, 1.0, 0.9)
        with kernels.use_backend("cython"):
            np.testing.assert_array_equal(soft_threshold_box(*args, num_threads=1), soft_threshold_box(*args, num_threads=4))

    def test_rejects_negative_e(self):
        with pytest.raises(ValueError):
            soft_threshold_box([0.0], [0.0], [-1.0], -1, 1, 1.0)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            kernels.set_backend("fortran")


class TestSolveScalarGeneric:
    def test_l1_agrees_with_closed_form(self):
        h = ScalarFunction(abs, lambda v: float(np.sign(v)))
        assert solve_scalar_generic(1.0, 1.0, 0.0, h, -10, 10) == pytest.approx(0.5, abs=1e-10)

    def test_default_selector_is_close(self):
        assert solve_scalar_generic(1.0, 1.0, 0.0, ScalarFunction(abs), -10, 10) == pytest.approx(0.5, abs=1e-8)

    def test_quadratic_vertex(self):
        zero = ScalarFunction(lambda v: 0.0, lambda v: 0.0)
        assert solve_scalar_generic(1.0, 0.4, 0.0, zero, 0, 1) == pytest.approx(0.4, abs=1e-10)

    def test_vertex_clamps(self):
        zero = ScalarFunction(lambda v: 0.0, lambda v: 0.0)
        x = solve_scalar_generic(1.0, 0.0, 2.0, zero, 0, 1)
        xg, _ = scan_min(lambda v: (v - 0.0) ** 2 + 2 * v, 0, 1, 1e-6)
        assert x == 0.0 == xg

    @given(alpha=st.floats(0.1, 10), x_prev=st.floats(-3, 3), d=st.floats(-5, 5), w=st.floats(0, 5))
    def test_weighted_l1_matches_closed_form(self, alpha, x_prev, d, w):
        h = ScalarFunction(lambda v: w * abs(v), lambda v: w * float(np.sign(v)))
        got = solve_scalar_generic(alpha, x_prev, d, h, -2.0, 2.0)
        want = solve_l1_scalar(CoordinateSubproblem(alpha, x_prev, d, w, -2.0, 2.0))
        assert got == pytest.approx(want, abs=1e-9)

    def test_unbounded_interval(self):
        h = ScalarFunction(lambda v: max(v - 1.0, 0.0) * 4, lambda v: 4.0 if v > 1 else 0.0)
        # minimizer of (x-10)^2 + 4 max(x-1, 0): x = 8
        assert solve_scalar_generic(1.0, 10.0, 0.0, h) == pytest.approx(8.0, abs=1e-9)

    def test_nonconvex_detected(self):
        bad = ScalarFunction(lambda v: -30 * abs(v), lambda v: -30.0 * float(np.sign(v)))
        with pytest.raises(NonConvexError):
            solve_scalar_generic(1.0, 0.0, 0.0, bad, -1, 1)
        wiggle = ScalarFunction(np.cos, lambda v: -5.0 * np.sin(5.0 * v))
        with pytest.raises(NonConvexError):
            solve_scalar_generic(0.01, 0.0, 0.0, wiggle, -2.0, 0.7)


def _spec_qp1():
    return ProblemSpec(f=SquaredNorm(), g=[Linear([-1.0], 1.0)], box=BoxSet.uniform(1, -10, 10), beta=1.0)


class TestSmoothStep:
    def test_single_coordinate(self):
        np.testing.assert_array_equal(smooth_step(_spec_qp1(), [0.0], [1.0], 1.0), [0.5])

    def test_gradient_step_on_f_alone(self):
        c = np.array([1.0, -3.0])
        spec = ProblemSpec(f=Linear(c), g=[Linear([1.0, 0.0])], box=BoxSet.uniform(2, -1, 1), beta=1.0)
        x = np.array([0.2, 0.9])
        np.testing.assert_array_equal(smooth_step(spec, x, [0.0], 2.0), np.clip(x - c / 4.0, -1, 1))

    def test_two_coordinates(self):
        spec = ProblemSpec(f=SquaredNorm(), g=[Linear([-1.0, -1.0], 1.0)], box=BoxSet.uniform(2, 0, 1), beta=1.0)
        out = smooth_step(spec, [0.0, 0.0], [1.0], 2.0)
        np.testing.assert_array_equal(out, [0.25, 0.25])
        want = [solve_l1_scalar(CoordinateSubproblem(2.0, 0.0, -1.0, 0.0, 0, 1))] * 2
        np.testing.assert_array_equal(out, want)

    def test_negative_multiplier_rejected(self):
        with pytest.raises(ValueError):
            smooth_step(_spec_qp1(), [0.0], [-0.1], 1.0)

    def test_requires_smooth_spec(self):
        from vqpd.problem import SeparableTerm

        spec = ProblemSpec(f=SquaredNorm(), f_tilde=SeparableTerm.l1(1.0), g=[Linear([1.0])],
                           box=BoxSet.uniform(1, -1, 1), beta=1.0)
        with pytest.raises(ValueError):
            smooth_step(spec, [0.0], [0.0], 1.0)
