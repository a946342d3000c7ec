import numpy as np
import pytest

from vqpd.diagnostics import Diagnostics, Snapshot, dpp_bound_check
from vqpd.instances import gen_ball1, gen_gmv_l2, gen_qp1
from vqpd.queue import QueueState
from vqpd.solvers import SolverConfig, init_run, new_alg_step, run


def _snap(r):
    return Snapshot(r.t, r.x.copy(), r.G_prev.copy(), r.queue, r.alpha.current)


def independent_dpp_rhs(spec, x_prev, x_t, Q, G_prev, G_t, alpha, z):
    # drift-plus-penalty right-hand side written out term by term
    w = Q + G_prev
    F_z = spec.f.value(z) + spec.f_tilde.value(z)
    Gz = np.array([spec.g[k].value(z) + spec.g_tilde[k].value(z) for k in range(spec.m)])
    return (F_z + w @ Gz
            + alpha * (np.sum((z - x_prev) ** 2) - np.sum((z - x_t) ** 2))
            + 0.5 * (G_t @ G_t - G_prev @ G_prev)
            + (0.5 * (spec.beta ** 2 + spec.L_f + w @ spec.L_g) - alpha) * np.sum((x_t - x_prev) ** 2))


class TestDppBound:
    def test_qp1_first_hundred(self, qp1):
        spec, ref = qp1
        r = init_run(spec, "new-constant", SolverConfig(alpha=2.0))
        for _ in range(100):
            before = _snap(r)
            new_alg_step(spec, r)
            res = dpp_bound_check(spec, before, r, ref.x_star)
            assert res.holds and res.holds_simplified
            want = independent_dpp_rhs(spec, before.x, r.x, before.queue.Q, before.G_prev, r.G_prev, 2.0, ref.x_star)
            assert res.rhs == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_stationary_case(self, qp1):
        spec, ref = qp1
        r = init_run(spec, "new-constant", SolverConfig(alpha=2.0, x_start=[1.0]))
        lam = ref.lambda_star
        r.queue = QueueState(lam.copy(), 0, 0.5 * float(lam @ lam), 0.0, np.zeros(1))
        before = _snap(r)
        new_alg_step(spec, r)
        assert r.x[0] == 1.0 and r.queue.Q[0] == 2.0
        res = dpp_bound_check(spec, before, r, ref.x_star)
        assert np.isfinite(res.lhs) and np.isfinite(res.rhs)
        assert res.holds and res.slack >= 0

    def test_random_starts(self, qp1):
        spec, ref = qp1
        rng = np.random.default_rng(0)
        bad = 0
        for _ in range(10_000):
            x0 = rng.uniform(-10, 10)
            alpha = 1.5 + rng.exponential(2.0)
            r = init_run(spec, "new-constant", SolverConfig(alpha=alpha, x_start=[x0]))
            for _ in range(2):
                before = _snap(r)
                new_alg_step(spec, r)
                res = dpp_bound_check(spec, before, r, ref.x_star)
                bad += (not res.holds) + (not res.holds_simplified)
        assert bad == 0

    def test_nonlinear_adaptive(self):
        spec, ref = gen_ball1(n=2, seed=4)
        r = run(spec, "new-adaptive", SolverConfig(max_iters=500, diagnostics=True), reference=ref)
        assert r.diagnostics.checks["dpp_bound"].violations == 0
        assert "dpp_bound_linear" not in r.diagnostics.checks


class TestDiagnostics:
    def test_qp1_report_clean(self, qp1):
        spec, ref = qp1
        r = run(spec, "new-constant", SolverConfig(max_iters=2000, alpha=2.0, diagnostics=True), reference=ref)
        rep = r.diagnostics.report()
        assert rep["total_violations"] == 0
        names = {c["name"] for c in rep["checks"]}
        assert {"objective_bound_const", "violation_bound_const", "cumulative_objective_lower",
                "drift_bound", "queue_ge_cumulative_G"} <= names

    def test_ball1_adaptive_checks(self, ball1):
        spec, ref = ball1
        r = run(spec, "new-adaptive", SolverConfig(max_iters=2000, diagnostics=True), reference=ref)
        d = r.diagnostics
        assert d.total_violations == 0
        assert d.alpha_max == pytest.approx(26.7665, abs=1e-3)
        for name in ("alpha_le_alpha_max", "alpha_nondecreasing", "queue_norm_bound", "violation_bound_adaptive"):
            assert d.checks[name].trials > 0

    def test_detects_wrong_reference(self, qp1):
        spec, ref = qp1
        wrong = type(ref)(np.array([1.0]), np.array([2.0]), 0.5, "analytic", 0.0)
        r = run(spec, "new-constant", SolverConfig(max_iters=50, alpha=2.0, diagnostics=True), reference=wrong)
        assert r.diagnostics.checks["objective_bound_const"].violations > 0

    def test_equality_rows_exempt(self):
        spec = gen_gmv_l2(6, 0, equality=True)
        r = run(spec, "new-adaptive", SolverConfig(max_iters=300, diagnostics=True))
        d = r.diagnostics
        assert d.total_violations == 0
        # the signed row went negative at some point but was not checked
        assert "queue_nonnegative" in d.checks

    def test_without_reference_skips_bounds(self, ball1):
        spec, _ = ball1
        r = run(spec, "new-adaptive", SolverConfig(max_iters=100, diagnostics=True))
        assert "dpp_bound" not in r.diagnostics.checks
        assert r.diagnostics.alpha_max is None

    def test_low_confidence_lambda_disables_multiplier_checks(self, ball1):
        spec, ref = ball1
        ref.lambda_confident = False
        r = run(spec, "new-adaptive", SolverConfig(max_iters=100, diagnostics=True), reference=ref)
        assert "alpha_le_alpha_max" not in r.diagnostics.checks
        assert "cumulative_objective_lower" not in r.diagnostics.checks

    def test_pd_multiplier_range(self, qp1):
        spec, ref = qp1
        r = run(spec, "pd-subgradient", SolverConfig(max_iters=200, pd_step=0.05, diagnostics=True), reference=ref)
        assert r.diagnostics.checks["multiplier_in_range"].violations == 0
