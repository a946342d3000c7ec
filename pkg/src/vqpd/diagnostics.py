"""Per-iteration invariant and bound checks for solver runs.

Every check records a slack (``>= -tol`` means it holds). Checks that need
an optimal pair only run when a reference is supplied; those needing a
multiplier also require ``reference.lambda_confident``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .queue import TOL, drift_bound_check, invariant_slacks

# bounds on x_bar are evaluated at t >= 1 against these names
_QUEUE_ALGS = ("new-constant", "new-adaptive", "yu-neely")


@dataclass
class CheckStats:
    name: str
    trials: int = 0
    violations: int = 0
    worst_slack: float = math.inf
    first_violation_t: int | None = None

    def add(self, slack: float, t: int, tol: float = TOL) -> None:
        self.trials += 1
        if slack < self.worst_slack:
            self.worst_slack = slack
        if not slack >= -tol:
            self.violations += 1
            if self.first_violation_t is None:
                self.first_violation_t = t

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "violations": self.violations,
            "worst_slack": None if math.isinf(self.worst_slack) else self.worst_slack,
            "first_violation_t": self.first_violation_t,
        }


@dataclass(frozen=True)
class Snapshot:
    t: int
    x: np.ndarray
    G_prev: np.ndarray
    queue: object
    alpha: float


@dataclass(frozen=True)
class DPPResult:
    holds: bool
    slack: float
    lhs: float
    rhs: float
    holds_simplified: bool | None = None
    slack_simplified: float | None = None


def dpp_bound_check(spec, before: Snapshot, run, x_ref, tol: float = TOL) -> DPPResult:
    """Both sides of the drift-plus-penalty inequality for the step ``before -> run``.

    With ``w = Q(t) + G(x(t-1))`` and comparison point ``z = x_ref``::

        Delta(t) + F(x(t)) <= F(z) + w'G(z)
                              + alpha [||z - x(t-1)||^2 - ||z - x(t)||^2]
                              + 0.5 [||G(x(t))||^2 - ||G(x(t-1))||^2]
                              + [0.5 (beta^2 + L_f + w'L_g) - alpha] ||x(t) - x(t-1)||^2

    ``w'G(z)`` is nonpositive for feasible ``z`` and vanishes at a KKT pair,
    so keeping it makes the check exact for approximate references. When
    every ``g_k`` is linear and ``alpha > (beta^2 + L_f)/2`` the last term is
    also dropped (the simplified form) and checked separately.
    """
    z = np.asarray(x_ref, dtype=float)
    x_prev, x_t = before.x, run.x
    w = before.queue.Q + before.G_prev
    alpha = run.alpha.current
    drift = run.queue.lyapunov - before.queue.lyapunov
    lhs = drift + spec.F(x_t)
    Gz = spec.G(z)
    step2 = float(np.sum((x_t - x_prev) ** 2))
    base = (
        spec.F(z) + float(w @ Gz)
        + alpha * (float(np.sum((z - x_prev) ** 2)) - float(np.sum((z - x_t) ** 2)))
        + 0.5 * (float(run.G_prev @ run.G_prev) - float(before.G_prev @ before.G_prev))
    )
    coef = 0.5 * (spec.beta ** 2 + spec.L_f + float(w @ spec.L_g)) - alpha
    rhs = base + coef * step2
    slack = rhs - lhs
    scale = tol * max(1.0, abs(lhs), abs(rhs))
    out = DPPResult(slack >= -scale, slack, lhs, rhs)
    if spec.has_linear_g and alpha > 0.5 * (spec.beta ** 2 + spec.L_f):
        s2 = base - lhs
        out = DPPResult(out.holds, slack, lhs, rhs, s2 >= -scale, s2)
    return out


class Diagnostics:
    """Collects :class:`CheckStats` over one run (see :func:`vqpd.solvers.run`)."""

    def __init__(self, spec, run, reference=None, tol: float = TOL):
        self.spec = spec
        self.tol = tol
        self.algorithm = run.algorithm
        self.reference = reference
        self.checks: dict[str, CheckStats] = {}
        self.sum_F = 0.0
        self.x_start = run.x_start.copy()
        self.prev_alpha = None
        ineq = ~spec.equality_mask
        self.ineq = ineq
        self.has_eq = bool(spec.equality_mask.any())

        ref = reference
        self.x_star = None if ref is None else np.asarray(ref.x_star, dtype=float)
        self.F_star = None if ref is None else float(ref.F_star)
        self.ref_tol = 0.0 if ref is None else float(ref.tolerance)
        lam = None
        if ref is not None and ref.lambda_star is not None and getattr(ref, "lambda_confident", True):
            lam = float(np.linalg.norm(ref.lambda_star))
        self.lam_norm = lam
        self.alpha_max = None
        if lam is not None and spec.C is not None and spec.R is not None:
            from .solvers import compute_alpha_max

            self.alpha_max = compute_alpha_max(spec, lam)
            if run.alpha is not None and run.alpha.mode == "adaptive":
                run.alpha.alpha_max_diag = self.alpha_max

        if run.queue is not None:
            for name, s in invariant_slacks(run.queue, run.G_prev, spec.equality_mask).items():
                self._add(name, s, 0)

    # -- bookkeeping
    def _add(self, name: str, slack: float, t: int, tol: float | None = None) -> None:
        c = self.checks.get(name)
        if c is None:
            c = self.checks[name] = CheckStats(name)
        c.add(float(slack), t, self.tol if tol is None else tol)

    def snapshot(self, run) -> Snapshot:
        a = run.alpha.current if run.alpha is not None else math.nan
        return Snapshot(run.t, run.x.copy(), run.G_prev.copy(), run.queue, a)

    @property
    def total_violations(self) -> int:
        return sum(c.violations for c in self.checks.values())

    def report(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "alpha_max": self.alpha_max,
            "total_violations": self.total_violations,
            "checks": [c.to_dict() for c in self.checks.values()],
        }

    # -- per iteration
    def observe(self, run, before: Snapshot) -> None:
        spec = self.spec
        t = run.t
        box = spec.box
        self._add("x_in_box", float(min(np.min(run.x - box.lower), np.min(box.upper - run.x))), t)
        direct = run.x_sum / t
        self._add("running_average_matches_mean",
                  1e-10 * t - float(np.max(np.abs(run.x_bar - direct), initial=0.0)), t, 0.0)
        self.sum_F += spec.F(run.x)

        if run.multipliers is not None:
            lam = run.multipliers
            low = np.where(spec.equality_mask, -run.lambda_max, 0.0)
            self._add("multiplier_in_range", float(min(np.min(lam - low), np.min(run.lambda_max - lam))), t)
            return
        if self.algorithm not in _QUEUE_ALGS:
            return

        d = drift_bound_check(before.queue, run.G_prev, spec.equality_mask)
        self._add("drift_bound", d.slack, t)
        for name, s in invariant_slacks(run.queue, run.G_prev, spec.equality_mask).items():
            self._add(name, s, t)

        alpha = run.alpha.current
        w = before.queue.Q + before.G_prev
        if run.alpha.mode == "adaptive":
            need = run.alpha.required(w)
            self._add("alpha_ge_required", alpha - need, t)
            if self.prev_alpha is not None:
                self._add("alpha_nondecreasing", alpha - self.prev_alpha, t)
            if self.alpha_max is not None:
                self._add("alpha_le_alpha_max", self.alpha_max - alpha, t,
                          self.tol * max(1.0, self.alpha_max))
        elif self.algorithm == "new-constant":
            self._add("alpha_constant_above_floor",
                      alpha - 0.5 * (spec.beta ** 2 + spec.L_f), t, 0.0)
        self.prev_alpha = alpha

        if self.x_star is None or self.algorithm == "yu-neely":
            return
        res = dpp_bound_check(spec, before, run, self.x_star, self.tol)
        self._add("dpp_bound", res.slack, t, self.tol * max(1.0, abs(res.lhs), abs(res.rhs)))
        if res.slack_simplified is not None:
            self._add("dpp_bound_linear", res.slack_simplified, t,
                      self.tol * max(1.0, abs(res.lhs), abs(res.rhs)))
        if self.has_eq:
            return
        self._bound_checks(run, t)

    def _bound_checks(self, run, t: int) -> None:
        spec = self.spec
        Fstar = self.F_star
        ftol = self.tol + self.ref_tol
        Qn = run.queue.norm
        if self.lam_norm is not None:
            # sum_{tau < t} F(x(tau)) >= t F* - |lam*| |Q(t)|
            self._add("cumulative_objective_lower", self.sum_F - (t * Fstar - self.lam_norm * Qn), t,
                      self.tol * max(1.0, abs(self.sum_F)) + t * self.ref_tol)

        Fbar = spec.F(run.x_bar)
        Gbar = spec.G(run.x_bar)
        vmax = float(np.max(Gbar)) if Gbar.size else 0.0
        alpha = run.alpha.current
        if self.algorithm == "new-constant" and spec.has_linear_g:
            dist0 = float(np.linalg.norm(self.x_star - self.x_start))
            self._add("objective_bound_const", Fstar + alpha * dist0 ** 2 / t - Fbar, t, ftol)
            if self.lam_norm is not None:
                gap = alpha - 0.5 * (spec.beta ** 2 + spec.L_f)
                Gs = float(np.linalg.norm(spec.G(self.x_star)))
                tail = math.sqrt(alpha / gap) * Gs if gap > 0 else (0.0 if Gs == 0 else math.inf)
                bound = (2.0 * self.lam_norm + math.sqrt(2.0 * alpha) * dist0 + tail) / t
                self._add("violation_bound_const", bound - vmax, t)
        elif self.algorithm == "new-adaptive" and self.alpha_max is not None:
            amax, R, C = self.alpha_max, spec.R, spec.C
            self._add("objective_bound_adaptive", Fstar + amax * R * R / t - Fbar, t, ftol)
            bound = (2.0 * self.lam_norm + R * math.sqrt(2.0 * amax) + C) / t
            self._add("violation_bound_adaptive", bound - vmax, t)
            self._add("queue_norm_bound",
                      2.0 * self.lam_norm + R * math.sqrt(2.0 * alpha) + C - Qn, t)
