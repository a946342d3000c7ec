"""Iterative solvers sharing one run/trace representation.

``new-constant`` / ``new-adaptive``
    the virtual-queue primal-dual method whose x-update linearizes ``f`` and
    ``g`` and therefore splits into closed-form coordinate updates;
``yu-neely``
    the same queues with an exact proximal x-update, solved here by an inner
    accelerated proximal-gradient loop;
``pd-subgradient``
    the projected primal-dual subgradient method with multiplier clipping.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import kernels
from .problem import ProblemSpec, ScalarFunction, project_box
from .queue import QueueState, init_queue, update_queue

log = logging.getLogger(__name__)

ALGORITHMS = ("new-constant", "new-adaptive", "yu-neely", "pd-subgradient")

#: inflation of the smallest admissible constant alpha (the rule is strict)
ALPHA_SAFETY = 1e-3


class NumericalError(FloatingPointError):
    """An oracle or an update produced a non-finite value."""


# ---------------------------------------------------------------------------
# step-parameter rules


def alpha_floor(spec: ProblemSpec) -> float:
    """``(beta^2 + L_f) / 2``, the constant rule's strict lower limit."""
    return 0.5 * (spec.beta ** 2 + spec.L_f)


def compute_alpha_max(spec: ProblemSpec, lambda_norm: float) -> float:
    """Upper bound on every adaptive ``alpha(t)``.

    ``[sqrt(b^2/2 + L_f/2 + |lam*| |L_g| + C |L_g|) + R |L_g| / sqrt(2)]^2``;
    collapses to ``(b^2 + L_f) / 2`` when every ``g_k`` is linear.
    """
    lg = float(np.linalg.norm(spec.L_g))
    base = alpha_floor(spec)
    if lg == 0.0:
        return base
    if spec.C is None or spec.R is None:
        raise ValueError("alpha_max needs the bounds C and R on the problem")
    if lambda_norm is None or lambda_norm < 0:
        raise ValueError("alpha_max needs a reference multiplier norm")
    root = math.sqrt(base + lambda_norm * lg + spec.C * lg)
    return (root + math.sqrt(2.0) / 2.0 * spec.R * lg) ** 2


@dataclass
class AlphaRule:
    mode: str
    current: float
    alpha_const: float | None = None
    alpha_max_diag: float | None = None
    floor: float = 0.0
    L_g: np.ndarray | None = None

    @classmethod
    def constant(cls, spec: ProblemSpec, alpha: float | None = None, strict: bool = True):
        floor = alpha_floor(spec)
        if alpha is None:
            alpha = floor * (1.0 + ALPHA_SAFETY)
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        if strict and not alpha > floor:
            raise ValueError(f"constant alpha={alpha} must exceed (beta^2 + L_f)/2 = {floor}")
        return cls("constant", float(alpha), float(alpha), None, floor, spec.L_g)

    @classmethod
    def adaptive(cls, spec: ProblemSpec, alpha_max: float | None = None):
        return cls("adaptive", math.nan, None, alpha_max, alpha_floor(spec), spec.L_g)

    def required(self, weights: np.ndarray) -> float:
        """``(beta^2 + L_f + weights'L_g) / 2``."""
        return self.floor + 0.5 * float(weights @ self.L_g)

    def update(self, weights: np.ndarray) -> float:
        if self.mode == "adaptive":
            need = self.required(weights)
            self.current = need if math.isnan(self.current) else max(self.current, need)
        return self.current


# ---------------------------------------------------------------------------
# configuration, records, run state


@dataclass
class InnerSolverConfig:
    tol: float = 1e-9
    max_iter: int = 5000


@dataclass
class SolverConfig:
    max_iters: int = 1000
    stride: int = 1
    alpha: float | None = None
    x_start: list | None = None
    diagnostics: bool = False
    record_time: bool = False
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    pd_step: float | None = None
    lambda_max: float | list | None = None
    lambda_start: list | None = None
    target_gap: float | None = None
    target_violation: float | None = None
    num_threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        inner = d.pop("inner", None)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        cfg = cls(**d)
        if inner is not None:
            cfg.inner = InnerSolverConfig(**inner)
        return cfg


TRACE_COLUMNS = ("t", "F_x", "F_xbar", "max_violation_xbar", "queue_norm", "alpha_t", "drift", "wall_time_ns")


@dataclass
class IterationRecord:
    t: int
    F_of_x: float
    F_of_xbar: float
    max_violation_of_xbar: float
    queue_norm: float
    alpha_t: float
    drift: float
    wall_time_ns: int

    def as_row(self) -> tuple:
        return (
            self.t, self.F_of_x, self.F_of_xbar, self.max_violation_of_xbar,
            self.queue_norm, self.alpha_t, self.drift, self.wall_time_ns,
        )


@dataclass
class SolverRun:
    """Mutable state of one solver run; ``t`` counts completed iterations.

    After ``t`` iterations ``x`` is the latest iterate ``x(t-1)``, ``x_bar``
    the mean of ``x(0..t-1)`` and ``G_prev`` is ``G(x)``.
    """

    algorithm: str
    x: np.ndarray
    x_bar: np.ndarray
    x_start: np.ndarray
    G_prev: np.ndarray
    queue: QueueState | None = None
    alpha: AlphaRule | None = None
    multipliers: np.ndarray | None = None
    lambda_max: np.ndarray | None = None
    step: float | None = None
    dual_drift: float = 0.0
    t: int = 0
    status: str = "running"
    trace: list = field(default_factory=list)
    x_sum: np.ndarray | None = None
    iter_ns: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    inner_warnings: int = 0
    diagnostics: object = None

    @property
    def queue_norm(self) -> float:
        if self.queue is not None:
            return self.queue.norm
        return float(np.linalg.norm(self.multipliers))

    @property
    def mean_iter_ns(self) -> float:
        return float(np.mean(self.iter_ns)) if self.iter_ns else 0.0


def _check_finite(what: str, v) -> None:
    if not np.isfinite(v).all():
        raise NumericalError(f"non-finite {what}")


def init_run(spec: ProblemSpec, algorithm: str, config: SolverConfig, reference=None) -> SolverRun:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    x0 = np.zeros(spec.n) if config.x_start is None else np.asarray(config.x_start, dtype=float)
    x0 = project_box(spec.box, x0)
    G0 = spec.G(x0)
    _check_finite("G at the start point", G0)
    r = SolverRun(algorithm, x0.copy(), x0.copy(), x0.copy(), G0, x_sum=np.zeros(spec.n))
    if algorithm == "pd-subgradient":
        m = spec.m
        lam0 = np.zeros(m) if config.lambda_start is None else np.asarray(config.lambda_start, dtype=float)
        r.multipliers = lam0.copy()
        r.lambda_max = _lambda_max(spec, config, reference)
        r.step = config.pd_step
        if r.step is None or not r.step > 0:
            raise ValueError("pd-subgradient needs a positive step size")
        return r
    r.queue = init_queue(G0, spec.equality_mask)
    if algorithm == "new-adaptive":
        r.alpha = AlphaRule.adaptive(spec)
    else:
        r.alpha = AlphaRule.constant(spec, config.alpha, strict=algorithm == "new-constant")
    return r


def _lambda_max(spec, config, reference) -> np.ndarray:
    if config.lambda_max is not None:
        lm = np.broadcast_to(np.asarray(config.lambda_max, dtype=float), (spec.m,)).copy()
    elif reference is not None and getattr(reference, "lambda_star", None) is not None:
        lm = np.full(spec.m, 10.0 * (float(np.linalg.norm(reference.lambda_star)) + 1.0))
    else:
        raise ValueError("pd-subgradient needs lambda_max (no reference multiplier available)")
    if np.any(lm <= 0):
        raise ValueError("lambda_max must be positive")
    return lm


def _finish(spec: ProblemSpec, r: SolverRun, x_new: np.ndarray) -> None:
    _check_finite("iterate", x_new)
    G_new = spec.G(x_new)
    _check_finite("constraint value", G_new)
    if r.queue is not None:
        r.queue = update_queue(r.queue, G_new, spec.equality_mask)
    t = r.t
    r.x_bar = r.x_bar * (t / (t + 1)) + x_new * (1.0 / (t + 1))
    r.x_sum += x_new
    r.x = x_new
    r.G_prev = G_new
    r.t = t + 1


# ---------------------------------------------------------------------------
# x-updates


def _combined_scalar(spec: ProblemSpec, i: int, e_i: float, w: np.ndarray) -> ScalarFunction:
    parts = []
    if spec.f_tilde.kind == "custom":
        parts.append((1.0, spec.f_tilde.func(i)))
    for k, term in enumerate(spec.g_tilde):
        if term.kind == "custom" and w[k] != 0.0:
            parts.append((float(w[k]), term.func(i)))

    def value(x):
        return e_i * abs(x) + sum(c * h.value(x) for c, h in parts)

    def subgrad(x):
        s = e_i * (1.0 if x > 0 else -1.0 if x < 0 else 0.0)
        return s + sum(c * h.subgrad(x) for c, h in parts)

    return ScalarFunction(value, subgrad)


def coordinate_update(spec: ProblemSpec, x_prev, d, w, alpha, num_threads: int = 1) -> np.ndarray:
    """Solve ``min_X d'x + sum of weighted separable terms + alpha ||x - x_prev||^2``."""
    lo, hi = spec.box.lower, spec.box.upper
    if spec.nonsmooth_kind == "custom":
        e = spec.weighted_l1(w)
        return np.array([
            kernels.solve_scalar_generic(alpha, x_prev[i], d[i], _combined_scalar(spec, i, e[i], w), lo[i], hi[i])
            for i in range(spec.n)
        ])
    e = spec.weighted_l1(w) if spec.nonsmooth_kind == "l1" else 0.0
    return kernels.soft_threshold_box(x_prev, d, e, lo, hi, alpha, num_threads=num_threads)


def new_alg_step(spec: ProblemSpec, r: SolverRun, num_threads: int = 1) -> SolverRun:
    """One iteration of the virtual-queue method with the linearized x-update."""
    w = r.queue.Q + r.G_prev
    alpha = r.alpha.update(w)
    d = spec.weighted_gradient(r.x, w)
    _check_finite("gradient", d)
    x_new = coordinate_update(spec, r.x, d, w, alpha, num_threads)
    _finish(spec, r, x_new)
    return r


def solve_proximal_subproblem(spec: ProblemSpec, x_prev, w, alpha, inner: InnerSolverConfig):
    """Minimize ``F(x) + w'G(x) + alpha ||x - x_prev||^2`` over the box.

    Accelerated proximal gradient for strongly convex composites: the smooth
    part is linearized at the extrapolated point and each prox step is the
    coordinate kernel. Stops when the gradient-mapping norm drops below
    ``inner.tol``. Returns ``(x, iterations, converged)``.
    """
    if inner.max_iter <= 0:
        return np.array(x_prev, dtype=float), 0, False
    L = spec.L_f + float(np.maximum(w, 0.0) @ spec.L_g) + 2.0 * alpha
    mu = 2.0 * alpha
    q = (math.sqrt(L) - math.sqrt(mu)) / (math.sqrt(L) + math.sqrt(mu))
    x = np.array(x_prev, dtype=float)
    y = x
    for k in range(1, inner.max_iter + 1):
        grad = spec.weighted_gradient(y, w) + (2.0 * alpha) * (y - x_prev)
        x_new = coordinate_update(spec, y, grad, w, 0.5 * L)
        gm = L * float(np.linalg.norm(x_new - y))
        y = x_new + q * (x_new - x)
        x = x_new
        if gm <= inner.tol:
            return x, k, True
    return x, inner.max_iter, False


def yu_neely_step(spec: ProblemSpec, r: SolverRun, inner: InnerSolverConfig | None = None) -> SolverRun:
    """One iteration of the baseline with an exactly solved proximal x-update."""
    inner = inner or InnerSolverConfig()
    w = r.queue.Q + r.G_prev
    alpha = r.alpha.update(w)
    x_new, iters, ok = solve_proximal_subproblem(spec, r.x, w, alpha, inner)
    r.inner_iters.append(iters)
    if not ok:
        r.inner_warnings += 1
        log.warning("inner solver stopped at t=%d after %d iterations without reaching tol=%g",
                    r.t, iters, inner.tol)
    _finish(spec, r, x_new)
    return r


def pd_subgradient_step(spec: ProblemSpec, r: SolverRun, c: float | None = None,
                        lambda_max=None) -> SolverRun:
    """Projected primal-dual subgradient step with multipliers clipped to ``[0, lambda_max]``."""
    c = r.step if c is None else c
    lam_max = r.lambda_max if lambda_max is None else np.asarray(lambda_max, dtype=float)
    lam = r.multipliers
    x = r.x
    grad = spec.weighted_gradient(x, lam) + spec.f_tilde.subgradient(x)
    for k in spec._tilde_idx:
        grad += lam[k] * spec.g_tilde[k].subgradient(x)
    _check_finite("subgradient", grad)
    x_new = project_box(spec.box, x - c * grad)
    low = np.where(spec.equality_mask, -lam_max, 0.0)
    lam_new = np.clip(lam + c * r.G_prev, low, lam_max)
    r.dual_drift = 0.5 * float(lam_new @ lam_new) - 0.5 * float(lam @ lam)
    r.multipliers = lam_new
    _finish(spec, r, x_new)
    return r


# ---------------------------------------------------------------------------
# driver


def _record(spec: ProblemSpec, r: SolverRun, record_time: bool) -> IterationRecord:
    Fx = spec.F(r.x)
    Gbar = spec.G(r.x_bar)
    if r.queue is not None:
        alpha_t = r.alpha.current
        if math.isnan(alpha_t):
            alpha_t = r.alpha.required(r.queue.Q + r.G_prev)
        drift = r.queue.last_drift
    else:
        alpha_t = r.step
        drift = r.dual_drift
    rec = IterationRecord(
        r.t, Fx, spec.F(r.x_bar), spec.violation(Gbar), r.queue_norm, float(alpha_t),
        float(drift), int(sum(r.iter_ns)) if record_time else 0,
    )
    _check_finite("trace record", rec.as_row())
    return rec


def run(spec: ProblemSpec, algorithm: str, config: SolverConfig | None = None,
        reference=None, callback=None) -> SolverRun:
    """Run ``algorithm`` for ``config.max_iters`` iterations or until the target is met.

    The trace holds ``t = 0`` and every ``stride``-th iteration (plus the
    last one). With ``config.diagnostics`` every invariant check in
    :mod:`vqpd.diagnostics` runs each iteration; ``reference`` enables the
    checks that need an optimal pair. ``callback(run)`` is called after every
    iteration.
    """
    config = config or SolverConfig()
    if config.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if config.stride < 1:
        raise ValueError("stride must be >= 1")
    if algorithm == "pd-subgradient" and config.pd_step is None:
        config = _with(config, pd_step=tune_pd_step(spec, config, reference))

    r = init_run(spec, algorithm, config, reference)
    diag = None
    if config.diagnostics:
        from .diagnostics import Diagnostics

        diag = Diagnostics(spec, r, reference)
        r.diagnostics = diag

    if algorithm in ("new-constant", "new-adaptive"):
        def step():
            new_alg_step(spec, r, config.num_threads)
    elif algorithm == "yu-neely":
        def step():
            yu_neely_step(spec, r, config.inner)
    else:
        def step():
            pd_subgradient_step(spec, r)

    r.trace.append(_record(spec, r, config.record_time))
    want_target = config.target_gap is not None or config.target_violation is not None
    fbar_hist = [r.trace[0].F_of_xbar]
    clock = time.perf_counter_ns
    for _ in range(config.max_iters):
        snap = diag.snapshot(r) if diag else None
        t0 = clock()
        step()
        r.iter_ns.append(clock() - t0)
        if diag:
            diag.observe(r, snap)
        if callback is not None:
            callback(r)
        t = r.t
        met = False
        if want_target:
            fbar = spec.F(r.x_bar)
            fbar_hist.append(fbar)
            met = t >= 2 and _target_met(spec, r, config, fbar, fbar_hist[t // 2])
        if t % config.stride == 0 or t == config.max_iters or met:
            r.trace.append(_record(spec, r, config.record_time))
        if met:
            r.status = "target_gap_met"
            break
    else:
        r.status = "max_iters"
    return r


def _target_met(spec, r, config, fbar, fbar_half) -> bool:
    if config.target_gap is not None and abs(fbar - fbar_half) > config.target_gap:
        return False
    if config.target_violation is not None and spec.violation(spec.G(r.x_bar)) > config.target_violation:
        return False
    return True


def _with(config: SolverConfig, **changes) -> SolverConfig:
    d = config.to_dict()
    d.update(changes)
    return SolverConfig.from_dict(d)


PD_STEP_GRID = (1.0, 0.1, 0.01)


def tune_pd_step(spec: ProblemSpec, config: SolverConfig, reference=None, grid=PD_STEP_GRID) -> float:
    """Pick ``c`` from ``grid / sqrt(max_iters)`` by the final merit
    ``F(x_bar) + |lambda_max| * violation(x_bar)``."""
    best = None
    for g in grid:
        c = g / math.sqrt(config.max_iters)
        trial = _with(config, pd_step=c, diagnostics=False, target_gap=None, target_violation=None)
        try:
            r = run(spec, "pd-subgradient", trial, reference)
        except NumericalError:
            continue
        merit = spec.F(r.x_bar) + float(np.linalg.norm(r.lambda_max)) * spec.violation(spec.G(r.x_bar))
        if best is None or merit < best[0]:
            best = (merit, c)
    if best is None:
        raise NumericalError("every pd-subgradient step size diverged")
    log.info("pd-subgradient step tuned to c=%g", best[1])
    return best[1]
