"""Reference optimal pairs ``(x*, lam*, F*)`` for bound checks and tests.

Three sources: closed-form KKT pairs (from the instance generators),
exhaustive grid search for ``n <= 3`` and a long adaptive-alpha run for
anything larger. References persist in a JSON cache keyed by the sha256 of
the instance descriptor.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import nnls

log = logging.getLogger(__name__)

METHODS = ("analytic", "grid", "long-run")
#: a multiplier fit with a larger stationarity residual is not trusted
RESIDUAL_LIMIT = 1e-3
GRID_POINT_LIMIT = 50_000_000
LONG_RUN_MIN = 100_000


class InfeasibleGridError(ValueError):
    """No grid point passed the feasibility filter."""


class MissingReferenceError(LookupError):
    """No reference is known or cached for an instance."""


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    lambda_star: np.ndarray | None
    F_star: float
    method: str
    tolerance: float
    lambda_confident: bool = True
    residual: float = 0.0

    @classmethod
    def build(cls, spec, x_star, lambda_star, method: str, tolerance: float,
              confident: bool = True, residual: float = 0.0) -> "ReferenceSolution":
        if method not in METHODS:
            raise ValueError(f"unknown reference method {method!r}")
        x = np.asarray(x_star, dtype=float).copy()
        lam = None if lambda_star is None else np.asarray(lambda_star, dtype=float).copy()
        return cls(x, lam, spec.F(x), method, float(tolerance), bool(confident), float(residual))

    def invariant_slacks(self, spec) -> dict[str, float]:
        """Feasibility, box membership and (analytic only) complementary slackness."""
        x = self.x_star
        Gx = spec.G(x)
        tol = max(self.tolerance, 1e-12)
        v = np.where(spec.equality_mask, np.abs(Gx), Gx)
        out = {
            "in_box": float(min(np.min(x - spec.box.lower), np.min(spec.box.upper - x))) + tol,
            "feasible": tol - float(np.max(v, initial=0.0)),
            "F_matches": tol - abs(spec.F(x) - self.F_star),
        }
        if self.lambda_star is not None:
            ineq = ~spec.equality_mask
            out["lambda_nonnegative"] = float(np.min(self.lambda_star[ineq], initial=0.0))
            if self.method == "analytic":
                out["complementary_slackness"] = tol - float(np.max(np.abs(self.lambda_star * Gx), initial=0.0))
        return out

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star.tolist(),
            "lambda_star": None if self.lambda_star is None else self.lambda_star.tolist(),
            "F_star": self.F_star,
            "method": self.method,
            "tolerance": self.tolerance,
            "lambda_confident": self.lambda_confident,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceSolution":
        lam = d.get("lambda_star")
        return cls(
            np.asarray(d["x_star"], dtype=float),
            None if lam is None else np.asarray(lam, dtype=float),
            float(d["F_star"]), d["method"], float(d["tolerance"]),
            bool(d.get("lambda_confident", True)), float(d.get("residual", 0.0)),
        )


# ---------------------------------------------------------------------------
# multipliers from stationarity


class DualEstimate(NamedTuple):
    lambda_star: np.ndarray
    residual: float
    confident: bool
    active: np.ndarray


def _constraint_gradient(spec, k: int, x: np.ndarray) -> np.ndarray:
    return np.asarray(spec.g[k].gradient(x), dtype=float) + spec.g_tilde[k].subgradient(x)


def dual_estimate(spec, x_star, active_tol: float = 1e-6) -> DualEstimate:
    """Fit ``lam >= 0`` on the active rows to the stationarity condition at ``x_star``.

    Coordinates at a box bound or at a kink of an l1 term are left out (their
    stationarity holds with a set-valued term), then
    ``min ||grad F + J' lam||`` is solved by nonnegative least squares.
    Equality rows enter with a free sign.
    """
    x = np.asarray(x_star, dtype=float)
    n, m = spec.n, spec.m
    Gx = spec.G(x)
    active = spec.equality_mask | (Gx >= -active_tol)
    lam = np.zeros(m)

    free = (x > spec.box.lower) & (x < spec.box.upper)
    kinked = spec.f_tilde.l1_weights(n) > 0
    for k in spec._tilde_idx:
        kinked = kinked | (spec.g_tilde[k].l1_weights(n) > 0)
    free &= ~(kinked & (x == 0.0))

    grad_F = np.asarray(spec.f.gradient(x), dtype=float) + spec.f_tilde.subgradient(x)
    b = grad_F[free]
    idx = np.flatnonzero(active)
    if idx.size == 0 or b.size == 0:
        res = float(np.linalg.norm(b))
        return DualEstimate(lam, res, res <= RESIDUAL_LIMIT, active)
    J = np.column_stack([_constraint_gradient(spec, k, x)[free] for k in idx])
    eq = spec.equality_mask[idx]
    A = np.hstack([J, -J[:, eq]])
    sol, res = nnls(A, -b)
    coef = sol[: idx.size].copy()
    coef[eq] -= sol[idx.size:]
    lam[idx] = coef
    return DualEstimate(lam, float(res), float(res) <= RESIDUAL_LIMIT, active)


# ---------------------------------------------------------------------------
# grid search


def _batch_F(spec, X):
    return spec.f.value_batch(X) + spec.f_tilde.value_batch(X)


def _batch_G(spec, X):
    cols = [spec.g[k].value_batch(X) + spec.g_tilde[k].value_batch(X) for k in range(spec.m)]
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


def grid_solve(spec, resolution: float, batch: int = 1 << 20) -> ReferenceSolution:
    """Exhaustive scan of the box on a uniform grid of spacing ``resolution``.

    A point counts as feasible when ``G_k <= resolution * beta`` (``|G_k|`` on
    equality rows). Ties go to the lexicographically smallest grid index.
    Raises :class:`InfeasibleGridError` naming the least-violating point when
    nothing passes.
    """
    n = spec.n
    if n > 3:
        raise ValueError("grid_solve is limited to n <= 3")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if not spec.box.is_finite:
        raise ValueError("grid_solve needs a finite box")
    lo, hi = spec.box.lower, spec.box.upper
    counts = [int(math.floor((hi[i] - lo[i]) / resolution + 1e-9)) + 1 for i in range(n)]
    axes = [lo[i] + resolution * np.arange(counts[i]) for i in range(n)]
    total = int(np.prod(counts))
    if total > GRID_POINT_LIMIT:
        raise ValueError(f"grid has {total} points; use a coarser resolution")
    slack = resolution * spec.beta

    best_F, best_x = math.inf, None
    near_v, near_x = math.inf, None
    for start in range(0, total, batch):
        flat = np.arange(start, min(total, start + batch))
        idx = np.unravel_index(flat, counts)
        X = np.column_stack([axes[i][idx[i]] for i in range(n)])
        G = _batch_G(spec, X)
        V = np.where(spec.equality_mask, np.abs(G), G)
        vmax = V.max(axis=1) if spec.m else np.full(X.shape[0], -math.inf)
        j = int(np.argmin(vmax))
        if vmax[j] < near_v:
            near_v, near_x = float(vmax[j]), X[j]
        ok = vmax <= slack
        if not ok.any():
            continue
        F = np.where(ok, _batch_F(spec, X), math.inf)
        j = int(np.argmin(F))
        if F[j] < best_F:
            best_F, best_x = float(F[j]), X[j].copy()
    if best_x is None:
        raise InfeasibleGridError(
            f"no grid point is feasible within {slack:g}; nearest is x={near_x.tolist()} "
            f"with violation {near_v:g}"
        )
    grad = np.asarray(spec.f.gradient(best_x), dtype=float)
    lip = float(np.linalg.norm(grad)) + spec.L_f * resolution * math.sqrt(n) + spec.f_tilde.lipschitz(n)
    de = dual_estimate(spec, best_x, active_tol=max(slack, 1e-9) + resolution * spec.beta)
    # spacing error above F*, plus the drop below F* bought by the relaxed rows
    tol = resolution * math.sqrt(n) * lip + float(np.abs(de.lambda_star).sum()) * slack
    return ReferenceSolution.build(spec, best_x, de.lambda_star, "grid", tol, de.confident, de.residual)


# ---------------------------------------------------------------------------
# long runs


def long_run_reference(spec, iterations: int = LONG_RUN_MIN, x_start=None) -> ReferenceSolution:
    """Reference from a long adaptive-alpha run.

    ``x*`` is the final running average; ``lam*`` is the final multiplier
    estimate ``Q(T) + G(x(T-1))``, which solves the stationarity condition of
    the x-update at a fixed point. Its residual is measured at the last
    iterate (the average trails it by ``O(1/T)``) and ``lam*`` is trusted only
    when that residual is small. The tolerance is ``alpha(T) R^2 / T``.
    """
    from .solvers import SolverConfig, run

    if iterations < LONG_RUN_MIN:
        raise ValueError(f"long_run_reference needs at least {LONG_RUN_MIN} iterations")
    cfg = SolverConfig(max_iters=int(iterations), stride=int(iterations), x_start=x_start)
    r = run(spec, "new-adaptive", cfg)
    lam = r.queue.Q + r.G_prev
    lam = np.where(spec.equality_mask, lam, np.maximum(lam, 0.0))
    res = _stationarity_residual(spec, r.x, lam)
    R = spec.R if spec.R is not None else float(np.linalg.norm(r.x_bar - r.x_start))
    tol = r.alpha.current * R * R / iterations
    return ReferenceSolution.build(spec, r.x_bar, lam, "long-run", tol, res <= RESIDUAL_LIMIT, res)


def _stationarity_residual(spec, x, lam) -> float:
    free = (x > spec.box.lower) & (x < spec.box.upper)
    g = np.asarray(spec.f.gradient(x), dtype=float) + spec.f_tilde.subgradient(x)
    for k in range(spec.m):
        g = g + lam[k] * _constraint_gradient(spec, k, x)
    return float(np.linalg.norm(g[free]))


# ---------------------------------------------------------------------------
# cache


def default_cache_path() -> Path:
    base = os.environ.get("VQPD_CACHE_DIR")
    root = Path(base) if base else Path.home() / ".cache" / "vqpd"
    return root / "references.json"


class ReferenceCache:
    """JSON file mapping descriptor digests to reference solutions."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else default_cache_path()

    def _load(self) -> dict:
        try:
            return json.loads(self.path.read_text())
        except FileNotFoundError:
            return {}
        except (OSError, ValueError) as exc:
            log.warning("ignoring unreadable reference cache %s: %s", self.path, exc)
            return {}

    def get(self, descriptor) -> ReferenceSolution | None:
        entry = self._load().get(descriptor.digest())
        return None if entry is None else ReferenceSolution.from_dict(entry["reference"])

    def put(self, descriptor, ref: ReferenceSolution) -> None:
        data = self._load()
        data[descriptor.digest()] = {"descriptor": descriptor.to_dict(), "reference": ref.to_dict()}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(data, indent=1, sort_keys=True))
        tmp.replace(self.path)


def reference_for(descriptor, spec=None, analytic=None, cache: ReferenceCache | None = None,
                  compute: bool = False, iterations: int = LONG_RUN_MIN, grid_resolution: float = 1e-3):
    """Look up (or with ``compute=True`` produce and cache) a reference.

    Order: the generator's analytic pair, the cache, then a grid solve for
    ``n <= 2`` or a long run.
    """
    if analytic is not None:
        return analytic
    cache = cache or ReferenceCache()
    ref = cache.get(descriptor)
    if ref is not None or not compute:
        if ref is None:
            raise MissingReferenceError(f"no reference for {descriptor}")
        return ref
    if spec is None:
        spec, _ = descriptor.build()
    if spec.n <= 2 and spec.box.is_finite:
        ref = grid_solve(spec, grid_resolution)
    else:
        ref = long_run_reference(spec, iterations)
    cache.put(descriptor, ref)
    return ref
