"""Per-coordinate update kernels.

The x-update of the virtual-queue method splits into ``n`` independent
scalar problems::

    min_{lo <= x <= hi}  alpha (x - x_prev)^2 + d x + e |x|

solved in closed form by soft thresholding followed by a clamp. The vector
kernel comes from the compiled extension when it is importable and from a
numpy mirror otherwise; set ``VQPD_KERNELS=python`` to force the fallback.
"""

from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

__all__ = [
    "CoordinateSubproblem",
    "NonConvexError",
    "available_backends",
    "get_backend",
    "set_backend",
    "use_backend",
    "soft_threshold_box",
    "solve_l1_scalar",
    "solve_scalar_generic",
    "smooth_step",
]

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _initial_backend() -> str:
    want = os.environ.get("VQPD_KERNELS", "auto").lower()
    if want in ("", "auto"):
        return "cython" if "cython" in _BACKENDS else "python"
    if want not in _BACKENDS:
        raise ImportError(f"VQPD_KERNELS={want!r} is not available; have {available_backends()}")
    return want


_active = _initial_backend()


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    _active = name


@contextlib.contextmanager
def use_backend(name: str):
    prev = get_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


class NonConvexError(ValueError):
    """The subgradient selector was not monotone across the bracket."""


@dataclass(frozen=True)
class CoordinateSubproblem:
    alpha: float
    x_prev: float
    d: float
    e: float = 0.0
    lo: float = -np.inf
    hi: float = np.inf

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.e < 0:
            raise ValueError("l1 coefficient e must be nonnegative")
        if self.lo > self.hi:
            raise ValueError("empty interval")

    def objective(self, x):
        return self.alpha * (x - self.x_prev) ** 2 + self.d * x + self.e * np.abs(x)


def solve_l1_scalar(sub: CoordinateSubproblem) -> float:
    """Closed-form minimizer of one coordinate subproblem.

    Ties at ``|x_prev - d/2a| == e/2a`` fall in the dead zone and return the
    clamp of 0.
    """
    return float(_BACKENDS[_active].l1_scalar(sub.alpha, sub.x_prev, sub.d, sub.e, sub.lo, sub.hi))


def _vec(a, n):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return np.full(n, float(a))
    return np.ascontiguousarray(a)


def soft_threshold_box(x_prev, d, e, lo, hi, alpha, out=None, num_threads=1):
    """Vector form of :func:`solve_l1_scalar` over all coordinates at once.

    ``e``, ``lo`` and ``hi`` may be scalars. Results do not depend on the
    backend or on ``num_threads``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x_prev = np.ascontiguousarray(x_prev, dtype=float)
    n = x_prev.shape[0]
    e = _vec(e, n)
    if n and e.min() < 0:
        raise ValueError("l1 coefficients must be nonnegative")
    return _BACKENDS[_active].soft_threshold_box(
        x_prev, np.ascontiguousarray(d, dtype=float), e, _vec(lo, n), _vec(hi, n),
        float(alpha), out, num_threads,
    )


def solve_scalar_generic(alpha, x_prev, d, nonsmooth, lo=-np.inf, hi=np.inf,
                         tol=1e-10, max_iter=200) -> float:
    """Minimize ``alpha (x - x_prev)^2 + d x + h(x)`` on ``[lo, hi]`` by bisection.

    ``nonsmooth`` needs a ``subgrad`` selector (a :class:`ScalarFunction`).
    The derivative map ``2 alpha (x - x_prev) + d + h'(x)`` is strictly
    increasing for convex ``h``; its sign drives the bisection.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if lo > hi:
        raise ValueError("empty interval")
    if lo == hi:
        return float(lo)
    sel = nonsmooth.subgrad

    def slope(x):
        return 2.0 * alpha * (x - x_prev) + d + sel(x)

    s_lo = slope(lo) if np.isfinite(lo) else -np.inf
    s_hi = slope(hi) if np.isfinite(hi) else np.inf
    if s_lo > s_hi:
        raise NonConvexError("subgradient map decreases between the interval ends")
    if s_lo >= 0.0:
        return float(lo)
    if s_hi <= 0.0:
        return float(hi)

    # expand a bracket [a, b] with slope(a) < 0 < slope(b)
    c = min(max(x_prev - d / (2.0 * alpha), lo), hi)
    width = 1.0 + abs(c)
    a, b = c, c
    sa = sb = slope(c)
    for _ in range(2100):
        if sa < 0.0:
            break
        a = max(a - width, lo)
        sa = slope(a)
        width *= 2.0
    width = 1.0 + abs(c)
    for _ in range(2100):
        if sb > 0.0:
            break
        b = min(b + width, hi)
        sb = slope(b)
        width *= 2.0
    if sa == 0.0:
        return float(a)
    if sb == 0.0:
        return float(b)
    if not (sa < 0.0 < sb):
        raise NonConvexError("could not bracket a sign change of the subgradient map")

    for _ in range(max_iter):
        if b - a <= tol:
            break
        mid = 0.5 * (a + b)
        sm = slope(mid)
        if sm < sa or sm > sb:
            raise NonConvexError(f"subgradient map is not monotone near x={mid!r}")
        if sm == 0.0:
            return float(mid)
        if sm < 0.0:
            a, sa = mid, sm
        else:
            b, sb = mid, sm
    return float(0.5 * (a + b))


def smooth_step(spec, x_prev, multipliers, alpha) -> np.ndarray:
    """Projected-gradient form of the x-update for smooth programs.

    ``x = P_X[x_prev - d / (2 alpha)]`` with
    ``d = grad f(x_prev) + sum_k multipliers_k grad g_k(x_prev)``.
    """
    from ..problem import project_box

    if not spec.is_smooth:
        raise ValueError("smooth_step needs f~ = 0 and g~ = 0")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    w = np.asarray(multipliers, dtype=float)
    if w.shape != (spec.m,):
        raise ValueError("one multiplier per constraint is required")
    if np.any(w[~spec.equality_mask] < 0):
        raise ValueError("multipliers Q_k + G_k must be nonnegative on inequality rows")
    x_prev = np.asarray(x_prev, dtype=float)
    d = np.array(spec.f.gradient(x_prev), dtype=float)
    for k in range(spec.m):
        d = d + w[k] * spec.g[k].gradient(x_prev)
    return project_box(spec.box, x_prev - d / (2.0 * alpha))
