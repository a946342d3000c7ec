"""Constrained composite convex programs.

A program is::

    min  F(x) = f(x) + f~(x)
    s.t. G_k(x) = g_k(x) + g~_k(x) <= 0,   k = 1..m
         x in X = [lower, upper]

with smooth ``f``, ``g_k`` and separable (possibly nonsmooth) ``f~``, ``g~_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BoxSet",
    "ScalarFunction",
    "SeparableTerm",
    "SmoothOracle",
    "FunctionOracle",
    "Linear",
    "QuadraticForm",
    "SquaredNorm",
    "LeastSquares",
    "ProblemSpec",
    "eval_G",
    "eval_F",
    "project_box",
    "lipschitz_estimate",
]


def _as_vector(x, n: int | None = None, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim == 0 and n is not None:
        v = np.full(n, float(v))
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    return v


# ---------------------------------------------------------------------------
# box set


@dataclass(frozen=True)
class BoxSet:
    """Coordinate box ``[lower_i, upper_i]``; infinite bounds are allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValueError("lower bound +inf or upper bound -inf is empty")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, n: int, lower: float, upper: float) -> "BoxSet":
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def project_box(box: BoxSet, x) -> np.ndarray:
    """Clamp ``x`` coordinate-wise onto ``box``."""
    x = _as_vector(x, box.n)
    # np.where (not np.clip) so that signed zeros match the compiled kernel
    x = np.where(x < box.lower, box.lower, x)
    return np.where(x > box.upper, box.upper, x)


# ---------------------------------------------------------------------------
# separable nonsmooth terms


def _default_selector(value: Callable[[float], float], delta: float = 1e-7):
    def subgrad(x: float) -> float:
        left = (value(x) - value(x - delta)) / delta
        right = (value(x + delta) - value(x)) / delta
        if left <= 0.0 <= right:
            return 0.0
        return 0.5 * (left + right)

    return subgrad


@dataclass(frozen=True)
class ScalarFunction:
    """A convex scalar function with a subgradient selector.

    When ``subgrad`` is omitted a finite-difference selector is used; it
    returns 0 whenever 0 lies between the one-sided slopes (kinks at minima).
    """

    value: Callable[[float], float]
    subgrad: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.subgrad is None:
            object.__setattr__(self, "subgrad", _default_selector(self.value))


class SeparableTerm:
    """Sum of per-coordinate scalar convex functions.

    Three kinds are supported: ``zero``, ``l1`` (``sum_i w_i |x_i|`` with
    ``w >= 0``, scalar or per-coordinate) and ``custom`` (one
    :class:`ScalarFunction` per coordinate, or one shared by all).
    """

    __slots__ = ("kind", "weight", "funcs")

    def __init__(self, kind: str = "zero", weight=0.0, funcs=None):
        if kind not in ("zero", "l1", "custom"):
            raise ValueError(f"unknown separable term kind {kind!r}")
        self.kind = kind
        self.weight = None
        self.funcs = None
        if kind == "l1":
            w = np.asarray(weight, dtype=float)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("l1 weight must be finite and nonnegative")
            self.weight = float(w) if w.ndim == 0 else w
        elif kind == "custom":
            if isinstance(funcs, ScalarFunction):
                funcs = [funcs]
            if not funcs:
                raise ValueError("custom term needs at least one ScalarFunction")
            self.funcs = list(funcs)

    @classmethod
    def zero(cls) -> "SeparableTerm":
        return cls("zero")

    @classmethod
    def l1(cls, weight=1.0) -> "SeparableTerm":
        return cls("l1", weight=weight)

    @classmethod
    def custom(cls, funcs) -> "SeparableTerm":
        return cls("custom", funcs=funcs)

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        return self.kind == "l1" and not np.any(self.weight)

    def func(self, i: int) -> ScalarFunction:
        return self.funcs[i] if len(self.funcs) > 1 else self.funcs[0]

    def l1_weights(self, n: int) -> np.ndarray:
        if self.kind == "l1":
            return np.broadcast_to(np.asarray(self.weight, dtype=float), (n,))
        return np.zeros(n)

    def value(self, x: np.ndarray) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return float(np.sum(self.weight * np.abs(x)))
        return float(sum(self.func(i).value(float(xi)) for i, xi in enumerate(x)))

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(X.shape[0])
        if self.kind == "l1":
            return np.abs(X) @ np.broadcast_to(self.weight, (X.shape[1],))
        return np.array([self.value(row) for row in X])

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        """Subgradient selector; returns 0 at the kink of ``|x_i|``."""
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "l1":
            return self.weight * np.sign(x)
        return np.array([self.func(i).subgrad(float(xi)) for i, xi in enumerate(x)])

    def lipschitz(self, n: int) -> float:
        """Euclidean Lipschitz modulus (l1 kind only; inf for custom)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return float(np.linalg.norm(self.l1_weights(n)))
        return math.inf

    def to_config(self) -> dict | None:
        if self.is_zero:
            return None
        if self.kind == "l1":
            w = self.weight
            return {"weight": w if isinstance(w, float) else w.tolist()}
        raise TypeError("custom separable terms are not serializable")

    def __repr__(self):
        if self.kind == "l1":
            return f"SeparableTerm.l1({self.weight!r})"
        return f"SeparableTerm({self.kind!r})"


# ---------------------------------------------------------------------------
# smooth oracles


class SmoothOracle:
    """Smooth convex function: value, gradient and gradient-Lipschitz modulus."""

    smoothness: float = 0.0
    kind = "callable"

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.value(row) for row in X])

    def to_config(self) -> dict:
        raise TypeError(f"{type(self).__name__} is not serializable")


class FunctionOracle(SmoothOracle):
    def __init__(self, value: Callable, gradient: Callable, smoothness: float):
        if smoothness < 0:
            raise ValueError("smoothness modulus must be nonnegative")
        self._value = value
        self._gradient = gradient
        self.smoothness = float(smoothness)

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._gradient(x), dtype=float)


class Linear(SmoothOracle):
    """``a.x + offset``."""

    kind = "linear"

    def __init__(self, a, offset: float = 0.0):
        self.a = _as_vector(a, name="a")
        self.a.setflags(write=False)
        self.offset = float(offset)
        self.smoothness = 0.0

    def value(self, x):
        return float(self.a @ x) + self.offset

    def gradient(self, x):
        return self.a

    def value_batch(self, X):
        return X @ self.a + self.offset

    def to_config(self):
        return {"kind": "linear", "a": self.a.tolist(), "offset": self.offset}


class QuadraticForm(SmoothOracle):
    """``x'Px + q'x + r``.

    ``smoothness`` defaults to the max absolute row sum of ``P + P'``, a cheap
    upper bound on its spectral norm.
    """

    kind = "quadratic-form"

    def __init__(self, P, q=None, r: float = 0.0, smoothness: float | None = None):
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        n = P.shape[0]
        self.P = P
        self.H = P + P.T
        self.q = np.zeros(n) if q is None else _as_vector(q, n, "q")
        self.r = float(r)
        if smoothness is None:
            smoothness = float(np.max(np.sum(np.abs(self.H), axis=1)))
        self.smoothness = float(smoothness)
        self._has_linear = bool(np.any(self.q))

    def value(self, x):
        v = 0.5 * float(x @ (self.H @ x)) + self.r
        if self._has_linear:
            v += float(self.q @ x)
        return v

    def gradient(self, x):
        g = self.H @ x
        if self._has_linear:
            g = g + self.q
        return g

    def value_batch(self, X):
        return 0.5 * np.einsum("ij,ij->i", X @ self.H, X) + X @ self.q + self.r

    def to_config(self):
        return {
            "kind": "quadratic-form",
            "matrix": self.P.tolist(),
            "linear": self.q.tolist(),
            "constant": self.r,
            "smoothness": self.smoothness,
        }


class SquaredNorm(SmoothOracle):
    """``||x||^2 + offset`` (the l2-ball constraint uses ``offset = -b``)."""

    kind = "l2-ball"

    def __init__(self, offset: float = 0.0):
        self.offset = float(offset)
        self.smoothness = 2.0

    def value(self, x):
        return float(x @ x) + self.offset

    def gradient(self, x):
        return 2.0 * x

    def value_batch(self, X):
        return np.einsum("ij,ij->i", X, X) + self.offset

    def to_config(self):
        return {"kind": "l2-ball", "bound": -self.offset}


class LeastSquares(SmoothOracle):
    """``||Ax - b||^2`` with exact modulus ``2 ||A||_2^2``."""

    kind = "least-squares"

    def __init__(self, A, b):
        self.A = np.asarray(A, dtype=float)
        self.b = _as_vector(b, self.A.shape[0], "b")
        self.smoothness = 2.0 * float(np.linalg.norm(self.A, 2)) ** 2

    def value(self, x):
        r = self.A @ x - self.b
        return float(r @ r)

    def gradient(self, x):
        return 2.0 * (self.A.T @ (self.A @ x - self.b))

    def value_batch(self, X):
        R = X @ self.A.T - self.b
        return np.einsum("ij,ij->i", R, R)

    def to_config(self):
        return {"kind": "least-squares", "matrix": self.A.tolist(), "target": self.b.tolist()}


# ---------------------------------------------------------------------------
# the program


@dataclass
class ProblemSpec:
    """A constrained composite convex program with its problem constants.

    ``beta`` is a Lipschitz modulus of the stacked constraint map ``G``;
    ``C`` bounds ``||G(x)||`` on the box and ``R`` bounds its diameter. Rows
    flagged in ``equality_mask`` are linear equalities ``g_k(x) = 0`` handled
    with a signed virtual queue.
    """

    f: SmoothOracle
    g: list
    box: BoxSet
    beta: float
    f_tilde: SeparableTerm = field(default_factory=SeparableTerm.zero)
    g_tilde: list | None = None
    C: float | None = None
    R: float | None = None
    equality_mask: np.ndarray | None = None
    name: str = "custom"
    descriptor: dict | None = None

    def __post_init__(self):
        self.g = list(self.g)
        m = len(self.g)
        if self.g_tilde is None:
            self.g_tilde = [SeparableTerm.zero() for _ in range(m)]
        self.g_tilde = list(self.g_tilde)
        if len(self.g_tilde) != m:
            raise ValueError("g and g_tilde must have the same length")
        if self.equality_mask is None:
            self.equality_mask = np.zeros(m, dtype=bool)
        self.equality_mask = np.asarray(self.equality_mask, dtype=bool).copy()
        if self.equality_mask.shape != (m,):
            raise ValueError("equality_mask must have length m")
        if not (self.beta > 0):
            raise ValueError("beta must be positive")
        for k in np.flatnonzero(self.equality_mask):
            if self.g[k].smoothness != 0.0 or not self.g_tilde[k].is_zero:
                raise ValueError(f"equality row {k} must be a linear constraint")
        if self.C is not None and not self.C > 0:
            raise ValueError("C must be positive")
        if self.R is not None and not self.R > 0:
            raise ValueError("R must be positive")
        self._compile()

    def _compile(self):
        n = self.n
        lin = [k for k, gk in enumerate(self.g) if isinstance(gk, Linear)]
        self._lin_idx = np.array(lin, dtype=int)
        self._nonlin_idx = [k for k in range(self.m) if k not in set(lin)]
        if lin:
            A = np.vstack([self.g[k].a for k in lin])
            if A.shape[1] != n:
                raise ValueError("linear constraint dimension mismatch")
            self._lin_A = A
            self._lin_b = np.array([self.g[k].offset for k in lin])
        self._tilde_idx = [k for k in range(self.m) if not self.g_tilde[k].is_zero]
        kinds = {t.kind for t in [self.f_tilde, *self.g_tilde] if not t.is_zero}
        self.nonsmooth_kind = "custom" if "custom" in kinds else ("l1" if kinds else "zero")
        self.L_g = np.array([gk.smoothness for gk in self.g], dtype=float)

    # -- shapes and constants
    @property
    def n(self) -> int:
        return self.box.n

    @property
    def m(self) -> int:
        return len(self.g)

    @property
    def L_f(self) -> float:
        return float(self.f.smoothness)

    @property
    def is_smooth(self) -> bool:
        return self.nonsmooth_kind == "zero"

    @property
    def has_linear_g(self) -> bool:
        return not np.any(self.L_g)

    # -- evaluation
    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"x has shape {x.shape}, expected ({self.n},)")
        return x

    def F(self, x) -> float:
        x = self._check(x)
        return self.f.value(x) + self.f_tilde.value(x)

    def G(self, x) -> np.ndarray:
        x = self._check(x)
        out = np.empty(self.m)
        if self._lin_idx.size:
            out[self._lin_idx] = self._lin_A @ x + self._lin_b
        for k in self._nonlin_idx:
            out[k] = self.g[k].value(x)
        for k in self._tilde_idx:
            out[k] += self.g_tilde[k].value(x)
        return out

    def weighted_gradient(self, x, weights) -> np.ndarray:
        """``grad f(x) + sum_k weights_k grad g_k(x)``."""
        d = np.array(self.f.gradient(x), dtype=float)
        if self._lin_idx.size:
            d += self._lin_A.T @ weights[self._lin_idx]
        for k in self._nonlin_idx:
            d += weights[k] * self.g[k].gradient(x)
        return d

    def weighted_l1(self, weights) -> np.ndarray:
        """Per-coordinate l1 coefficients ``c_0 + sum_k weights_k c_k``."""
        e = np.array(self.f_tilde.l1_weights(self.n), dtype=float)
        for k in self._tilde_idx:
            e += weights[k] * self.g_tilde[k].l1_weights(self.n)
        return e

    def violation(self, Gx) -> float:
        """Largest constraint violation; equality rows count ``|h(x)|``."""
        v = np.where(self.equality_mask, np.abs(Gx), Gx)
        return float(max(0.0, np.max(v))) if v.size else 0.0

    def summary(self) -> str:
        return (
            f"{self.name}: n={self.n} m={self.m} beta={self.beta:.6g} "
            f"L_f={self.L_f:.6g} L_g={self.L_g.tolist()} C={self.C} R={self.R}"
        )


def eval_G(spec: ProblemSpec, x) -> np.ndarray:
    return spec.G(x)


def eval_F(spec: ProblemSpec, x) -> float:
    return spec.F(x)


def _sample_box(box: BoxSet, rng: np.random.Generator, size: int) -> np.ndarray:
    # infinite sides are sampled within unit distance of the finite side (or of 0)
    lo = np.where(np.isfinite(box.lower), box.lower, np.where(np.isfinite(box.upper), box.upper - 1.0, -1.0))
    hi = np.where(np.isfinite(box.upper), box.upper, lo + np.where(np.isfinite(box.lower), 1.0, 2.0))
    return lo + (hi - lo) * rng.random((size, box.n))


def lipschitz_estimate(spec: ProblemSpec, samples: int = 1000, seed: int = 0) -> float:
    """Largest sampled ratio ``||G(x) - G(y)|| / ||x - y||`` over pairs in the box.

    Half of the pairs are uniform over the box, the other half are short
    perturbations that probe local slopes.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    box = spec.box
    if np.all(box.lower == box.upper):
        return 0.0
    rng = np.random.default_rng(seed)
    X = _sample_box(box, rng, samples)
    Y = _sample_box(box, rng, samples)
    half = samples // 2
    step = 1e-4 * np.maximum(1.0, np.abs(X[:half]))
    Y[:half] = project_box_rows(box, X[:half] + step * rng.standard_normal((half, box.n)))
    best = 0.0
    for x, y in zip(X, Y):
        dist = np.linalg.norm(x - y)
        if dist == 0.0:
            continue
        best = max(best, float(np.linalg.norm(spec.G(x) - spec.G(y)) / dist))
    return best


def project_box_rows(box: BoxSet, X: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(X, box.lower), box.upper)
