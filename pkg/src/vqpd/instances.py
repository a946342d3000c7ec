"""Problem generators.

Analytic instances (``qp1``, ``ball1``) come with a closed-form reference;
the portfolio and constrained-LASSO generators are seeded through
:mod:`vqpd.rng` and regenerate bit-identically from their descriptor.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import ReferenceSolution
from .problem import (
    BoxSet,
    LeastSquares,
    Linear,
    ProblemSpec,
    QuadraticForm,
    SeparableTerm,
    SquaredNorm,
)
from .rng import STREAM_BALL, STREAM_CORRELATION, STREAM_LASSO, CounterRNG

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceDescriptor:
    """Name plus generator parameters; ``build()`` regenerates the instance."""

    name: str
    params: dict = field(default_factory=dict)

    def canonical(self) -> str:
        return json.dumps({"name": self.name, "params": self.params}, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}

    def __str__(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))

    @classmethod
    def parse(cls, text: str) -> "InstanceDescriptor":
        """Parse ``name`` or ``name:key=value,key=value``."""
        name, _, rest = text.partition(":")
        name = name.strip()
        if name not in GENERATORS:
            raise ValueError(f"unknown instance {name!r}; choose from {sorted(GENERATORS)}")
        params = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"malformed instance parameter {item!r}")
            params[key.strip()] = _parse_value(val.strip())
        return cls(name, params)

    def build(self):
        """Return ``(spec, reference-or-None)``."""
        return make_instance(self.name, **self.params)


def _parse_value(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    for conv in (int, float):
        try:
            return conv(val)
        except ValueError:
            pass
    return val


def _finish(spec: ProblemSpec, name: str, params: dict) -> ProblemSpec:
    spec.name = name
    spec.descriptor = InstanceDescriptor(name, params).to_dict()
    return spec


# ---------------------------------------------------------------------------
# analytic instances


def gen_qp1():
    """``min x^2`` s.t. ``1 - x <= 0`` on ``[-10, 10]``; ``x* = 1``, ``lam* = 2``."""
    spec = ProblemSpec(
        f=QuadraticForm([[1.0]]),
        g=[Linear([-1.0], 1.0)],
        box=BoxSet.uniform(1, -10.0, 10.0),
        beta=1.0,
        C=11.0,
        R=20.0,
    )
    _finish(spec, "qp1", {})
    ref = ReferenceSolution.build(spec, np.array([1.0]), np.array([2.0]), "analytic", 0.0)
    return spec, ref


def gen_ball1(n: int = 1, seed: int = 0, b: float = 0.25, c=None):
    """``min c'x`` s.t. ``||x||^2 - b <= 0`` on ``[-1, 1]^n``.

    ``c`` is a seeded standard normal vector unless given. The KKT pair is
    ``x* = -sqrt(b) c / ||c||``, ``lam* = ||c|| / (2 sqrt(b))`` (both zero
    when ``c = 0``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < b <= 1:
        raise ValueError("b must lie in (0, 1] so that the ball sits inside the box")
    params = {"n": n, "seed": seed, "b": b}
    if c is None:
        c = CounterRNG(seed, STREAM_BALL).normals(n)
    else:
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.shape != (n,):
            raise ValueError("c must have length n")
        params["c"] = c.tolist()
    spec = ProblemSpec(
        f=Linear(c),
        g=[SquaredNorm(-b)],
        box=BoxSet.uniform(n, -1.0, 1.0),
        beta=2.0 * math.sqrt(n),
        C=max(b, n - b),
        R=2.0 * math.sqrt(n),
    )
    _finish(spec, "ball1", params)
    cn = float(np.linalg.norm(c))
    if cn == 0.0:
        x_star, lam = np.zeros(n), np.zeros(1)
    else:
        x_star = -math.sqrt(b) * c / cn
        lam = np.array([cn / (2.0 * math.sqrt(b))])
    return spec, ReferenceSolution.build(spec, x_star, lam, "analytic", 1e-12)


# ---------------------------------------------------------------------------
# portfolio instances


def gen_correlation_matrix(n: int, seed: int = 0) -> np.ndarray:
    """``M = D^-1/2 N'N D^-1/2`` with ``D = Diag(N'N)`` and Gaussian ``N`` (n x n).

    ``N`` is filled row-major from the correlation stream. A zero column of
    ``N`` would make ``D`` singular; it is redrawn from the same stream.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = CounterRNG(seed, STREAM_CORRELATION)
    N = rng.normals(n * n).reshape(n, n)
    for j in range(n):
        while not np.any(N[:, j]):
            N[:, j] = rng.normals(n)
    S = N.T @ N
    s = 1.0 / np.sqrt(np.diag(S))
    M = S * s[:, None] * s[None, :]
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, 1.0)
    return M


def _budget_row(n: int, equality: bool) -> Linear:
    # 1 - sum(x) <= 0 (or == 0 when equality-masked)
    return Linear(-np.ones(n), 1.0)


def gen_gmv_l2(n: int = 50, seed: int = 0, b: float | None = None, equality: bool = False) -> ProblemSpec:
    """Minimum-variance portfolio with an l2-ball constraint on ``[0, 1]^n``.

    ``min x'Mx`` s.t. ``1 - sum(x) <= 0`` and ``||x||^2 - b <= 0``, default
    ``b = 3/n``. With ``equality=True`` the budget row is ``sum(x) = 1``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    b = 3.0 / n if b is None else float(b)
    M = gen_correlation_matrix(n, seed)
    spec = ProblemSpec(
        f=QuadraticForm(M),
        g=[_budget_row(n, equality), SquaredNorm(-b)],
        box=BoxSet.uniform(n, 0.0, 1.0),
        beta=math.sqrt(5.0 * n),
        C=math.hypot(max(1.0, n - 1.0), max(b, n - b)),
        R=math.sqrt(n),
        equality_mask=[equality, False],
    )
    return _finish(spec, "gmv-l2", {"n": n, "seed": seed, "b": b, "equality": equality})


def gen_gmv_l1(n: int = 50, seed: int = 0, b: float | None = None, equality: bool = False) -> ProblemSpec:
    """Minimum-variance portfolio with an l1 constraint.

    ``min x'Mx`` s.t. ``1 - sum(x) <= 0`` and ``||x||_1 - b <= 0``; the l1 norm
    is carried by the separable part of the second row. Coordinates may be
    negative; the box ``[-B, B]^n`` with ``B = max(1, b)`` contains the whole
    l1 ball and only supplies finite ``C`` and ``R``.

    Since ``||x||_1 >= sum(x) >= 1`` on the feasible set, ``b < 1`` is
    infeasible; a warning is logged in that case.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    b = 3.0 / n if b is None else float(b)
    if b < 1.0:
        log.warning("gmv-l1 with b=%g < 1 has no feasible point (sum(x) = 1 forces ||x||_1 >= 1)", b)
    B = max(1.0, b)
    M = gen_correlation_matrix(n, seed)
    spec = ProblemSpec(
        f=QuadraticForm(M),
        g=[_budget_row(n, equality), Linear(np.zeros(n), -b)],
        g_tilde=[SeparableTerm.zero(), SeparableTerm.l1(1.0)],
        box=BoxSet.uniform(n, -B, B),
        beta=math.sqrt(2.0 * n),
        C=math.hypot(1.0 + n * B, max(b, n * B - b)),
        R=2.0 * B * math.sqrt(n),
        equality_mask=[equality, False],
    )
    return _finish(spec, "gmv-l1", {"n": n, "seed": seed, "b": b, "equality": equality})


# ---------------------------------------------------------------------------
# constrained LASSO


def gen_constrained_lasso(rows: int = 20, n: int = 10, seed: int = 0, lambda_weight: float = 0.1,
                          bound: float | None = 0.8, sparsity: int | None = None,
                          noise: float = 0.1) -> ProblemSpec:
    """``min ||Ax - y||^2 + lambda ||x||_1`` s.t. ``-bound <= x_i <= bound``.

    ``A`` is standard Gaussian (rows x n), the planted ``x_true`` has
    ``sparsity`` entries of magnitude 1 with random signs, and
    ``y = A x_true + noise * e``. The bounds are written as the linear rows
    ``[I; -I] x - bound <= 0`` inside the box ``[-10, 10]^n``.
    ``bound=None`` drops the constraint rows.
    """
    if rows < 1 or n < 1:
        raise ValueError("rows and n must be >= 1")
    if lambda_weight < 0:
        raise ValueError("lambda_weight must be nonnegative")
    k = max(1, n // 5) if sparsity is None else int(sparsity)
    rng = CounterRNG(seed, STREAM_LASSO)
    A = rng.normals(rows * n).reshape(rows, n)
    x_true = np.zeros(n)
    signs = np.where(rng.uniforms(k) < 0.5, -1.0, 1.0)
    x_true[:k] = signs
    y = A @ x_true + noise * rng.normals(rows)
    box = BoxSet.uniform(n, -10.0, 10.0)
    if bound is None:
        g, beta, C = [], 1.0, None
    else:
        eye = np.eye(n)
        g = [Linear(eye[i], -bound) for i in range(n)] + [Linear(-eye[i], -bound) for i in range(n)]
        beta = math.sqrt(2.0)
        C = math.sqrt(2.0 * n) * (10.0 + bound)
    spec = ProblemSpec(
        f=LeastSquares(A, y),
        f_tilde=SeparableTerm.l1(lambda_weight) if lambda_weight > 0 else SeparableTerm.zero(),
        g=g,
        box=box,
        beta=beta,
        C=C,
        R=20.0 * math.sqrt(n),
    )
    spec.x_true = x_true
    return _finish(spec, "lasso", {
        "rows": rows, "n": n, "seed": seed, "lambda_weight": lambda_weight, "bound": bound,
        "sparsity": k, "noise": noise,
    })


# ---------------------------------------------------------------------------
# registry


def _wrap(fn):
    def build(**params):
        return fn(**params), None

    build.__doc__ = fn.__doc__
    return build


GENERATORS = {
    "qp1": gen_qp1,
    "ball1": gen_ball1,
    "gmv-l2": _wrap(gen_gmv_l2),
    "gmv-l1": _wrap(gen_gmv_l1),
    "lasso": _wrap(gen_constrained_lasso),
}


def make_instance(name: str, **params):
    """Build a named instance; returns ``(spec, reference-or-None)``."""
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown instance {name!r}; choose from {sorted(GENERATORS)}") from None
    try:
        return gen(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name}: {exc}") from None
