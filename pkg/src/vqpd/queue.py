"""Virtual queues, Lyapunov drift and the queue invariants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TOL = 1e-9


@dataclass(frozen=True)
class QueueState:
    """Queue vector ``Q(t)`` with its Lyapunov value ``0.5 ||Q(t)||^2``.

    ``cumulative_G`` holds ``sum_{tau < t} G(x(tau))`` for the cumulative
    invariant; ``last_drift`` is ``L(t) - L(t-1)``.
    """

    Q: np.ndarray
    t: int
    lyapunov: float
    last_drift: float
    cumulative_G: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sqrt(2.0 * self.lyapunov))


def _mask(equality_mask, m):
    if equality_mask is None:
        return np.zeros(m, dtype=bool)
    mask = np.asarray(equality_mask, dtype=bool)
    if mask.shape != (m,):
        raise ValueError("equality_mask has the wrong length")
    return mask


def init_queue(G_init, equality_mask=None) -> QueueState:
    """``Q_k(0) = max(0, -G_k(x(-1)))``.

    Equality rows start at ``-h(x(-1))``, the difference of the two opposing
    inequality queues they replace.
    """
    G_init = np.asarray(G_init, dtype=float)
    mask = _mask(equality_mask, G_init.shape[0])
    Q = np.where(mask, -G_init, np.maximum(0.0, -G_init))
    return QueueState(Q, 0, 0.5 * float(Q @ Q), 0.0, np.zeros_like(G_init))


def update_queue(state: QueueState, G_now, equality_mask=None) -> QueueState:
    """``Q_k(t+1) = max(-G_k(x(t)), Q_k(t) + G_k(x(t)))``; equality rows add."""
    G_now = np.asarray(G_now, dtype=float)
    if G_now.shape != state.Q.shape:
        raise ValueError(f"G has shape {G_now.shape}, queue has {state.Q.shape}")
    mask = _mask(equality_mask, G_now.shape[0])
    s = state.Q + G_now
    Q = np.where(mask, s, np.maximum(-G_now, s))
    lyap = 0.5 * float(Q @ Q)
    return QueueState(Q, state.t + 1, lyap, lyap - state.lyapunov, state.cumulative_G + G_now)


class DriftCheck(NamedTuple):
    holds: bool
    slack: float
    drift: float
    bound: float


def drift_bound_check(state_before: QueueState, G_now, equality_mask=None) -> DriftCheck:
    """Compare the realized drift with ``Q(t)'G(x(t)) + ||G(x(t))||^2``."""
    G_now = np.asarray(G_now, dtype=float)
    after = update_queue(state_before, G_now, equality_mask)
    drift = after.lyapunov - state_before.lyapunov
    bound = float(state_before.Q @ G_now) + float(G_now @ G_now)
    slack = bound - drift
    return DriftCheck(slack >= -TOL, slack, drift, bound)


def invariant_slacks(state: QueueState, G_prev, equality_mask=None) -> dict[str, float]:
    """Worst slack of each per-iteration queue invariant (>= -TOL means it holds).

    ``G_prev`` is ``G(x(t-1))`` for ``state`` at iteration ``t >= 1``. Equality
    rows are signed and are left out of every check here.
    """
    G_prev = np.asarray(G_prev, dtype=float)
    ineq = ~_mask(equality_mask, G_prev.shape[0])
    Q = state.Q[ineq]
    Gp = G_prev[ineq]
    if Q.size == 0:
        return {}
    out = {
        "queue_nonnegative": float(Q.min()),
        "queue_plus_G_nonnegative": float((Q + Gp).min()),
    }
    if state.t == 0:
        out["initial_queue_norm_le_G"] = float(np.linalg.norm(Gp) - np.linalg.norm(Q))
    else:
        out["queue_norm_ge_G"] = float(np.linalg.norm(Q) - np.linalg.norm(Gp))
        out["queue_ge_cumulative_G"] = float((Q - state.cumulative_G[ineq]).min())
    return out
