"""Update rules: discrete descent with additive Gaussian jitter and a
small-step gradient-flow approximation.

The jitter update is ``p - tau * L'(p) - n`` with ``n ~ N(0, eps^2)``; the
noise is *not* multiplied by the step size.  Scalar functions operate on a
single trajectory; :func:`simulate_batch` runs many trials in lockstep and
is what the experiment runner uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .landscape import ESCAPED, Landscape, WellCatalog, locate_basin
from .stochastic import RngStream, StreamBank

DIVERGENCE_LIMIT = 1e6
DEFAULT_GRAD_TOL = 1e-8


@dataclass
class TrialOutcome:
    position: float
    steps: int
    well: int
    trajectory: list[float] | None = None

    @property
    def escaped(self) -> bool:
        return self.well == ESCAPED


def _diverged(p: float) -> bool:
    return not (abs(p) <= DIVERGENCE_LIMIT)


def jitter_step(land: Landscape, p: float, tau: float, eps: float, s: RngStream) -> float:
    """One noisy descent step.  May return a non-finite value; callers treat
    that as divergence."""
    n = s.gaussian(eps)
    return p - tau * land.df(p) - n


def run_trajectory(
    land: Landscape,
    catalog: WellCatalog,
    p0: float,
    tau: float,
    eps: float,
    max_steps: int,
    s: RngStream,
    record: bool = False,
) -> TrialOutcome:
    """Exactly ``max_steps`` jitter steps, classified by the final position.

    Leaving the interval mid-run is allowed; only the last position counts.
    A diverged trial stops at once and is ESCAPED.
    """
    _check_step_args(tau, eps, max_steps)
    p = float(p0)
    path = [p] if record else None
    for t in range(max_steps):
        p = jitter_step(land, p, tau, eps, s)
        if path is not None:
            path.append(p)
        if _diverged(p):
            return TrialOutcome(p, t + 1, ESCAPED, path)
    return TrialOutcome(p, max_steps, locate_basin(catalog, p), path)


def gradient_flow(
    land: Landscape,
    catalog: WellCatalog,
    p0: float,
    flow_tau: float = 0.01,
    grad_tol: float = DEFAULT_GRAD_TOL,
    max_steps: int = 100_000,
    record: bool = False,
) -> TrialOutcome:
    """Noise-free descent that stops once ``|L'(p)| < grad_tol``."""
    _check_step_args(flow_tau, 0.0, max_steps)
    if not grad_tol > 0:
        raise ValueError("grad_tol must be positive")
    p = float(p0)
    path = [p] if record else None
    for t in range(max_steps):
        d = land.df(p)
        if abs(d) < grad_tol:
            return TrialOutcome(p, t, locate_basin(catalog, p), path)
        p = p - flow_tau * d
        if path is not None:
            path.append(p)
        if _diverged(p):
            return TrialOutcome(p, t + 1, ESCAPED, path)
    return TrialOutcome(p, max_steps, locate_basin(catalog, p), path)


def _check_step_args(tau, eps, max_steps):
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not eps >= 0:
        raise ValueError("eps must be non-negative")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")


def simulate_batch(
    land: Landscape,
    p0: np.ndarray,
    tau,
    eps,
    max_steps: int,
    bank: StreamBank | None = None,
    flow: bool = False,
    grad_tol: float = DEFAULT_GRAD_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance every start in ``p0`` and return (final positions, steps).

    ``tau`` and ``eps`` are scalars or per-trial arrays.  Diverged trials
    come back as NaN.  With ``flow=True`` there is no noise and each trial
    stops on its own once its gradient falls below ``grad_tol``.  Each
    trial's result depends only on its own start and stream, never on the
    rest of the batch.
    """
    p = np.array(p0, dtype=float)
    n = p.size
    tau = np.broadcast_to(np.asarray(tau, dtype=float), p.shape)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), p.shape)
    _check_step_args(float(tau.min()) if n else 1.0, float(eps.min()) if n else 0.0, max_steps)
    steps = np.full(n, max_steps, dtype=np.int64)
    if n == 0:
        return p, steps
    with np.errstate(invalid="ignore", over="ignore"):
        if flow:
            _flow_batch(land, p, tau, max_steps, grad_tol, steps)
        else:
            noisy = bool(np.any(eps > 0))
            if noisy and bank is None:
                raise ValueError("a StreamBank is required when eps > 0")
            alive = np.ones(n, dtype=bool)
            for t in range(max_steps):
                p = p - tau * land.derivative(p)
                if noisy:
                    p = p - eps * bank.standard_normal()
                bad = ~(np.abs(p) <= DIVERGENCE_LIMIT)
                if bad.any():
                    fresh = bad & alive
                    if fresh.any():
                        steps[fresh] = t + 1
                        alive &= ~fresh
                        p[fresh] = np.nan
    return p, steps


def _flow_batch(land, p, tau, max_steps, grad_tol, steps):
    active = np.arange(p.size)
    for t in range(max_steps):
        x = p[active]
        d = land.derivative(x)
        moving = np.abs(d) >= grad_tol
        if not moving.all():
            steps[active[~moving]] = t
            active, x, d = active[moving], x[moving], d[moving]
            if active.size == 0:
                return
        x = x - tau[active] * d
        p[active] = x
        bad = ~(np.abs(x) <= DIVERGENCE_LIMIT)
        if bad.any():
            steps[active[bad]] = t + 1
            p[active[bad]] = np.nan
            active = active[~bad]


def trajectory_rows(land: Landscape, path: list[float]) -> list[tuple[int, float, float, float]]:
    """(step, position, value, gradient) rows for a recorded path."""
    xs = np.asarray(path, dtype=float)
    with np.errstate(all="ignore"):
        vals = land.value(xs)
        grads = land.derivative(xs)
    return [(i, float(x), float(v), float(g)) for i, (x, v, g) in enumerate(zip(xs, vals, grads))]
