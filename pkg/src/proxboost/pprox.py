"""Approximated proximal point method on plain vectors.

Each step computes the proximal direction ``g = (x - prox(x, lam)) / lam``
and moves along an approximation of it, ``x <- x - lam * P(g)``. Boosting is
the case where ``P`` projects onto what a tree can represent; here ``P`` is
any map, which makes convergence rates checkable in isolation.

An operator has edge ``zeta`` on ``g`` when ``||g - P(g)||^2 <= (1 - zeta^2) ||g||^2``.
With ``lam = zeta^2 / (8 L)`` on an ``L``-smooth, ``kappa``-strongly convex
objective the excess loss contracts at least by ``1 - zeta^2 kappa / (9 L)``
per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericError


@dataclass(frozen=True)
class ObjectiveFn:
    """Convex objective with a proximal map; ``L``/``kappa``/``minimum`` are declared metadata."""

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    L: float | None = None
    kappa: float | None = None
    minimum: float | None = None
    minimizer: np.ndarray | None = None


@dataclass(frozen=True)
class ApproxOperator:
    """``apply(g, t)`` approximates direction ``g`` at step ``t``; ``zeta`` is its declared edge."""

    apply: Callable[[np.ndarray, int], np.ndarray]
    zeta: float
    name: str = "operator"

    def __call__(self, g, t: int = 0) -> np.ndarray:
        return self.apply(np.asarray(g, dtype=float), t)


def quadratic_objective(diag, center=None) -> ObjectiveFn:
    """``F(x) = 0.5 * sum(diag * (x - center)^2)`` with closed-form prox."""
    d = np.asarray(diag, dtype=float)
    if d.ndim != 1 or np.any(d <= 0):
        raise ValueError("diag must be a vector of positive curvatures")
    c = np.zeros_like(d) if center is None else np.asarray(center, dtype=float)

    def value(x):
        return float(0.5 * np.sum(d * (x - c) ** 2))

    def prox(z, lam):
        return (z + lam * d * c) / (1.0 + lam * d)

    return ObjectiveFn(value, prox, lambda x: d * (x - c), L=float(d.max()),
                       kappa=float(d.min()), minimum=0.0, minimizer=c)


def random_quadratic(n: int, kappa: float, L: float, rng: np.random.Generator) -> ObjectiveFn:
    """Quadratic with a random diagonal spectrum in ``[kappa, L]`` (both ends attained)."""
    if not 0 < kappa <= L:
        raise ValueError("need 0 < kappa <= L")
    d = rng.uniform(kappa, L, size=n)
    d[:2] = kappa, L
    return quadratic_objective(rng.permutation(d), rng.normal(size=n))


# -- operators ------------------------------------------------------------------

def identity_operator() -> ApproxOperator:
    return ApproxOperator(lambda g, t: g.copy(), 1.0, "identity")


def edge_of(g, pg) -> float:
    """Largest ``zeta`` with ``||g - pg||^2 <= (1 - zeta^2) ||g||^2`` (1.0 for ``g == 0``)."""
    g, pg = np.asarray(g, dtype=float), np.asarray(pg, dtype=float)
    gg = float(g @ g)
    if gg == 0.0:
        return 1.0
    z2 = 1.0 - float((g - pg) @ (g - pg)) / gg
    return math.sqrt(z2) if z2 > 0 else 0.0


def measure_edge(P: ApproxOperator, probes) -> float:
    """Worst-case edge of ``P`` over the rows of ``probes``."""
    return min(edge_of(g, P(g, t)) for t, g in enumerate(np.atleast_2d(probes)))


def mask_operator(mask) -> ApproxOperator:
    """Keep the coordinates where ``mask`` is true, zero the rest."""
    keep = np.asarray(mask, dtype=bool)
    frac = keep.mean() if keep.size else 1.0
    return ApproxOperator(lambda g, t: np.where(keep, g, 0.0), math.sqrt(frac), "mask")


def coordinate_mask_operator(keep_fraction: float, rng_seed: int = 0) -> ApproxOperator:
    """Zero a fixed random subset of coordinates, keeping ``ceil(keep_fraction * n)``.

    The subset is drawn once per dimension from ``rng_seed``. For directions
    spread evenly over coordinates the edge is about ``sqrt(keep_fraction)``,
    which is the declared value; the true edge on a given direction can be
    anything in ``[0, 1]``.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    masks: dict[int, np.ndarray] = {}

    def apply(g, t):
        n = g.size
        if n not in masks:
            k = min(n, math.ceil(keep_fraction * n - 1e-12))
            keep = np.zeros(n, dtype=bool)
            keep[np.random.default_rng(rng_seed).permutation(n)[:k]] = True
            masks[n] = keep
        return np.where(masks[n], g, 0.0)

    return ApproxOperator(apply, math.sqrt(keep_fraction), f"mask({keep_fraction})")


def edge_operator(zeta: float) -> ApproxOperator:
    """Keep the fewest largest-magnitude coordinates holding ``zeta^2`` of the energy.

    Mimics a weak learner that captures a guaranteed share of the direction,
    so its edge is at least ``zeta`` on every input.
    """
    if not 0.0 < zeta <= 1.0:
        raise ValueError(f"zeta must lie in (0, 1], got {zeta}")

    def apply(g, t):
        energy = g * g
        total = energy.sum()
        if total == 0.0:
            return g.copy()
        order = np.argsort(-energy, kind="stable")
        kept = np.cumsum(energy[order])
        k = int(np.searchsorted(kept, zeta * zeta * total * (1 - 1e-12))) + 1
        out = np.zeros_like(g)
        out[order[:k]] = g[order[:k]]
        return out

    return ApproxOperator(apply, zeta, f"edge({zeta})")


def noisy_operator(scale: float, rng_seed: int = 0, power: float = 2.0) -> ApproxOperator:
    """Exact direction plus a random error of norm ``scale / (t + 1)^power``."""
    rng = np.random.default_rng(rng_seed)

    def apply(g, t):
        u = rng.standard_normal(g.size)
        u /= np.linalg.norm(u)
        return g + scale / (t + 1) ** power * u

    return ApproxOperator(apply, 0.0, f"noise({scale}/t^{power})")


# -- method -----------------------------------------------------------------------

def prox_point_iterate(obj: ObjectiveFn, P: ApproxOperator, x0, lam: float, T: int,
                       edges: list | None = None):
    """Run ``T`` approximated proximal point steps; returns ``(x_T, [F(x_0), ..., F(x_T)])``.

    If ``edges`` is a list, the measured edge of ``P`` at every step is
    appended to it.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    if T < 1:
        raise ValueError("T must be at least 1")
    x = np.array(x0, dtype=float)
    losses = np.empty(T + 1)
    losses[0] = obj.value(x)
    for t in range(T):
        g = (x - obj.prox(x, lam)) / lam
        pg = P(g, t)
        if edges is not None:
            edges.append(edge_of(g, pg))
        x = x - lam * pg
        losses[t + 1] = obj.value(x)
        if not math.isfinite(losses[t + 1]):
            raise NumericError(f"objective is not finite at step {t + 1}")
    return x, losses


def rate_factor(zeta: float, L: float, kappa: float) -> float:
    return 1.0 - zeta * zeta * kappa / (9.0 * L)


def rate_bound(loss0: float, T: int, zeta: float, L: float, kappa: float,
               f_star: float = 0.0) -> np.ndarray:
    """``F* + rho^t (F(x_0) - F*)`` for ``t = 0..T``."""
    return f_star + rate_factor(zeta, L, kappa) ** np.arange(T + 1) * (loss0 - f_star)


def verify_rate(losses, zeta: float, L: float, kappa: float, f_star: float = 0.0,
                slack: float = 1e-10) -> bool:
    """True iff every ``F(x_t) - F*`` sits under the linear-rate bound (plus ``slack``)."""
    losses = np.asarray(losses, dtype=float)
    bound = rate_bound(losses[0], losses.size - 1, zeta, L, kappa, f_star)
    return bool(np.all(losses - bound <= slack))
