"""Convex per-sample losses with the quantities boosting needs.

Every loss exposes its value, the empirical risk ``D(p) = mean(l(y, p))``,
an element of the subdifferential of ``D``, the coordinatewise proximal map
of ``lam * l(y, .)``, the optimal constant predictor and an exact line search.

Conventions
-----------
* ``subgradient`` carries the ``1/n`` factor of the empirical mean.
* ``prox`` works coordinatewise on ``lam * l(y_i, .)``; ``prox_residual`` is
  ``(prox(z) - z) / lam``, i.e. the negated proximal direction.
* At kinks the subgradient picks the zero branch (``sign(0) = 0``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, ClassVar

import numpy as np
from scipy.special import expit

from .errors import DegenerateClassError, InvalidTargetError, NumericError

GAMMA_MAX = 1e6
NEWTON_TOL = 1e-10
NEWTON_MAXITER = 100
# Extra pure-bisection steps once Newton gave up; enough to shrink a bracket
# of width 1e300 down to 1e-10.
BISECT_MAXITER = 1100
_EXP_CLIP = 700.0
_LN2 = math.log(2.0)


class Task(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


def solve_increasing(
    fun: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    lo: np.ndarray,
    hi: np.ndarray,
    x0: np.ndarray,
    *,
    tol: float = NEWTON_TOL,
    maxiter: int = NEWTON_MAXITER,
) -> np.ndarray:
    """Elementwise root of a nondecreasing function by safeguarded Newton.

    ``fun(x, idx)`` returns ``(phi(x), phi'(x))`` for the coordinates ``idx``.
    Each coordinate must satisfy ``phi(lo) <= 0 <= phi(hi)``. Newton steps that
    leave the current bracket are replaced by bisection; after ``maxiter``
    iterations only bisection is used.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = np.clip(np.array(x0, dtype=float), lo, hi)
    active = np.arange(x.size)
    for it in range(maxiter + BISECT_MAXITER):
        xa, la, ha = x[active], lo[active], hi[active]
        f, df = fun(xa, active)
        la = np.where(f < 0, xa, la)
        ha = np.where(f > 0, xa, ha)
        mid = 0.5 * (la + ha)
        if it < maxiter:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                cand = xa - f / df
            bad = ~np.isfinite(cand) | (cand <= la) | (cand >= ha)
            new = np.where(bad, mid, cand)
        else:
            new = mid
        hit = f == 0
        new = np.where(hit, xa, new)
        done = hit | (np.abs(new - xa) <= tol * (1.0 + np.abs(xa))) | (ha - la <= tol * (1.0 + np.abs(xa)))
        x[active], lo[active], hi[active] = new, la, ha
        active = active[~done]
        if active.size == 0:
            return x
    raise NumericError(f"safeguarded Newton did not converge for {active.size} coordinate(s)")


@dataclass(frozen=True)
class Loss:
    """Base class; concrete losses override the elementwise pieces."""

    name: ClassVar[str]
    task: ClassVar[Task]

    # -- elementwise pieces -------------------------------------------------
    def value(self, y, p):
        """Elementwise loss ``l(y, p)``."""
        raise NotImplementedError

    def derivative(self, y, p):
        """Elementwise element of the subdifferential of ``l(y, .)`` at ``p``."""
        raise NotImplementedError

    def prox(self, y, z, lam):
        """Elementwise ``argmin_u lam * l(y, u) + (u - z)**2 / 2``."""
        raise NotImplementedError

    def initial_constant(self, y) -> float:
        raise NotImplementedError

    def _search(self, y, p, g) -> tuple[float, bool]:
        raise NotImplementedError

    # -- shared API ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {"loss": self.name}

    def check_targets(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InvalidTargetError("targets must be finite")
        if self.task is Task.CLASSIFICATION and not np.all((y == 1.0) | (y == -1.0)):
            bad = y[(y != 1.0) & (y != -1.0)]
            raise InvalidTargetError(
                f"{self.name} loss needs targets in {{-1, +1}}, got e.g. {float(bad[0])!r}"
            )
        return y

    def _pair(self, y, p):
        y = self.check_targets(y)
        p = np.asarray(p, dtype=float)
        if y.shape != p.shape:
            raise ValueError(f"length mismatch: targets {y.shape} vs predictions {p.shape}")
        if y.size == 0:
            raise ValueError("empty sample")
        return y, p

    def risk(self, y, p) -> float:
        """Empirical risk ``mean(l(y_i, p_i))``."""
        y, p = self._pair(y, p)
        return float(np.mean(self.value(y, p)))

    def subgradient(self, y, p) -> np.ndarray:
        """An element of the subdifferential of the empirical risk at ``p``."""
        y, p = self._pair(y, p)
        return self.derivative(y, p) / y.size

    def prox_residual(self, y, z, lam: float) -> np.ndarray:
        """Proximal pseudo-residuals ``(prox(z) - z) / lam``."""
        if not lam > 0:
            raise ValueError("prox step must be positive")
        y, z = self._pair(y, z)
        return (self.prox(y, z, lam) - z) / lam

    def line_search(self, y, p, g) -> float:
        """Step ``gamma`` minimizing ``risk(y, p + gamma * g)``."""
        return self.search_step(y, p, g)[0]

    def search_step(self, y, p, g) -> tuple[float, bool]:
        """Like :meth:`line_search`, also returning whether the step was clamped."""
        y, p = self._pair(y, p)
        g = np.asarray(g, dtype=float)
        if g.shape != p.shape:
            raise ValueError("direction and predictions differ in length")
        if not np.any(g):
            return 0.0, False
        return self._search(y, p, g)


def _clamp(gamma: float) -> tuple[float, bool]:
    if abs(gamma) > GAMMA_MAX:
        return math.copysign(GAMMA_MAX, gamma), True
    return float(gamma), False


class _PiecewiseLinear(Loss):
    """Losses whose line search is a minimum over breakpoints."""

    def _breakpoints(self, y, p, g) -> np.ndarray:
        raise NotImplementedError

    def _search(self, y, p, g):
        nz = g != 0
        y, p, g = y[nz], p[nz], g[nz]
        cands = np.unique(np.concatenate(([0.0], self._breakpoints(y, p, g))))
        cands = cands[np.isfinite(cands)]
        # smallest |gamma| first so that argmin resolves ties towards it
        cands = cands[np.lexsort((cands, np.abs(cands)))]
        chunk = max(1, 2_000_000 // y.size)
        risks = np.empty(cands.size)
        for start in range(0, cands.size, chunk):
            c = cands[start:start + chunk, None]
            risks[start:start + chunk] = self.value(y, p + c * g).sum(axis=1)
        return _clamp(cands[int(np.argmin(risks))])


class _Smooth(Loss):
    """Twice differentiable losses solved by safeguarded Newton."""

    def second_derivative(self, y, p):
        raise NotImplementedError

    def prox(self, y, z, lam):
        y, z, lam = np.broadcast_arrays(
            np.asarray(y, float), np.asarray(z, float), np.asarray(lam, float))
        shape = z.shape
        y, z, lam = y.ravel(), z.ravel(), lam.ravel()
        # phi(u) = lam * l'(u) + u - z has slope >= 1, so its root lies
        # between z and z - lam * l'(z).
        other = z - lam * self.derivative(y, z)
        lo, hi = np.minimum(z, other), np.maximum(z, other)

        def phi(u, idx):
            return (lam[idx] * self.derivative(y[idx], u) + u - z[idx],
                    lam[idx] * self.second_derivative(y[idx], u) + 1.0)

        return solve_increasing(phi, lo, hi, z).reshape(shape)

    def _search(self, y, p, g):
        def dphi(gam):
            u = p + gam * g
            return (float(np.sum(g * self.derivative(y, u))),
                    float(np.sum(g * g * self.second_derivative(y, u))))

        d0, h0 = dphi(0.0)
        if d0 == 0.0:
            return 0.0, False
        s = -math.copysign(1.0, d0)
        guess = abs(d0) / h0 if h0 > 0 and math.isfinite(h0) else 1.0
        guess = min(max(guess, 1e-12), GAMMA_MAX)
        a, b = 0.0, s * guess
        while True:
            db, hb = dphi(b)
            # db == hb == 0 is underflow, not a minimum: keep growing
            if s * db > 0 or (db == 0 and hb > 0):
                break
            a, b = b, 2.0 * b
            if abs(b) > GAMMA_MAX:
                return s * GAMMA_MAX, True
        lo, hi = min(a, b), max(a, b)
        root = solve_increasing(
            lambda x, idx: tuple(np.array([v]) for v in dphi(float(x[0]))),
            np.array([lo]), np.array([hi]), np.array([s * guess]),
        )
        return _clamp(float(root[0]))


@dataclass(frozen=True)
class LeastSquares(Loss):
    name: ClassVar[str] = "least_squares"
    task: ClassVar[Task] = Task.REGRESSION

    def value(self, y, p):
        return 0.5 * (np.asarray(y) - p) ** 2

    def derivative(self, y, p):
        return np.asarray(p, dtype=float) - y

    def prox(self, y, z, lam):
        return (lam * np.asarray(y) + z) / (1.0 + lam)

    def initial_constant(self, y):
        return float(np.mean(self.check_targets(y)))

    def _search(self, y, p, g):
        return _clamp(float(np.dot(y - p, g) / np.dot(g, g)))


@dataclass(frozen=True)
class LeastAbsoluteDeviations(_PiecewiseLinear):
    name: ClassVar[str] = "lad"
    task: ClassVar[Task] = Task.REGRESSION

    def value(self, y, p):
        return np.abs(np.asarray(y) - p)

    def derivative(self, y, p):
        return np.sign(np.asarray(p, dtype=float) - y)

    def prox(self, y, z, lam):
        d = np.asarray(z, dtype=float) - y
        return y + np.sign(d) * np.maximum(np.abs(d) - lam, 0.0)

    def initial_constant(self, y):
        return float(np.median(self.check_targets(y)))

    def _breakpoints(self, y, p, g):
        return (y - p) / g


@dataclass(frozen=True)
class Pinball(_PiecewiseLinear):
    tau: float = 0.5
    name: ClassVar[str] = "pinball"
    task: ClassVar[Task] = Task.REGRESSION

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"pinball tau must lie in (0, 1), got {self.tau}")

    def to_dict(self):
        return {"loss": self.name, "tau": self.tau}

    def value(self, y, p):
        r = np.asarray(y) - p
        return np.maximum(self.tau * r, (self.tau - 1.0) * r)

    def derivative(self, y, p):
        r = np.asarray(y, dtype=float) - p
        return np.where(r > 0, -self.tau, np.where(r < 0, 1.0 - self.tau, 0.0))

    def prox(self, y, z, lam):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        r = y - z
        hi, lo = lam * self.tau, lam * (self.tau - 1.0)
        return np.where(r > hi, z + hi, np.where(r < lo, z + lo, y))

    def initial_constant(self, y):
        return float(np.quantile(self.check_targets(y), self.tau, method="inverted_cdf"))

    def _breakpoints(self, y, p, g):
        return (y - p) / g


def _positives(loss: Loss, y) -> tuple[int, int]:
    y = loss.check_targets(y)
    n, pos = y.size, int(np.sum(y == 1.0))
    if n == 0:
        raise ValueError("empty sample")
    if pos == 0 or pos == n:
        raise DegenerateClassError(
            f"{loss.name} initial estimator needs both classes (got {pos} positives of {n})"
        )
    return pos, n


@dataclass(frozen=True)
class Exponential(_Smooth):
    beta: float = 1.0
    name: ClassVar[str] = "exponential"
    task: ClassVar[Task] = Task.CLASSIFICATION

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"exponential beta must be positive, got {self.beta}")

    def to_dict(self):
        return {"loss": self.name, "beta": self.beta}

    def _exp(self, y, p):
        return np.exp(np.minimum(-self.beta * np.asarray(y) * p, _EXP_CLIP))

    def value(self, y, p):
        return self._exp(y, p)

    def derivative(self, y, p):
        return -self.beta * np.asarray(y) * self._exp(y, p)

    def second_derivative(self, y, p):
        return self.beta ** 2 * self._exp(y, p)

    def initial_constant(self, y):
        pos, n = _positives(self, y)
        return math.log(pos / (n - pos)) / (2.0 * self.beta)


@dataclass(frozen=True)
class Logistic(_Smooth):
    """Base-2 logistic loss ``log2(1 + exp(-y p))``."""

    name: ClassVar[str] = "logistic"
    task: ClassVar[Task] = Task.CLASSIFICATION

    def value(self, y, p):
        return np.logaddexp(0.0, -np.asarray(y) * p) / _LN2

    def derivative(self, y, p):
        y = np.asarray(y)
        return -y * expit(-y * p) / _LN2

    def second_derivative(self, y, p):
        m = np.asarray(y) * p
        return expit(m) * expit(-m) / _LN2

    def initial_constant(self, y):
        pos, n = _positives(self, y)
        return math.log(pos / (n - pos))


@dataclass(frozen=True)
class Hinge(_PiecewiseLinear):
    name: ClassVar[str] = "hinge"
    task: ClassVar[Task] = Task.CLASSIFICATION

    def value(self, y, p):
        return np.maximum(0.0, 1.0 - np.asarray(y) * p)

    def derivative(self, y, p):
        y = np.asarray(y, dtype=float)
        return np.where(y * p < 1.0, -y, 0.0)

    def prox(self, y, z, lam):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        m = y * z
        return np.where(m < 1.0 - lam, z + lam * y, np.where(m > 1.0, z, y))

    def initial_constant(self, y):
        return 1.0 if np.sum(self.check_targets(y)) >= 0 else -1.0

    def _breakpoints(self, y, p, g):
        return (1.0 - y * p) / (y * g)


LOSSES: dict[str, type[Loss]] = {
    cls.name: cls
    for cls in (LeastSquares, LeastAbsoluteDeviations, Pinball, Exponential, Logistic, Hinge)
}
_ALIASES = {"ls": "least_squares", "l2": "least_squares", "squared": "least_squares",
            "least_absolute_deviations": "lad", "l1": "lad", "quantile": "pinball"}


def make_loss(name: str, **params) -> Loss:
    """Build a loss from its tag, e.g. ``make_loss("pinball", tau=0.9)``."""
    key = name.lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in LOSSES:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}")
    params = {k: v for k, v in params.items() if v is not None}
    try:
        return LOSSES[key](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {key} loss: {params}") from exc


def loss_from_dict(d: dict) -> Loss:
    d = dict(d)
    return make_loss(d.pop("loss"), **d)
