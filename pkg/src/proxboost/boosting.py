"""Gradient, proximal and accelerated boosting with regression trees.

All variants share one loop. At step ``t`` the pseudo-residuals are computed
at the interpolated point ``v_t``, a tree is fitted to them by least squares,
a line search from the current model ``f_t`` sets the step, and

    x_{t+1} = v_t + nu * gamma_{t+1} * g_{t+1}(X)
    v_{t+1} = x_{t+1} + alpha_{t+1} * (x_{t+1} - x_t)

Non-accelerated variants keep ``alpha == 0`` so that ``v_t == x_t``. The
ensemble weights follow the recursion

    w^{(t+1)} = (1 + alpha_t) * w^{(t)} - alpha_t * w^{(t-1)},  w_{t+1} = nu * gamma_{t+1}.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .data import DatasetSplit
from .errors import DataError, NumericError
from .losses import Loss, Task, loss_from_dict
from .trees import RegressionTree, fit_tree, presort

log = logging.getLogger(__name__)

MODEL_FORMAT = "proxboost-model"
MODEL_VERSION = 1


class Variant(str, enum.Enum):
    GRADIENT = "gradient"
    GRADIENT_ACCELERATED = "gradient_accelerated"
    PROXIMAL = "proximal"
    PROXIMAL_ACCELERATED = "proximal_accelerated"
    GRADIENT_RESIDUAL = "gradient_residual"

    @property
    def accelerated(self) -> bool:
        return self in (Variant.GRADIENT_ACCELERATED, Variant.PROXIMAL_ACCELERATED)

    @property
    def proximal(self) -> bool:
        return self in (Variant.PROXIMAL, Variant.PROXIMAL_ACCELERATED)


class LineSearchMode(str, enum.Enum):
    GLOBAL = "global"
    PER_LEAF = "leaf"


@dataclass(frozen=True)
class BoostConfig:
    variant: Variant = Variant.PROXIMAL
    T: int = 100
    nu: float = 1.0
    lam: float | None = None
    max_depth: int = 3
    min_samples_leaf: int = 1
    line_search: LineSearchMode = LineSearchMode.PER_LEAF
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "line_search", LineSearchMode(self.line_search))
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.variant.proximal:
            if self.lam is None or not self.lam > 0:
                raise ValueError(f"{self.variant.value} needs a positive proximal step lambda")
        elif self.lam is not None:
            raise ValueError(f"lambda only applies to proximal variants, not {self.variant.value}")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth and min_samples_leaf must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["line_search"] = self.line_search.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoostConfig":
        return cls(**d)


# -- Nesterov momentum ---------------------------------------------------------

@dataclass(frozen=True)
class NesterovState:
    t: int = 0
    beta: float = 0.0
    alpha: float = 0.0


def nesterov_next(state: NesterovState) -> NesterovState:
    """Advance the momentum sequence; ``alpha`` is forced to 0 for ``t <= 1``."""
    beta = (1.0 + math.sqrt(1.0 + 4.0 * state.beta ** 2)) / 2.0
    t = state.t + 1
    alpha = 0.0 if t <= 1 else (state.beta - 1.0) / beta
    return NesterovState(t, beta, alpha)


def momentum_sequence(T: int) -> np.ndarray:
    """``[alpha_0, ..., alpha_{T-1}]``, the momentum used by each of T steps."""
    out = np.zeros(T)
    state = NesterovState()
    for t in range(1, T):
        state = nesterov_next(state)
        out[t] = state.alpha
    return out


# -- weights -------------------------------------------------------------------

def closed_form_weights(gammas, alphas, nu: float) -> np.ndarray:
    """Final weights ``[w_0, ..., w_T]`` from the step and momentum histories.

    ``gammas[t - 1]`` is the line-search step of learner ``t`` and
    ``alphas[t]`` the momentum applied when forming ``f_{t+1}`` (so
    ``alphas[0]`` never matters). Each learner's weight is its own step
    times ``1 + sum_{j=t}^{T-1} prod_{k=t}^{j} alpha_k``.
    """
    gammas = np.asarray(gammas, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    T = gammas.size
    if alphas.size != T:
        raise ValueError("need one momentum per step")
    w = np.empty(T + 1)
    w[0] = 1.0
    for t in range(1, T + 1):
        factor, prod = 1.0, 1.0
        for j in range(t, T):
            prod *= alphas[j]
            factor += prod
        w[t] = factor * nu * gammas[t - 1]
    return w


def recursive_weights(gammas, alphas, nu: float) -> np.ndarray:
    """Same weights as :func:`closed_form_weights`, built step by step."""
    w_prev = np.array([1.0])
    w_cur = np.array([1.0])
    for gamma, alpha in zip(gammas, alphas):
        w_prev, w_cur = w_cur, _next_weights(w_cur, w_prev, alpha, nu * gamma)
    return w_cur


def _next_weights(w_cur, w_prev, alpha, new_weight):
    prev = np.zeros_like(w_cur)
    prev[:w_prev.size] = w_prev
    return np.append((w_cur - prev) * (1.0 + alpha) + prev, new_weight)


# -- model --------------------------------------------------------------------

@dataclass
class Ensemble:
    loss: Loss
    config: BoostConfig
    initial_constant: float
    trees: list = field(default_factory=list)
    weights: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    n_features: int | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.size != len(self.trees) + 1:
            raise ValueError("need one weight per learner, the constant included")

    @property
    def learners(self) -> list:
        return [RegressionTree.constant(self.initial_constant)] + list(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-D array")
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise DataError(f"model expects {self.n_features} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.weights[0] * self.initial_constant)
        for w, tree in zip(self.weights[1:], self.trees):
            out += w * tree.predict(X)
        return out

    def classify(self, X) -> np.ndarray:
        return np.where(self.predict(X) >= 0, 1.0, -1.0)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "loss": self.loss.to_dict(),
            "config": self.config.to_dict(),
            "n_features": self.n_features,
            "initial_constant": self.initial_constant,
            "trees": [t.to_dict() for t in self.trees],
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model file (format={d.get('format')!r}, version={d.get('version')!r})")
        return cls(
            loss=loss_from_dict(d["loss"]),
            config=BoostConfig.from_dict(d["config"]),
            initial_constant=float(d["initial_constant"]),
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            weights=np.array(d["weights"], dtype=float),
            n_features=d.get("n_features"),
        )


# -- trace --------------------------------------------------------------------

@dataclass
class TraceRecord:
    t: int
    train_loss: float
    val_loss: float | None = None
    gamma: float | None = None
    alpha: float | None = None
    leaf_gammas: list | None = None
    clamped: bool = False


@dataclass
class FitTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def train_loss(self) -> np.ndarray:
        return self.column("train_loss")

    @property
    def val_loss(self) -> np.ndarray:
        return self.column("val_loss")

    @property
    def clamped(self) -> bool:
        return any(r.clamped for r in self.records)

    def to_csv(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))

        lines = ["t,train_loss,val_loss,gamma,alpha"]
        for r in self.records:
            lines.append(",".join([str(r.t), fmt(r.train_loss), fmt(r.val_loss),
                                   fmt(r.gamma), fmt(r.alpha)]))
        return "\n".join(lines) + "\n"


def early_stop_select(trace: FitTrace) -> int:
    """Iteration with the smallest validation loss (first one on ties)."""
    vals = [r.val_loss for r in trace.records]
    if not vals or any(v is None for v in vals):
        raise ValueError("early stopping needs validation losses on every iteration")
    return int(np.argmin(vals))


# -- fitting -------------------------------------------------------------------

@dataclass
class FitState:
    """Snapshot handed to the ``callback`` of :func:`fit` after every step.

    ``alpha`` is the momentum that produced ``v = x + alpha * (x - x_prev)``.
    """

    t: int
    x: np.ndarray
    x_prev: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    weights_prev: np.ndarray
    trees: list
    alpha: float
    trace: "FitTrace"


def compute_direction(variant: Variant, loss: Loss, targets, point, lam=None, prev_error=None):
    """Pseudo-residuals at ``point`` and the error carried to the next step.

    Gradient directions are rescaled by ``n`` so they live on the per-sample
    scale of the proximal residuals. For the residual-corrected variant the
    returned carry is the corrected direction itself; the caller subtracts
    the fitted tree from it.
    """
    variant = Variant(variant)
    n = np.asarray(targets).size
    if variant.proximal:
        return loss.prox_residual(targets, point, lam), None
    r = -n * loss.subgradient(targets, point)
    if variant is Variant.GRADIENT_RESIDUAL:
        if prev_error is not None:
            r = r + prev_error
        return r, r
    return r, None


def _leaf_line_search(loss, y, x, tree, leaf_of):
    """Per-leaf steps; returns the rescaled tree, the steps and a clamp flag."""
    values = tree.value.copy()
    gammas, clamped = [], False
    for leaf in tree.leaves:
        rows = leaf_of == leaf
        g = tree.value[leaf]
        gamma, c = loss.search_step(y[rows], x[rows], np.full(int(rows.sum()), g))
        values[leaf] = gamma * g
        gammas.append(gamma)
        clamped |= c
    return tree.with_values(values), gammas, clamped


def fit(config: BoostConfig, loss: Loss, train: DatasetSplit, val: DatasetSplit | None = None,
        callback: Callable[[FitState], None] | None = None):
    """Run ``config.T`` boosting steps; returns ``(Ensemble, FitTrace)``."""
    X, y = train.features, loss.check_targets(train.targets)
    if train.n == 0:
        raise DataError("empty training set")
    if val is not None and val.n == 0:
        val = None
    if val is not None:
        Xv, yv = val.features, loss.check_targets(val.targets)
        if Xv.shape[1] != X.shape[1]:
            raise DataError("validation and training features differ in dimension")
    order = presort(X)
    variant = config.variant
    nu = config.nu

    c0 = loss.initial_constant(y)
    x = np.full(y.size, c0)
    x_prev = x.copy()
    v = x
    xv = np.full(yv.size, c0) if val is not None else None
    xv_prev = xv.copy() if val is not None else None
    w_cur = np.array([1.0])
    w_prev = np.array([1.0])
    trees = []
    momentum = NesterovState()
    alpha = 0.0  # momentum applied in the current step
    carry = None

    trace = FitTrace([TraceRecord(0, loss.risk(y, x), loss.risk(yv, xv) if val is not None else None)])
    for t in range(config.T):
        r, carry = compute_direction(variant, loss, y, v, config.lam, carry)
        tree = fit_tree(X, r, config.max_depth, config.min_samples_leaf, order=order)
        leaf_of = tree.apply(X)
        if variant is Variant.GRADIENT_RESIDUAL:
            carry = carry - tree.value[leaf_of]

        leaf_gammas = None
        if config.line_search is LineSearchMode.PER_LEAF:
            tree, leaf_gammas, clamped = _leaf_line_search(loss, y, x, tree, leaf_of)
            gamma = 1.0
        else:
            gamma, clamped = loss.search_step(y, x, tree.value[leaf_of])
        if clamped:
            log.warning("step %d: line search hit the |gamma| <= 1e6 safeguard", t + 1)
        step = nu * gamma
        h = tree.value[leaf_of]

        x_new = v + step * h
        if variant.accelerated:
            momentum = nesterov_next(momentum)
            alpha_next = momentum.alpha
        else:
            alpha_next = 0.0
        v = x_new + alpha_next * (x_new - x)
        w_prev, w_cur = w_cur, _next_weights(w_cur, w_prev, alpha, step)
        if val is not None:
            xv_new = xv + alpha * (xv - xv_prev) + step * tree.predict(Xv)
            xv_prev, xv = xv, xv_new
        x_prev, x = x, x_new
        trees.append(tree)

        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite predictions at iteration {t + 1}")
        train_loss = loss.risk(y, x)
        val_loss = loss.risk(yv, xv) if val is not None else None
        if not math.isfinite(train_loss):
            raise NumericError(f"non-finite training loss at iteration {t + 1}")
        trace.records.append(TraceRecord(t + 1, train_loss, val_loss, gamma, alpha,
                                         leaf_gammas, clamped))
        if callback is not None:
            callback(FitState(t + 1, x, x_prev, v, w_cur.copy(), w_prev.copy(), trees, alpha_next, trace))
        alpha = alpha_next

    ensemble = Ensemble(loss, config, c0, trees, w_cur, n_features=X.shape[1])
    return ensemble, trace
