"""Norm-ball constrained kernel empirical risk minimization.

Training solves

    min_alpha  (1/n) sum_j loss((G alpha)_j, y_j)   s.t.  alpha' G alpha <= B^2

by projected subgradient descent in the function space induced by the kernel:
the subgradient of the empirical risk at f is (1/n) sum_j loss'_j K(x_j, .),
whose coefficient representation is simply s/n, and projection onto the
radius-B ball is an exact radial scaling.  Iterates stay feasible throughout
and the incumbent (best objective seen) is returned.  Multiclass runs
one-vs-all over a shared Gram matrix.  Training is sequential and
deterministic for a fixed config; returned predictors are immutable and safe
to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .kernel import GramMatrix, KernelStack, NORM_TOL, gram

LOSS_KINDS = ("hinge", "logistic", "squared")


class SolverDivergenceError(ArithmeticError):
    """Objective became non-finite during training."""

    def __init__(self, message, iteration, objective, alpha_norm):
        super().__init__(message)
        self.iteration = iteration
        self.objective = objective
        self.alpha_norm = alpha_norm


class DegenerateClassError(ValueError):
    """A class index in the requested range never occurs in the labels."""


class NumericalError(ArithmeticError):
    """A quantity that is nonnegative in exact arithmetic came out negative."""


@dataclass(frozen=True)
class Loss:
    """Convex loss with its subgradient and the constants used by the
    sample-size bound: Lipschitz constant ``rho`` in the prediction argument
    and range bound ``range_bound`` over predictions in [-B, B]."""

    kind: str
    rho: float
    range_bound: float

    def value(self, pred: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == "hinge":
            return np.maximum(0.0, 1.0 - y * pred)
        if self.kind == "logistic":
            return np.logaddexp(0.0, -y * pred)
        return (pred - y) ** 2

    def subgradient(self, pred: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == "hinge":
            # at the kink (margin exactly 1) take the zero element
            return np.where(1.0 - y * pred > 0.0, -y, 0.0)
        if self.kind == "logistic":
            return -y * np.exp(-np.logaddexp(0.0, y * pred))
        return 2.0 * (pred - y)


def make_loss(kind: str, B: float) -> Loss:
    """Loss with constants instantiated for the budget B."""
    if kind == "hinge":
        return Loss(kind, rho=1.0, range_bound=1.0 + B)
    if kind == "logistic":
        # log(1 + e^B), computed stably for large B
        return Loss(kind, rho=1.0, range_bound=float(np.logaddexp(0.0, B)))
    if kind == "squared":
        # constants for predictions clipped to [-B, B] against labels in [-1, 1]
        return Loss(kind, rho=2.0 * (B + 1.0), range_bound=(B + 1.0) ** 2)
    raise ValueError(f"unknown loss {kind!r}; supported: {', '.join(LOSS_KINDS)}")


@dataclass(frozen=True)
class TrainConfig:
    depth: int
    budget: float
    loss: str = "hinge"
    max_iters: int = 5000
    #: initial step size; defaults to budget / rho
    eta0: Optional[float] = None
    #: stop when the best objective improves by less than this (relative)
    #: over ``patience`` iterations
    tolerance: float = 1e-6
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}")


def project(alpha: np.ndarray, G, B: float) -> np.ndarray:
    """Exact projection onto the RKHS ball of radius B.

    Scaling by B / sqrt(alpha' G alpha) is the metric projection because the
    quadratic form is the squared RKHS norm of the represented function.
    """
    Gm = G.entries if isinstance(G, GramMatrix) else np.asarray(G, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    q = float(alpha @ (Gm @ alpha))
    if q < -1e-8:
        raise NumericalError(f"quadratic form came out {q:.3g} < -1e-8; Gram is not PSD")
    q = max(q, 0.0)
    if q <= B * B:
        return alpha
    return alpha * (B / math.sqrt(q))


def _check_unit_rows(X: np.ndarray):
    norms = np.linalg.norm(X, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > 1e-6)[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"training rows must be unit-norm; row {i} has norm {norms[i]:.9g} "
            f"({bad.size} offending rows)")


def _check_training_inputs(X: np.ndarray, y: np.ndarray):
    _check_unit_rows(X)
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("binary labels must be +1 or -1")


def _minimize_on_gram(G: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                      loss: Loss,
                      callback: Optional[Callable[[int, float, float], None]] = None,
                      ) -> np.ndarray:
    """Projected subgradient descent; returns the best feasible iterate."""
    n = y.shape[0]
    B = cfg.budget
    alpha = np.zeros(n)
    if B == 0.0:
        if callback is not None:
            callback(0, float(np.mean(loss.value(alpha, y))), float(np.mean(loss.value(alpha, y))))
        return alpha
    eta0 = cfg.eta0 if cfg.eta0 is not None else B / loss.rho
    best = alpha.copy()
    best_obj = math.inf
    window_best = math.inf
    for t in range(1, cfg.max_iters + 1):
        p = G @ alpha
        q = float(alpha @ p)
        if q > B * B:
            c = B / math.sqrt(q)
            alpha *= c
            p *= c
        obj = float(np.mean(loss.value(p, y)))
        if not math.isfinite(obj):
            raise SolverDivergenceError(
                f"objective became {obj} at iteration {t} "
                f"(|alpha| = {float(np.linalg.norm(alpha)):.3g})",
                iteration=t, objective=obj, alpha_norm=float(np.linalg.norm(alpha)))
        if obj < best_obj:
            best_obj = obj
            best = alpha.copy()
        if callback is not None:
            callback(t, obj, best_obj)
        if t % cfg.patience == 0:
            if window_best - best_obj <= cfg.tolerance * max(abs(window_best), 1e-12):
                break
            window_best = best_obj
        s = loss.subgradient(p, y)
        if not np.any(s):
            break  # zero subgradient: the incumbent cannot improve
        alpha = alpha - (eta0 / math.sqrt(t)) * (s / n)
    return project(best, G, B)


@dataclass(frozen=True)
class KernelPredictor:
    """Binary predictor ``f(x) = sum_i alpha_i K_depth(x_i, x)``."""

    support: np.ndarray
    alpha: np.ndarray
    depth: int
    budget: float
    loss_kind: str

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        s.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "alpha", a)

    def decision(self, x) -> float:
        return float(self.decision_many(np.asarray(x, dtype=float)[None, :])[0])

    def decision_many(self, Xe) -> np.ndarray:
        K = _cross_kernel(self.depth, np.asarray(Xe, dtype=float), self.support)
        return K @ self.alpha


@dataclass(frozen=True)
class OneVsAllPredictor:
    """Per-class binary predictors sharing one support set; argmax wins,
    ties broken toward the smallest class index."""

    support: np.ndarray
    alphas: np.ndarray  # (n_classes, n_support)
    classes: tuple[int, ...]
    depth: int
    budget: float
    loss_kind: str

    def scores_many(self, Xe) -> np.ndarray:
        K = _cross_kernel(self.depth, np.asarray(Xe, dtype=float), self.support)
        return K @ self.alphas.T

    def scores(self, x) -> np.ndarray:
        return self.scores_many(np.asarray(x, dtype=float)[None, :])[0]

    def classify_many(self, Xe) -> np.ndarray:
        idx = np.argmax(self.scores_many(Xe), axis=1)
        return np.array([self.classes[i] for i in idx])

    def classify(self, x) -> int:
        return int(self.classify_many(np.asarray(x, dtype=float)[None, :])[0])


def _cross_kernel(depth: int, Xe: np.ndarray, Xs: np.ndarray) -> np.ndarray:
    if Xe.shape[1] != Xs.shape[1]:
        raise ValueError(
            f"dimension mismatch: inputs have {Xe.shape[1]} features, "
            f"support points have {Xs.shape[1]}")
    norms = np.linalg.norm(Xe, axis=1)
    bad = np.nonzero(norms > 1.0 + NORM_TOL)[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"evaluation row {i} has norm {norms[i]:.9g} > 1")
    K = np.clip(Xe @ Xs.T, -1.0, 1.0)
    for _ in range(depth):
        K = 1.0 / (2.0 - K)
    return K


def train(X, y, cfg: TrainConfig,
          callback: Optional[Callable[[int, float, float], None]] = None) -> KernelPredictor:
    """Binary constrained kernel ERM; labels must be +-1."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_training_inputs(X, y)
    G = gram(KernelStack(cfg.depth), X)
    loss = make_loss(cfg.loss, cfg.budget)
    alpha = _minimize_on_gram(G.entries, y, cfg, loss, callback)
    return KernelPredictor(support=X, alpha=alpha, depth=cfg.depth,
                           budget=cfg.budget, loss_kind=cfg.loss)


def train_multiclass(X, labels, cfg: TrainConfig,
                     callback: Optional[Callable[[int, int, float, float], None]] = None,
                     n_classes: Optional[int] = None) -> OneVsAllPredictor:
    """One-vs-all training over class indices 0..C-1.

    C defaults to max label + 1; pass ``n_classes`` to pin it (labels must
    then cover every index below it).  The Gram matrix is computed once and
    shared across the per-class runs.
    ``callback(class_index, iteration, objective, best_objective)``.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if labels.ndim != 1 or len(labels) != len(X):
        raise ValueError("labels must be one integer per row of X")
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if len(labels) else 0
    elif len(labels) and int(labels.max()) >= n_classes:
        raise ValueError(
            f"labels reach {int(labels.max())} but only {n_classes} classes requested")
    if n_classes < 2:
        raise ValueError("multiclass training needs at least 2 classes")
    present = set(int(v) for v in np.unique(labels))
    missing = [c for c in range(n_classes) if c not in present]
    if missing:
        raise DegenerateClassError(
            f"classes {missing} never occur in the training labels")
    _check_unit_rows(X)
    G = gram(KernelStack(cfg.depth), X)
    loss = make_loss(cfg.loss, cfg.budget)
    alphas = np.zeros((n_classes, len(X)))
    for c in range(n_classes):
        yb = np.where(labels == c, 1.0, -1.0)
        cb = (lambda t, o, b, _c=c: callback(_c, t, o, b)) if callback else None
        alphas[c] = _minimize_on_gram(G.entries, yb, cfg, loss, cb)
    return OneVsAllPredictor(support=X, alphas=alphas,
                             classes=tuple(range(n_classes)), depth=cfg.depth,
                             budget=cfg.budget, loss_kind=cfg.loss)


def predict(predictor: KernelPredictor, x) -> float:
    """Decision value at x; bounded by B on the unit ball via Cauchy-Schwarz."""
    return predictor.decision(x)


def constraint_value(predictor: KernelPredictor) -> float:
    """alpha' G alpha for the stored support set."""
    G = gram(KernelStack(predictor.depth), predictor.support)
    return float(predictor.alpha @ (G.entries @ predictor.alpha))


def sample_size(B: float, eps: float, delta: float, loss: Loss) -> int:
    """Smallest n with ``2*rho*B*sqrt(2/n) + M*sqrt(log(1/delta)/(2n)) <= eps``.

    The first term is twice the complexity bound sqrt(2 B^2 / n) scaled by the
    loss Lipschitz constant; the second is the deviation term at confidence
    delta with loss range M.
    """
    if not (0.0 < eps < 1.0) or not (0.0 < delta < 1.0):
        raise ValueError("eps and delta must lie in (0, 1)")
    if B <= 0:
        raise ValueError("B must be positive")
    a = 2.0 * loss.rho * B * math.sqrt(2.0)
    b = loss.range_bound * math.sqrt(math.log(1.0 / delta) / 2.0)

    def bound(n: int) -> float:
        return (a + b) / math.sqrt(n)

    n = max(1, math.ceil(((a + b) / eps) ** 2))
    while bound(n) > eps:
        n += 1
    while n > 1 and bound(n - 1) <= eps:
        n -= 1
    return n
