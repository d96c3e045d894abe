"""
Two-sample logistic regression for the importance ratio between dataset
controls and the current controller's outputs.

Dataset controls carry label z=+1, controller outputs z=-1. The fitted
weights w give beta(u) = P(z=-1|u) / P(z=+1|u) = exp(-w^T [u; 1]).
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from app.core.errors import PreconditionError, StructuralError

logger = logging.getLogger("propensity")

DEFAULT_C = 1e-3
DEFAULT_ITERS = 100
DEFAULT_STEP = 0.5
GRAD_TOL = 1e-6
BETA_CAP = 1e12


@dataclass
class LogisticModel:
    w: np.ndarray  # last entry multiplies the constant-1 bias feature
    c: float

    @property
    def feature_dim(self) -> int:
        return self.w.shape[0] - 1


@dataclass
class PropensityReport:
    model: LogisticModel
    beta_raw: np.ndarray
    beta_tilde: np.ndarray
    accuracy: float


def _as_features(points, what: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise StructuralError(f"{what}: expected a list of feature vectors, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise PreconditionError(f"{what}: class has no samples")
    return arr


def _with_bias(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def logistic_objective(w: np.ndarray, pos: np.ndarray, neg: np.ndarray, c: float) -> float:
    """(1/2m) sum log(1 + exp(-z w^T x)) + c ||w||^2 over both classes (bias features included)."""
    n = pos.shape[0] + neg.shape[0]
    loss = np.logaddexp(0.0, -(pos @ w)).sum() + np.logaddexp(0.0, neg @ w).sum()
    return float(loss / n + c * (w @ w))


def logistic_gradient(w: np.ndarray, pos: np.ndarray, neg: np.ndarray, c: float) -> np.ndarray:
    n = pos.shape[0] + neg.shape[0]
    # Each class reduced separately so mirrored classes cancel exactly
    g_pos = pos.T @ expit(-(pos @ w))
    g_neg = neg.T @ expit(neg @ w)
    return (g_neg - g_pos) / n + 2.0 * c * w


def fit_logistic(
    pos: Sequence,
    neg: Sequence,
    c: float = DEFAULT_C,
    iters: int = DEFAULT_ITERS,
    step: float = DEFAULT_STEP,
    tol: float = GRAD_TOL,
) -> LogisticModel:
    """
    Full-batch gradient descent from w = 0 on the regularised logistic loss.

    Stops when the gradient norm drops below tol or after iters steps. A step
    that would raise the objective is halved until it does not.
    """
    if c < 0:
        raise PreconditionError(f"regularisation must be non-negative, got {c}")
    pos_x = _as_features(pos, "positive class")
    neg_x = _as_features(neg, "negative class")
    if pos_x.shape[1] != neg_x.shape[1]:
        raise StructuralError(f"feature dimensions differ: {pos_x.shape[1]} vs {neg_x.shape[1]}")
    pos_x, neg_x = _with_bias(pos_x), _with_bias(neg_x)

    w = np.zeros(pos_x.shape[1])
    f = logistic_objective(w, pos_x, neg_x, c)
    for _ in range(iters):
        g = logistic_gradient(w, pos_x, neg_x, c)
        if np.linalg.norm(g) < tol:
            break
        lr = step
        while True:
            w_new = w - lr * g
            f_new = logistic_objective(w_new, pos_x, neg_x, c)
            if f_new <= f or lr < 1e-12:
                break
            lr *= 0.5
        if f_new > f:
            break
        w, f = w_new, f_new
    return LogisticModel(w=w, c=c)


def beta(model: LogisticModel, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (model.feature_dim,):
        raise StructuralError(f"feature vector of shape {x.shape}, model expects ({model.feature_dim},)")
    return float(beta_many(model, x[None, :])[0])


def beta_many(model: LogisticModel, xs) -> np.ndarray:
    xs = _as_features(xs, "features")
    if xs.shape[1] != model.feature_dim:
        raise StructuralError(f"features of width {xs.shape[1]}, model expects {model.feature_dim}")
    logits = -(_with_bias(xs) @ model.w)
    # Clamped to [1/cap, cap] so beta stays finite and strictly positive
    bound = np.log(BETA_CAP)
    return np.exp(np.clip(logits, -bound, bound))


def normalize_beta(beta_raw) -> np.ndarray:
    """Min-max map onto [0, 1]; a constant vector maps to all ones."""
    b = np.asarray(beta_raw, dtype=np.float64).ravel()
    if b.size == 0:
        raise PreconditionError("cannot normalise an empty beta vector")
    lo, hi = b.min(), b.max()
    if hi == lo:
        return np.ones_like(b)
    return (b - lo) / (hi - lo)


def accuracy(model: LogisticModel, pos, neg) -> float:
    """Fraction of points classified correctly, predicting z=+1 when P(z=+1|x) >= 0.5."""
    pos_x, neg_x = _with_bias(_as_features(pos, "positive class")), _with_bias(_as_features(neg, "negative class"))
    correct = np.count_nonzero(pos_x @ model.w >= 0.0) + np.count_nonzero(neg_x @ model.w < 0.0)
    return correct / (pos_x.shape[0] + neg_x.shape[0])


def report(
    dataset_controls: Sequence,
    policy_controls: Sequence,
    c: float = DEFAULT_C,
    iters: int = DEFAULT_ITERS,
) -> PropensityReport:
    """Fit the classifier on one mini-batch and score every dataset control."""
    data = _as_features(dataset_controls, "dataset controls")
    policy = _as_features(policy_controls, "policy controls")
    if data.shape[0] != policy.shape[0]:
        raise PreconditionError(
            f"dataset and policy controls must pair up one-to-one, got {data.shape[0]} and {policy.shape[0]}"
        )
    model = fit_logistic(data, policy, c=c, iters=iters)
    beta_raw = beta_many(model, data)
    return PropensityReport(
        model=model,
        beta_raw=beta_raw,
        beta_tilde=normalize_beta(beta_raw),
        accuracy=accuracy(model, data, policy),
    )
