"""Pairwise cosine-similarity objective with a geometry-preservation target.

The training target for a same-class pair interpolates, via lambda in [0, 1],
between 1 (pull the pair together) and the raw-feature cosine (keep the pair's
angle as it was). Different-class pairs always target -1. The objective over a
pair set P is

    J = 1/2 * sum_{(i,j) in P} (C_ij - t_ij)^2,

with C_ij the cosine of the transformed pair. Pairs are unordered (i < j, each
counted once); summing ordered pairs instead would exactly double J and every
gradient, so the minimizer is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateVectorError

EPS_NORM = 1e-12

LOSS_MODES = ("gdt", "metric-learning", "classification", "hinge-dml", "smoothed-dml")


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not (0.0 <= lam <= 1.0):
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    return lam


def checked_norms(Y) -> np.ndarray:
    """Row norms of Y, raising if any row is too short to define a direction."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    norms = np.linalg.norm(Y, axis=1)
    bad = np.flatnonzero(~(norms > EPS_NORM))
    if bad.size:
        i = int(bad[0])
        raise DegenerateVectorError(
            f"vector {i} has near-zero norm {norms[i]:.3e}", index=i
        )
    return norms


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between u and v, clamped to [-1, 1] against rounding."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if not nu > EPS_NORM:
        raise DegenerateVectorError(f"first vector has near-zero norm {nu:.3e}")
    if not nv > EPS_NORM:
        raise DegenerateVectorError(f"second vector has near-zero norm {nv:.3e}")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_matrix(Y) -> np.ndarray:
    """All pairwise cosines of the rows of Y, clamped to [-1, 1]."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    norms = checked_norms(Y)
    Yhat = Y / norms[:, None]
    return np.clip(Yhat @ Yhat.T, -1.0, 1.0)


def gdt_target(x_i, x_j, same_class: bool, lam: float) -> float:
    """Pair target: lambda + (1 - lambda) * cos(x_i, x_j) if same class, else -1.

    lambda = 1 recovers the pure metric-learning target (1 for every same-class
    pair); lambda = 0 recovers the angle-preserving classification target.
    """
    lam = _check_lambda(lam)
    if not same_class:
        return -1.0
    return lam + (1.0 - lam) * cosine_similarity(x_i, x_j)


@dataclass(frozen=True)
class PairTarget:
    """An unordered index pair with its +/-1 label and training target."""

    i: int
    j: int
    label: int  # +1 same class, -1 different
    target: float

    def __post_init__(self):
        if self.i == self.j:
            raise ConfigError(f"pair indices must differ, got ({self.i}, {self.j})")
        if self.label not in (+1, -1):
            raise ConfigError(f"pair label must be +1 or -1, got {self.label}")
        if self.label == -1 and self.target != -1.0:
            raise ConfigError("different-class pairs must target -1")
        if not (-1.0 <= self.target <= 1.0):
            raise ConfigError(f"target must lie in [-1, 1], got {self.target}")


@dataclass(frozen=True)
class LossConfig:
    """Which pairwise loss to optimize; the two pedagogic modes pin lambda."""

    lam: float = 1.0
    mode: str = "gdt"

    def __post_init__(self):
        if self.mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss mode {self.mode!r}, expected one of {LOSS_MODES}")
        _check_lambda(self.lam)

    def effective_lambda(self) -> float:
        if self.mode == "metric-learning":
            return 1.0
        if self.mode == "classification":
            return 0.0
        return self.lam


def gdt_loss(Y, pairs) -> float:
    """J = 1/2 * sum over pairs of (cosine(y_i, y_j) - target)^2."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    norms = checked_norms(Y)
    Yhat = Y / norms[:, None]
    total = 0.0
    for p in pairs:
        c = float(np.clip(np.dot(Yhat[p.i], Yhat[p.j]), -1.0, 1.0))
        total += (c - p.target) ** 2
    return 0.5 * total


def gdt_loss_grad(Y, pairs) -> np.ndarray:
    """dJ/dy_i for every sample, accumulated over all pairs containing it.

    Each pair (i, j) with residual r = C_ij - t_ij contributes
        r / ||y_i|| * (yhat_j - C_ij * yhat_i)   to sample i,
    and the mirrored term to sample j. The bracket is the tangent-space
    projection of yhat_j, so each per-pair term is orthogonal to y_i.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    norms = checked_norms(Y)
    Yhat = Y / norms[:, None]
    grad = np.zeros_like(Y)
    for p in pairs:
        yi, yj = Yhat[p.i], Yhat[p.j]
        c = float(np.clip(np.dot(yi, yj), -1.0, 1.0))
        r = c - p.target
        grad[p.i] += (r / norms[p.i]) * (yj - c * yi)
        grad[p.j] += (r / norms[p.j]) * (yi - c * yj)
    return grad


def pair_target_matrix(X, labels, lam: float) -> np.ndarray:
    """Symmetric matrix of pair targets over all rows of X (diagonal zeroed).

    Vectorized equivalent of building every unordered PairTarget; targets are
    computed from the raw features X once and stay fixed during training.
    """
    lam = _check_lambda(lam)
    labels = np.asarray(labels)
    C = cosine_matrix(X)
    same = labels[:, None] == labels[None, :]
    T = np.where(same, lam + (1.0 - lam) * C, -1.0)
    np.fill_diagonal(T, 0.0)
    return T


def pairwise_objective_and_grad(Y, T) -> tuple[float, np.ndarray]:
    """Objective and per-sample gradient over all unordered pairs, vectorized.

    `T` is a symmetric target matrix (diagonal ignored). Equivalent to
    gdt_loss/gdt_loss_grad on the full pair list; used as the training fast
    path. With R = C - T (diagonal zeroed):

        J = 1/2 * sum_{i<j} R_ij^2
        dJ/dy_i = (R @ Yhat - diag((R*C) @ 1) @ Yhat)_i / ||y_i||
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    norms = checked_norms(Y)
    Yhat = Y / norms[:, None]
    C = np.clip(Yhat @ Yhat.T, -1.0, 1.0)
    R = C - T
    np.fill_diagonal(R, 0.0)
    J = 0.25 * float(np.sum(R * R))  # each unordered pair appears twice in R
    s = np.sum(R * C, axis=1)
    grad = (R @ Yhat - s[:, None] * Yhat) / norms[:, None]
    return J, grad


def dml_loss(distance: float, pair_label: int, variant: str = "hinge") -> float:
    """Baseline pairwise losses over a distance d: hinge and smoothed hinge.

    hinge:    max(-l * (1 - d), 0)
    smoothed: log(1 + exp(-l * (1 - d)))
    """
    if pair_label not in (+1, -1):
        raise ConfigError(f"pair label must be +1 or -1, got {pair_label}")
    distance = float(distance)
    if not distance >= 0.0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    z = -pair_label * (1.0 - distance)
    if variant == "hinge":
        return max(z, 0.0)
    if variant == "smoothed":
        return float(np.logaddexp(0.0, z))
    raise ConfigError(f"unknown dml variant {variant!r}")


def dml_pair_loss(Y, pairs, variant: str = "hinge") -> float:
    """Sum of the baseline loss over pairs, with Euclidean distances between rows."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    total = 0.0
    for p in pairs:
        d = float(np.linalg.norm(Y[p.i] - Y[p.j]))
        total += dml_loss(d, p.label, variant)
    return total


def dml_pair_loss_grad(Y, pairs, variant: str = "hinge") -> np.ndarray:
    """Per-sample gradient of dml_pair_loss, ready for the shared backprop path.

    d(distance)/dy_i = (y_i - y_j) / d; the hinge subgradient at its kink is
    taken as 0, and coincident pairs (d = 0) contribute no gradient.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    grad = np.zeros_like(Y)
    for p in pairs:
        diff = Y[p.i] - Y[p.j]
        d = float(np.linalg.norm(diff))
        if d == 0.0:
            continue
        z = -p.label * (1.0 - d)
        if variant == "hinge":
            dg_dd = float(p.label) if z > 0.0 else 0.0
        elif variant == "smoothed":
            dg_dd = float(p.label) / (1.0 + np.exp(-z))
        else:
            raise ConfigError(f"unknown dml variant {variant!r}")
        grad[p.i] += dg_dd * diff / d
        grad[p.j] -= dg_dd * diff / d
    return grad
