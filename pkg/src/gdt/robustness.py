"""Empirical robustness diagnostics.

The pipeline: build a greedy cover of the raw feature space at radius gamma/2,
intersect the cover cells with the class labels to get a partition whose cells
are label-pure with diameter <= gamma, measure the worst within-cell distance
distortion delta of the transform, and report the robustness margin

    epsilon = 2 * A * (gamma + delta)

together with sqrt(K / n), the two quantities controlling how far the training
pair loss can drift from the expected one (the constant multiplying sqrt(K/n)
is unknown, so the two terms are never folded into one number).

The metric rho defaults to angular distance arccos(cos(u, v)): raw cosine
"distance" violates the triangle inequality, while the angle is a true metric
on directions and is invariant to positive rescaling, consistent with a
cosine-based loss. Euclidean distance is available for diagnostics of the
distance-based baselines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .loss import checked_norms, cosine_similarity
from .network import apply_transform


def angular_distance(u, v) -> float:
    """arccos of the clamped cosine similarity; a metric on directions, in [0, pi]."""
    return float(np.arccos(cosine_similarity(u, v)))


def pairwise_angular(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    norms = checked_norms(X)
    Xhat = X / norms[:, None]
    C = np.clip(Xhat @ Xhat.T, -1.0, 1.0)
    D = np.arccos(C)
    np.fill_diagonal(D, 0.0)
    return D


def pairwise_euclidean(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    sq = np.sum(X * X, axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(D2, 0.0)
    return np.sqrt(np.maximum(D2, 0.0))


_PAIRWISE = {"angular": pairwise_angular, "euclidean": pairwise_euclidean}

# Lipschitz bounds of the pairwise losses in their score/distance argument:
# quadratic (C - t)^2 with C, t in [-1, 1] has |2 (C - t)| <= 4; the hinge
# slope is +-1; the smoothed-hinge (logistic) slope magnitude is < 1.
DEFAULT_LIPSCHITZ = {"gdt": 4.0, "hinge": 1.0, "smoothed": 1.0}


def _pairwise(points, metric: str) -> np.ndarray:
    if metric not in _PAIRWISE:
        raise ValueError(f"unknown metric {metric!r}, expected one of {sorted(_PAIRWISE)}")
    return _PAIRWISE[metric](points)


@dataclass
class CoverResult:
    """A set of center points covering every input within cover_radius.

    `centers` are point indices; `assignment[p]` is the point index of the
    center point p was assigned to.
    """

    cover_radius: float
    centers: list[int]
    assignment: np.ndarray


@dataclass
class PartitionResult:
    """Disjoint, exhaustive, label-pure index subsets with diameter <= gamma."""

    subsets: list[np.ndarray]
    k: int


@dataclass
class RobustnessReport:
    gamma: float
    delta_hat: float
    lipschitz_a: float
    epsilon: float  # 2 * lipschitz_a * (gamma + delta_hat), exactly
    k: int
    n: int
    bound_terms: tuple[float, float]  # (epsilon, sqrt(k / n))

    def to_json_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "delta_hat": self.delta_hat,
            "lipschitz_a": self.lipschitz_a,
            "epsilon": self.epsilon,
            "k": self.k,
            "n": self.n,
            "bound_terms": {
                "epsilon": self.bound_terms[0],
                "sqrt_k_over_n": self.bound_terms[1],
            },
        }


def greedy_cover(points, gamma: float, metric: str = "angular") -> CoverResult:
    """Farthest-point greedy cover: start at point 0, repeatedly add the point
    farthest from the current centers until everything is within gamma.

    Assignment ties break toward the lowest center point-index.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0:
        raise ValueError("cannot cover an empty point set")
    if not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    D = _pairwise(points, metric)
    centers = [0]
    min_dist = D[0].copy()
    while min_dist.max() > gamma:
        nxt = int(np.argmax(min_dist))
        centers.append(nxt)
        np.minimum(min_dist, D[nxt], out=min_dist)
    center_idx = np.asarray(centers)
    dc = D[:, center_idx]
    best = dc.min(axis=1)
    tied = np.where(dc == best[:, None], center_idx[None, :], np.iinfo(np.int64).max)
    assignment = tied.min(axis=1)
    return CoverResult(cover_radius=float(gamma), centers=centers, assignment=assignment)


def partition_feature_label_space(
    dataset: LabeledDataset, gamma: float, metric: str = "angular"
) -> PartitionResult:
    """Label-pure partition from a (gamma/2)-cover of the features.

    Two points in one cover cell are within gamma of each other by the
    triangle inequality; intersecting cells with class labels keeps that
    diameter bound while making every subset label-pure. Empty intersections
    are dropped.
    """
    if dataset.n == 0:
        raise ValueError("cannot partition an empty dataset")
    cover = greedy_cover(dataset.features, gamma / 2.0, metric)
    subsets = []
    for center in cover.centers:
        cell = np.flatnonzero(cover.assignment == center)
        for label in np.unique(dataset.labels[cell]):
            subsets.append(cell[dataset.labels[cell] == label])
    return PartitionResult(subsets=subsets, k=len(subsets))


def isometry_defect(
    transform, dataset: LabeledDataset, partition: PartitionResult, metric: str = "angular"
) -> float:
    """Worst within-subset distortion of pairwise distances under the transform.

    delta_hat = max over subsets, over pairs inside each subset, of
    |rho(f(x_i), f(x_j)) - rho(x_i, x_j)|. Singleton subsets contribute 0.
    """
    X = dataset.features
    Y = apply_transform(transform, X)
    delta = 0.0
    for subset in partition.subsets:
        if subset.size < 2:
            continue
        d_in = _pairwise(X[subset], metric)
        d_out = _pairwise(Y[subset], metric)
        delta = max(delta, float(np.abs(d_out - d_in).max()))
    return delta


def robustness_bound(
    k: int, n: int, gamma: float, delta_hat: float, lipschitz_a: float = 4.0
) -> RobustnessReport:
    """Assemble the robustness margin epsilon = 2 A (gamma + delta_hat) and
    the sqrt(K/n) sample term, kept separate."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    for name, value in (("gamma", gamma), ("delta_hat", delta_hat), ("lipschitz_a", lipschitz_a)):
        if not (np.isfinite(value) and value >= 0.0):
            raise ValueError(f"{name} must be finite and non-negative, got {value}")
    epsilon = 2.0 * lipschitz_a * (gamma + delta_hat)
    return RobustnessReport(
        gamma=float(gamma),
        delta_hat=float(delta_hat),
        lipschitz_a=float(lipschitz_a),
        epsilon=float(epsilon),
        k=int(k),
        n=int(n),
        bound_terms=(float(epsilon), math.sqrt(k / n)),
    )


def diagnose(
    transform,
    dataset: LabeledDataset,
    gamma: float,
    metric: str = "angular",
    lipschitz_a: float = 4.0,
) -> RobustnessReport:
    """Partition, measure the isometry defect, and assemble the full report."""
    partition = partition_feature_label_space(dataset, gamma, metric)
    delta = isometry_defect(transform, dataset, partition, metric)
    return robustness_bound(partition.k, dataset.n, gamma, delta, lipschitz_a)


def write_robustness_json(report: RobustnessReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")
