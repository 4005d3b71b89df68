"""Evaluation of a learned transform.

The pair loss evaluated here is the mean over all unordered pairs of
(cosine(f(x_i), f(x_j)) - l_ij)^2 with l_ij in {+1, -1} the pair label: the
geometry-preserving training target is deliberately NOT used, so the score
measures discrimination only. The loss on the training set (r_emp) minus the
loss on held-out data (r_hat) estimates the generalization error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError
from .loss import checked_norms, cosine_matrix
from .network import apply_transform


@dataclass
class EvalReport:
    r_emp: float
    r_hat: float
    gen_error: float  # r_emp - r_hat, exactly
    knn_accuracy: float
    auc: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "r_emp": self.r_emp,
            "r_hat": self.r_hat,
            "gap": self.gen_error,
            "knn_accuracy": self.knn_accuracy,
            "auc": self.auc,
        }


def pair_label_matrix(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return np.where(labels[:, None] == labels[None, :], 1.0, -1.0)


def empirical_pair_loss(transform, dataset: LabeledDataset) -> float:
    """Mean over unordered pairs of (C_ij - l_ij)^2 on transformed features."""
    if dataset.n < 2:
        raise ConfigError("pair loss needs at least 2 samples")
    Y = apply_transform(transform, dataset.features)
    C = cosine_matrix(Y)
    R = C - pair_label_matrix(dataset.labels)
    np.fill_diagonal(R, 0.0)
    n = dataset.n
    return float(np.sum(R * R) / (n * (n - 1)))


def generalization_gap(
    transform, train: LabeledDataset, test: LabeledDataset
) -> tuple[float, float, float]:
    """(r_emp, r_hat, gap): pair loss on train, on test, and their difference."""
    r_emp = empirical_pair_loss(transform, train)
    r_hat = empirical_pair_loss(transform, test)
    return r_emp, r_hat, r_emp - r_hat


def knn_classify(train: LabeledDataset, query, transform=None) -> int:
    """Label of the training point most cosine-similar to the transformed query.

    Ties break toward the lowest training index.
    """
    if train.n == 0:
        raise ConfigError("1-NN needs a non-empty training set")
    Yt = apply_transform(transform, train.features)
    q = apply_transform(transform, np.asarray(query, dtype=np.float64))
    nt = checked_norms(Yt)
    nq = checked_norms(q[None, :])[0]
    sims = (Yt @ q) / (nt * nq)
    return int(train.labels[int(np.argmax(sims))])


def knn_accuracy(train: LabeledDataset, test: LabeledDataset, transform=None) -> float:
    """Fraction of test points whose nearest training point shares their label."""
    if train.n == 0:
        raise ConfigError("1-NN needs a non-empty training set")
    Yt = apply_transform(transform, train.features)
    Yq = apply_transform(transform, test.features)
    That = Yt / checked_norms(Yt)[:, None]
    Qhat = Yq / checked_norms(Yq)[:, None]
    sims = Qhat @ That.T
    # argmax returns the first maximal index: lowest-index tie-breaking
    pred = train.labels[np.argmax(sims, axis=1)]
    return float(np.mean(pred == test.labels))


def sample_verification_pairs(
    dataset: LabeledDataset, n_pos: int, n_neg: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """Draw (x_a, x_b, label) verification pairs by seeded sampling.

    Positives pair two samples of one class, negatives two different classes;
    draws are with replacement over index pairs.
    """
    if n_pos < 0 or n_neg < 0:
        raise ConfigError("pair counts must be non-negative")
    if dataset.n < 2:
        raise ConfigError("verification pairs need at least 2 samples")
    labels = dataset.labels
    if n_pos and not np.any(np.bincount(labels - labels.min()) >= 2):
        raise ConfigError("no class has 2 samples; cannot draw positive pairs")
    if n_neg and dataset.n_classes < 2:
        raise ConfigError("need at least 2 classes to draw negative pairs")
    rng = np.random.default_rng(seed)
    pairs: list[tuple[np.ndarray, np.ndarray, int]] = []
    need = {+1: n_pos, -1: n_neg}
    got = {+1: 0, -1: 0}
    while got[+1] < need[+1] or got[-1] < need[-1]:
        i, j = rng.integers(0, dataset.n, size=2)
        if i == j:
            continue
        label = +1 if labels[i] == labels[j] else -1
        if got[label] < need[label]:
            pairs.append((dataset.features[i], dataset.features[j], label))
            got[label] += 1
    return pairs


def verification_roc(transform, pairs) -> tuple[list[tuple[float, float, float]], float]:
    """Threshold sweep on transformed-pair cosine scores.

    Returns ROC points (threshold, fpr, tpr) -- starting at (+inf, 0, 0),
    then one point per distinct score -- and the trapezoidal AUC. Tied scores
    collapse into one diagonal segment, which matches the Mann-Whitney
    half-credit convention.
    """
    labels = np.array([p[2] for p in pairs])
    if labels.size == 0 or not (np.any(labels == 1) and np.any(labels == -1)):
        raise ValueError("need at least one positive and one negative pair")
    a = np.vstack([np.asarray(p[0], dtype=np.float64) for p in pairs])
    b = np.vstack([np.asarray(p[1], dtype=np.float64) for p in pairs])
    ya = apply_transform(transform, a)
    yb = apply_transform(transform, b)
    na = checked_norms(ya)
    nb = checked_norms(yb)
    scores = np.clip(np.sum(ya * yb, axis=1) / (na * nb), -1.0, 1.0)

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = (labels[order] == 1).astype(np.float64)
    tp = np.cumsum(pos)
    fp = np.cumsum(1.0 - pos)
    # keep only the last index of each run of tied scores
    last = np.flatnonzero(np.diff(s) != 0.0)
    cut = np.append(last, s.size - 1)
    n_pos = tp[-1]
    n_neg = fp[-1]
    points = [(float("inf"), 0.0, 0.0)]
    for k in cut:
        points.append((float(s[k]), float(fp[k] / n_neg), float(tp[k] / n_pos)))
    fpr = np.array([p[1] for p in points])
    tpr = np.array([p[2] for p in points])
    auc = float(np.trapezoid(tpr, fpr))
    return points, auc


def write_eval_json(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")


def write_roc_csv(points, path) -> None:
    """Write ROC points as CSV `threshold,fpr,tpr`."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("threshold,fpr,tpr\n")
        for thr, fpr, tpr in points:
            fh.write(f"{float(thr)!r},{float(fpr)!r},{float(tpr)!r}\n")
