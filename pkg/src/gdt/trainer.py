"""Full-batch gradient descent on the pairwise cosine objective.

One epoch: forward-pass every sample, form the per-sample objective gradient
over all unordered pairs, backpropagate and accumulate over samples, then
update all parameters simultaneously with a fixed step size. Pair targets are
computed from the raw features once and stay fixed. Training is deterministic:
the same (net, dataset, config) always yields bit-identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError, DegenerateVectorError, ShapeError, TrainingDivergedError
from .loss import _check_lambda, pair_target_matrix, pairwise_objective_and_grad
from .network import FeedForwardNet, apply_update, backward, forward


@dataclass
class TrainConfig:
    lam: float = 1.0
    step_size: float = 0.05
    max_epochs: int = 5000
    rel_tol: float = 1e-5
    patience_window: int = 10
    seed: int = 0

    def __post_init__(self):
        _check_lambda(self.lam)
        if not self.step_size >= 0.0:
            raise ConfigError(f"step_size must be non-negative, got {self.step_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.rel_tol > 0.0:
            raise ConfigError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.patience_window < 1:
            raise ConfigError(
                f"patience_window must be >= 1, got {self.patience_window}"
            )


@dataclass
class TrainReport:
    objective_history: list[float] = field(default_factory=list)
    epochs_run: int = 0
    converged: bool = False
    final_net: FeedForwardNet | None = None


def train(net: FeedForwardNet, dataset: LabeledDataset, cfg: TrainConfig) -> TrainReport:
    """Run gradient descent until the objective stabilizes or max_epochs.

    Stops at the first epoch t with |J_t - J_{t-w}| / max(J_{t-w}, 1e-12)
    below rel_tol, where w is patience_window (so the earliest possible stop
    is epoch w + 1), or at max_epochs. Raises TrainingDivergedError (carrying
    the epoch) on a non-finite objective or degenerate transformed vectors.
    """
    if dataset.n < 2:
        raise ConfigError(f"training needs at least 2 samples, got {dataset.n}")
    if dataset.n_classes < 2:
        raise ConfigError(
            f"training needs at least 2 classes, got {dataset.n_classes}"
        )
    if dataset.dim != net.input_dim:
        raise ShapeError(
            f"dataset dim {dataset.dim} does not match network input dim {net.input_dim}"
        )
    X = dataset.features
    T = pair_target_matrix(X, dataset.labels, cfg.lam)
    net = net.copy()
    history: list[float] = []
    window = cfg.patience_window
    converged = False
    for epoch in range(1, cfg.max_epochs + 1):
        trace = forward(net, X)
        try:
            objective, grad_y = pairwise_objective_and_grad(trace.output, T)
        except DegenerateVectorError as exc:
            raise TrainingDivergedError(
                f"epoch {epoch}: transformed sample collapsed to zero norm ({exc})",
                epoch=epoch,
            ) from exc
        if not np.isfinite(objective):
            raise TrainingDivergedError(
                f"epoch {epoch}: objective is not finite ({objective})", epoch=epoch
            )
        history.append(objective)
        grads = backward(net, trace, grad_y)
        net = apply_update(net, grads, cfg.step_size)
        if len(history) >= window + 1:
            ref = history[-(window + 1)]
            if abs(history[-1] - ref) / max(ref, 1e-12) < cfg.rel_tol:
                converged = True
                break
    return TrainReport(
        objective_history=history,
        epochs_run=len(history),
        converged=converged,
        final_net=net,
    )


def write_training_log(objective_history, path) -> None:
    """Write the per-epoch objective as CSV `epoch,J`."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,J\n")
        for epoch, value in enumerate(objective_history, start=1):
            fh.write(f"{epoch},{float(value)!r}\n")
