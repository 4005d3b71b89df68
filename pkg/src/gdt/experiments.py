"""Reproducible experiment runner.

Configs are flat `key = value` text with dotted section keys (see README for
the full key table); `--set key=value` overrides individual entries. Every
run derives all randomness from config seeds, so re-running an identical
config overwrites its outputs byte-identically.

A single run produces four artifacts in its output directory: train_log.csv,
net.json, eval.json (+ roc.csv when verification pairs exist), and
robustness.json. A sweep runs the Cartesian product lambda_grid x seeds x
size-grid, gives each cell its own directory under cells/, and emits one
sweep.csv row per cell plus a per-cell mean/std summary over seeds.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import data as data_mod
from .data import LabeledDataset, SyntheticConfig, gen_two_plane_dataset
from .errors import ConfigError, TrainingDivergedError
from .evaluation import (
    EvalReport,
    generalization_gap,
    knn_accuracy,
    sample_verification_pairs,
    verification_roc,
    write_eval_json,
    write_roc_csv,
)
from .network import init_network, load_network, save_network
from .robustness import diagnose, write_robustness_json
from .trainer import TrainConfig, TrainReport, train, write_training_log

TASKS = ("synthetic", "idx-subset", "csv-dataset")

SWEEP_COLUMNS = (
    "lambda,seed,n_per_class,r_emp,r_hat,gap,knn_accuracy,delta_hat,K,epsilon,status"
)
SUMMARY_COLUMNS = (
    "lambda,n_per_class,n_seeds,"
    "r_emp_mean,r_emp_std,r_hat_mean,r_hat_std,gap_mean,gap_std,"
    "abs_gap_mean,abs_gap_std,knn_accuracy_mean,knn_accuracy_std,"
    "delta_hat_mean,delta_hat_std,epsilon_mean,epsilon_std"
)


@dataclass
class ExperimentConfig:
    task: str = "synthetic"
    output_dir: str = "gdt-out"
    # synthetic task
    embed_dim: int = 100
    n_train_per_class: int = 40
    n_test_per_class: int = 1000
    # idx-subset task
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    per_class: int = 50
    test_per_class: int = 0  # 0 keeps the whole test file
    # csv-dataset task
    train_csv: str | None = None
    test_csv: str | None = None
    # seeds for single runs (sweeps use `seeds`)
    run_seed: int = 0
    # network
    net_dims: list[int] | None = None  # None: input -> input -> input
    init_scale: float = 0.1
    net_path: str | None = None
    # training
    lam: float = 1.0
    step_size: float = 0.05
    max_epochs: int = 5000
    rel_tol: float = 1e-5
    patience_window: int = 10
    # evaluation
    verification_pos: int = 500
    verification_neg: int = 500
    # robustness diagnostics
    gamma: float = 0.5
    metric: str = "angular"
    lipschitz_a: float = 4.0
    # sweep grids
    lambda_grid: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_per_class_grid: list[int] | None = None  # None: just the task's per-class count

    def train_config(self, lam: float | None = None, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            lam=self.lam if lam is None else lam,
            step_size=self.step_size,
            max_epochs=self.max_epochs,
            rel_tol=self.rel_tol,
            patience_window=self.patience_window,
            seed=self.run_seed if seed is None else seed,
        )

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task: unknown task {self.task!r}, expected one of {TASKS}")
        self.train_config()  # range-checks lambda and the training knobs
        if not self.lambda_grid:
            raise ConfigError("sweep.lambda_grid: must be non-empty")
        for lam in self.lambda_grid:
            if not 0.0 <= lam <= 1.0:
                raise ConfigError(f"sweep.lambda_grid: {lam} outside [0, 1]")
        if not self.seeds:
            raise ConfigError("sweep.seeds: must be non-empty")
        if self.task == "csv-dataset" and self.n_per_class_grid is not None:
            raise ConfigError("sweep.n_per_class: size sweeps need a generated/sampled task")
        if self.net_dims is not None and len(self.net_dims) < 2:
            raise ConfigError("net.dims: need at least input and output sizes")
        if self.metric not in ("angular", "euclidean"):
            raise ConfigError(f"robustness.metric: unknown metric {self.metric!r}")
        if not self.gamma > 0.0:
            raise ConfigError(f"robustness.gamma: must be positive, got {self.gamma}")


def _parse_int(key, value):
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from exc


def _parse_float(key, value):
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from exc


def _parse_int_list(key, value):
    return [_parse_int(key, part) for part in str(value).split(",") if part.strip() != ""]


def _parse_float_list(key, value):
    return [_parse_float(key, part) for part in str(value).split(",") if part.strip() != ""]


def _parse_str(key, value):
    return str(value)


def _parse_dims(key, value):
    if str(value).strip().lower() == "auto":
        return None
    return _parse_int_list(key, value)


# dotted config key -> (ExperimentConfig attribute, parser)
CONFIG_KEYS = {
    "task": ("task", _parse_str),
    "output_dir": ("output_dir", _parse_str),
    "data.embed_dim": ("embed_dim", _parse_int),
    "data.n_train_per_class": ("n_train_per_class", _parse_int),
    "data.n_test_per_class": ("n_test_per_class", _parse_int),
    "data.train_images": ("train_images", _parse_str),
    "data.train_labels": ("train_labels", _parse_str),
    "data.test_images": ("test_images", _parse_str),
    "data.test_labels": ("test_labels", _parse_str),
    "data.per_class": ("per_class", _parse_int),
    "data.test_per_class": ("test_per_class", _parse_int),
    "data.train_csv": ("train_csv", _parse_str),
    "data.test_csv": ("test_csv", _parse_str),
    "run.seed": ("run_seed", _parse_int),
    "net.dims": ("net_dims", _parse_dims),
    "net.init_scale": ("init_scale", _parse_float),
    "net.path": ("net_path", _parse_str),
    "train.lambda": ("lam", _parse_float),
    "train.step_size": ("step_size", _parse_float),
    "train.max_epochs": ("max_epochs", _parse_int),
    "train.rel_tol": ("rel_tol", _parse_float),
    "train.patience_window": ("patience_window", _parse_int),
    "eval.verification_pos": ("verification_pos", _parse_int),
    "eval.verification_neg": ("verification_neg", _parse_int),
    "robustness.gamma": ("gamma", _parse_float),
    "robustness.metric": ("metric", _parse_str),
    "robustness.lipschitz_a": ("lipschitz_a", _parse_float),
    "sweep.lambda_grid": ("lambda_grid", _parse_float_list),
    "sweep.seeds": ("seeds", _parse_int_list),
    "sweep.n_per_class": ("n_per_class_grid", _parse_int_list),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat `key = value` lines; `#` starts a comment line."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"config line {lineno}: expected `key = value`, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def build_experiment_config(kv: dict[str, str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for key, value in kv.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown config key")
        attr, parser = CONFIG_KEYS[key]
        setattr(cfg, attr, parser(key, value))
    cfg.validate()
    return cfg


def load_experiment_config(path=None, overrides=None) -> ExperimentConfig:
    kv: dict[str, str] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            kv.update(parse_config_text(fh.read()))
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set {item!r}: expected key=value")
        kv[key.strip()] = value.strip()
    return build_experiment_config(kv)


def _require(cfg_value, key: str):
    if cfg_value is None:
        raise ConfigError(f"{key}: required for this task/command")
    return cfg_value


def load_task_datasets(
    cfg: ExperimentConfig, seed: int, n_per_class: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Materialize (train, test) for the configured task, deterministic per seed."""
    if cfg.task == "synthetic":
        syn = SyntheticConfig(
            n_train_per_class=n_per_class,
            n_test_per_class=cfg.n_test_per_class,
            embed_dim=cfg.embed_dim,
            seed=seed,
        )
        return gen_two_plane_dataset(syn)
    if cfg.task == "idx-subset":
        train = data_mod.load_idx_subset(
            _require(cfg.train_images, "data.train_images"),
            _require(cfg.train_labels, "data.train_labels"),
            n_per_class,
            seed,
        )
        test_images = _require(cfg.test_images, "data.test_images")
        test_labels = _require(cfg.test_labels, "data.test_labels")
        if cfg.test_per_class > 0:
            test = data_mod.load_idx_subset(test_images, test_labels, cfg.test_per_class, seed)
        else:
            images = data_mod._read_idx_images(test_images)
            labels = data_mod._read_idx_labels(test_labels)
            if images.shape[0] != labels.shape[0]:
                raise ConfigError("test image/label counts differ")
            test = LabeledDataset(images.astype(np.float64) / 255.0, labels.astype(np.int64))
        return train, test
    if cfg.task == "csv-dataset":
        train = data_mod.load_dataset_csv(_require(cfg.train_csv, "data.train_csv"))
        test = data_mod.load_dataset_csv(_require(cfg.test_csv, "data.test_csv"))
        return train, test
    raise ConfigError(f"task: unknown task {cfg.task!r}")


def _default_per_class(cfg: ExperimentConfig) -> int:
    if cfg.task == "synthetic":
        return cfg.n_train_per_class
    if cfg.task == "idx-subset":
        return cfg.per_class
    return 0  # csv-dataset: the file decides


def _net_dims(cfg: ExperimentConfig, input_dim: int) -> list[int]:
    if cfg.net_dims is None:
        return [input_dim, input_dim, input_dim]
    if cfg.net_dims[0] != input_dim:
        raise ConfigError(
            f"net.dims: first dim {cfg.net_dims[0]} != dataset dim {input_dim}"
        )
    return cfg.net_dims


@dataclass
class RunResult:
    train_report: TrainReport
    eval_report: EvalReport
    delta_hat: float
    k: int
    epsilon: float


def evaluate_transform(
    cfg: ExperimentConfig, net, train_ds: LabeledDataset, test_ds: LabeledDataset, seed: int
) -> tuple[EvalReport, list | None]:
    """Pair losses, 1-NN accuracy, and (when possible) a verification ROC."""
    r_emp, r_hat, gap = generalization_gap(net, train_ds, test_ds)
    knn = knn_accuracy(train_ds, test_ds, net)
    roc_points = None
    auc = None
    if cfg.verification_pos > 0 and cfg.verification_neg > 0 and test_ds.n_classes >= 2:
        pairs = sample_verification_pairs(
            test_ds, cfg.verification_pos, cfg.verification_neg, seed
        )
        roc_points, auc = verification_roc(net, pairs)
    report = EvalReport(r_emp=r_emp, r_hat=r_hat, gen_error=gap, knn_accuracy=knn, auc=auc)
    return report, roc_points


def run_single(
    cfg: ExperimentConfig,
    out_dir,
    seed: int | None = None,
    lam: float | None = None,
    n_per_class: int | None = None,
) -> RunResult:
    """Data -> train -> eval -> robustness; writes all artifacts under out_dir."""
    cfg.validate()
    seed = cfg.run_seed if seed is None else seed
    lam = cfg.lam if lam is None else lam
    n_per_class = _default_per_class(cfg) if n_per_class is None else n_per_class
    train_ds, test_ds = load_task_datasets(cfg, seed, n_per_class)
    net0 = init_network(_net_dims(cfg, train_ds.dim), seed=seed, scale=cfg.init_scale)

    os.makedirs(out_dir, exist_ok=True)
    report = train(net0, train_ds, cfg.train_config(lam=lam, seed=seed))
    write_training_log(report.objective_history, os.path.join(out_dir, "train_log.csv"))
    save_network(report.final_net, os.path.join(out_dir, "net.json"))

    eval_report, roc_points = evaluate_transform(cfg, report.final_net, train_ds, test_ds, seed)
    write_eval_json(eval_report, os.path.join(out_dir, "eval.json"))
    if roc_points is not None:
        write_roc_csv(roc_points, os.path.join(out_dir, "roc.csv"))

    rob = diagnose(report.final_net, train_ds, cfg.gamma, cfg.metric, cfg.lipschitz_a)
    write_robustness_json(rob, os.path.join(out_dir, "robustness.json"))
    return RunResult(
        train_report=report,
        eval_report=eval_report,
        delta_hat=rob.delta_hat,
        k=rob.k,
        epsilon=rob.epsilon,
    )


def _fmt(value) -> str:
    return repr(float(value))


def _cell_name(lam: float, seed: int, n_per_class: int) -> str:
    return f"lam{lam:g}_seed{seed}_n{n_per_class}"


@dataclass
class SweepCell:
    lam: float
    seed: int
    n_per_class: int
    status: str = "ok"
    r_emp: float = math.nan
    r_hat: float = math.nan
    gap: float = math.nan
    knn_accuracy: float = math.nan
    delta_hat: float = math.nan
    k: int = 0
    epsilon: float = math.nan

    def csv_row(self) -> str:
        if self.status != "ok":
            metrics = [""] * 7
            k_field = ""
        else:
            metrics = [
                _fmt(self.r_emp),
                _fmt(self.r_hat),
                _fmt(self.gap),
                _fmt(self.knn_accuracy),
            ]
            k_field = str(self.k)
            metrics += [_fmt(self.delta_hat)]
        if self.status != "ok":
            return ",".join(
                [_fmt(self.lam), str(self.seed), str(self.n_per_class)]
                + [""] * 7
                + [self.status]
            )
        return ",".join(
            [
                _fmt(self.lam),
                str(self.seed),
                str(self.n_per_class),
                _fmt(self.r_emp),
                _fmt(self.r_hat),
                _fmt(self.gap),
                _fmt(self.knn_accuracy),
                _fmt(self.delta_hat),
                str(self.k),
                _fmt(self.epsilon),
                self.status,
            ]
        )


def _run_cell(args) -> SweepCell:
    cfg, out_dir, lam, seed, n_per_class = args
    cell_dir = os.path.join(out_dir, "cells", _cell_name(lam, seed, n_per_class))
    try:
        result = run_single(cfg, cell_dir, seed=seed, lam=lam, n_per_class=n_per_class)
    except TrainingDivergedError:
        return SweepCell(lam=lam, seed=seed, n_per_class=n_per_class, status="diverged")
    ev = result.eval_report
    return SweepCell(
        lam=lam,
        seed=seed,
        n_per_class=n_per_class,
        r_emp=ev.r_emp,
        r_hat=ev.r_hat,
        gap=ev.gen_error,
        knn_accuracy=ev.knn_accuracy,
        delta_hat=result.delta_hat,
        k=result.k,
        epsilon=result.epsilon,
    )


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else math.nan
    return mean, std


def run_sweep(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> list[SweepCell]:
    """Run lambda_grid x size-grid x seeds, write sweep.csv and sweep_summary.csv."""
    cfg.validate()
    sizes = cfg.n_per_class_grid or [_default_per_class(cfg)]
    grid = [
        (cfg, out_dir, lam, seed, n)
        for lam in cfg.lambda_grid
        for n in sizes
        for seed in cfg.seeds
    ]
    os.makedirs(out_dir, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, grid))
    else:
        cells = [_run_cell(args) for args in grid]

    with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(SWEEP_COLUMNS + "\n")
        for cell in cells:
            fh.write(cell.csv_row() + "\n")

    with open(
        os.path.join(out_dir, "sweep_summary.csv"), "w", encoding="utf-8", newline=""
    ) as fh:
        fh.write(SUMMARY_COLUMNS + "\n")
        for lam in cfg.lambda_grid:
            for n in sizes:
                ok = [
                    c
                    for c in cells
                    if c.status == "ok" and c.lam == lam and c.n_per_class == n
                ]
                stats = []
                for attr in ("r_emp", "r_hat", "gap"):
                    stats.extend(_mean_std([getattr(c, attr) for c in ok]))
                stats.extend(_mean_std([abs(c.gap) for c in ok]))
                for attr in ("knn_accuracy", "delta_hat", "epsilon"):
                    stats.extend(_mean_std([getattr(c, attr) for c in ok]))
                row = [_fmt(lam), str(n), str(len(ok))] + [_fmt(v) for v in stats]
                fh.write(",".join(row) + "\n")
    return cells


def write_generated_data(cfg: ExperimentConfig, out_dir) -> tuple[str, str]:
    """`gen-data`: materialize the synthetic task's train/test CSVs."""
    cfg.validate()
    if cfg.task != "synthetic":
        raise ConfigError("task: gen-data only applies to the synthetic task")
    train_ds, test_ds = load_task_datasets(cfg, cfg.run_seed, cfg.n_train_per_class)
    os.makedirs(out_dir, exist_ok=True)
    train_path = os.path.join(out_dir, "train.csv")
    test_path = os.path.join(out_dir, "test.csv")
    data_mod.save_dataset_csv(train_ds, train_path)
    data_mod.save_dataset_csv(test_ds, test_path)
    return train_path, test_path


def evaluate_saved_net(cfg: ExperimentConfig, out_dir) -> EvalReport:
    """`eval`: score a serialized network against the configured datasets."""
    cfg.validate()
    net = load_network(_require(cfg.net_path, "net.path"))
    train_ds, test_ds = load_task_datasets(cfg, cfg.run_seed, _default_per_class(cfg))
    report, roc_points = evaluate_transform(cfg, net, train_ds, test_ds, cfg.run_seed)
    os.makedirs(out_dir, exist_ok=True)
    write_eval_json(report, os.path.join(out_dir, "eval.json"))
    if roc_points is not None:
        write_roc_csv(roc_points, os.path.join(out_dir, "roc.csv"))
    return report


def diagnose_saved_net(cfg: ExperimentConfig, out_dir):
    """`robustness`: run the diagnostics for a serialized network."""
    cfg.validate()
    net = load_network(_require(cfg.net_path, "net.path"))
    train_ds, _ = load_task_datasets(cfg, cfg.run_seed, _default_per_class(cfg))
    report = diagnose(net, train_ds, cfg.gamma, cfg.metric, cfg.lipschitz_a)
    os.makedirs(out_dir, exist_ok=True)
    write_robustness_json(report, os.path.join(out_dir, "robustness.json"))
    return report
