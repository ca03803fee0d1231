"""Training loop with best-validation checkpointing, evaluation, ablation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (
    AugmentPolicy,
    Dataset,
    SmoteConfig,
    SplitSpec,
    augment_timeseries,
    bsmote_oversample,
    dataset_hash,
    stratified_split,
)
from .layers import softmax_cross_entropy
from .metrics import EvalReport, evaluation_report
from .model import DeepHeteroIoT, ModelConfig, build_model
from .optim import Adam
from .tensor import NonFiniteError, no_grad


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the epoch and batch where it happened."""

    def __init__(self, epoch: int, batch: int, cause: Exception):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {cause}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 32
    val_fraction: float = 0.15      # stratified share of train used for validation
    validate_on_test: bool = False  # validate on the test split instead (weaker protocol)
    seed: int = 100
    augment: bool = False
    bsmote: bool = False
    stop_at_train_acc: float | None = None  # optional budget stop for fixtures

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if not self.validate_on_test and not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1) unless validate_on_test is set")

    @classmethod
    def swiss_preset(cls, **overrides) -> "TrainConfig":
        """Augmentation plus borderline-SMOTE, for small imbalanced sets."""
        overrides.setdefault("augment", True)
        overrides.setdefault("bsmote", True)
        return cls(**overrides)


@dataclass
class Checkpoint:
    epoch: int
    val_acc: float
    val_loss: float
    state: dict[str, np.ndarray]


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def _batched_indices(n: int, batch_size: int, perm: np.ndarray):
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        if len(idx) == 1:
            # batch normalization needs >= 2 rows; a lone trailing sample is dropped
            continue
        yield idx


def _loss_and_acc(model: DeepHeteroIoT, ds: Dataset, batch_size: int) -> tuple[float, float]:
    total_loss = 0.0
    correct = 0
    with no_grad():
        for start in range(0, ds.n, batch_size):
            x = ds.sequences[start:start + batch_size]
            y = ds.labels[start:start + batch_size]
            logits = model.forward(x, train=False)
            loss, probs = softmax_cross_entropy(logits, y)
            total_loss += loss.item() * len(y)
            correct += int((probs.argmax(axis=1) == y).sum())
    return total_loss / ds.n, correct / ds.n


def train(
    model: DeepHeteroIoT,
    train_ds: Dataset,
    config: TrainConfig,
    test_ds: Dataset | None = None,
) -> tuple[Checkpoint, list[EpochStats]]:
    """Adam training with per-epoch shuffling and best-validation checkpointing.

    Validation comes from a stratified carve of the training split
    (``val_fraction``) or, with ``validate_on_test``, from ``test_ds``.
    Augmentation and oversampling, when enabled, apply to the fitting
    portion only. On return the model holds the checkpointed (best
    validation accuracy, earliest epoch on ties) weights.
    """
    config.validate()
    if train_ds.has_missing():
        raise ValueError("train: dataset has missing values; impute first")
    if train_ds.seq_len != model.config.seq_len:
        raise ValueError(
            f"train: sequence length {train_ds.seq_len} != model seq_len "
            f"{model.config.seq_len}"
        )
    if train_ds.num_classes != model.config.num_classes:
        raise ValueError(
            f"train: {train_ds.num_classes} classes != model num_classes "
            f"{model.config.num_classes}"
        )

    if config.validate_on_test:
        if test_ds is None:
            raise ValueError("validate_on_test requires a test dataset")
        fit_ds, val_ds = train_ds, test_ds
    else:
        fit_ds, val_ds = stratified_split(
            train_ds, SplitSpec(train_fraction=1.0 - config.val_fraction, seed=config.seed)
        )

    if config.augment:
        fit_ds = augment_timeseries(fit_ds, AugmentPolicy(seed=config.seed))
    if config.bsmote:
        fit_ds, _ = bsmote_oversample(fit_ds, SmoteConfig(seed=config.seed))

    optimizer = Adam(model.parameters(), lr=config.lr)
    best: Checkpoint | None = None
    history: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        perm = rng.permutation(fit_ds.n)
        loss_sum = 0.0
        correct = 0
        seen = 0
        for batch_no, idx in enumerate(_batched_indices(fit_ds.n, config.batch_size, perm)):
            x = fit_ds.sequences[idx]
            y = fit_ds.labels[idx]
            try:
                logits = model.forward(x, train=True)
                loss, probs = softmax_cross_entropy(logits, y)
            except NonFiniteError as exc:
                raise TrainingDiverged(epoch, batch_no, exc) from exc
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(y)
            correct += int((probs.argmax(axis=1) == y).sum())
            seen += len(y)

        train_loss = loss_sum / seen
        train_acc = correct / seen
        val_loss, val_acc = _loss_and_acc(model, val_ds, max(config.batch_size, 64))
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc))
        if best is None or val_acc > best.val_acc:
            best = Checkpoint(epoch, val_acc, val_loss, model.state_snapshot())
        if config.stop_at_train_acc is not None and train_acc >= config.stop_at_train_acc:
            break

    model.load_state(best.state)
    return best, history


def evaluate(model: DeepHeteroIoT, ds: Dataset, batch_size: int = 128) -> EvalReport:
    """Inference-mode evaluation; pure (repeat calls give identical reports)."""
    if ds.has_missing():
        raise ValueError("evaluate: dataset has missing values; impute first")
    if ds.num_classes > model.config.num_classes:
        raise ValueError(
            f"evaluate: dataset has {ds.num_classes} classes, model supports "
            f"{model.config.num_classes}"
        )
    preds = np.empty(ds.n, dtype=np.int64)
    with no_grad():
        for start in range(0, ds.n, batch_size):
            x = ds.sequences[start:start + batch_size]
            logits = model.forward(x, train=False)
            preds[start:start + len(x)] = logits.data.argmax(axis=1)
    return evaluation_report(ds.labels, preds, ds.class_names)


# ---------------------------------------------------------------------------
# history serialization
# ---------------------------------------------------------------------------

_HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def write_history(path, history: list[EpochStats]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_HISTORY_FIELDS)
        for row in history:
            writer.writerow(
                [row.epoch, repr(row.train_loss), repr(row.train_acc),
                 repr(row.val_loss), repr(row.val_acc)]
            )


def read_history(path) -> list[EpochStats]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _HISTORY_FIELDS:
            raise ValueError(f"{path}: unexpected history header {header}")
        for row in reader:
            out.append(EpochStats(int(row[0]), *(float(v) for v in row[1:])))
    return out


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

ABLATION_ORDER = ("global-only", "local-only", "mlp-only", "full")


@dataclass
class AblationRow:
    variant: str
    report: EvalReport
    history: list[EpochStats] = field(repr=False)
    checkpoint_epoch: int = 0
    test_hash: str = ""


def run_ablation(
    ds: Dataset,
    base_model: ModelConfig,
    train_cfg: TrainConfig,
    variants: tuple[str, ...] = ABLATION_ORDER,
    split: SplitSpec | None = None,
) -> list[AblationRow]:
    """Train every variant on the identical split and seed; evaluate on test."""
    split = split or SplitSpec(seed=train_cfg.seed)
    train_part, test_part = stratified_split(ds, split)
    test_hash = dataset_hash(test_part)
    rows = []
    for variant in variants:
        cfg = replace(base_model, variant=variant,
                      seq_len=ds.seq_len, num_classes=ds.num_classes)
        model = build_model(cfg)
        ckpt, history = train(model, train_part, train_cfg, test_ds=test_part)
        report = evaluate(model, test_part)
        rows.append(AblationRow(variant, report, history, ckpt.epoch, test_hash))
    return rows


def ablation_table(rows: list[AblationRow]) -> str:
    lines = [
        f"{'variant':<14} {'accuracy':>9} {'weighted_f1':>12} {'macro_f1':>9} "
        f"{'best_epoch':>11}  test_hash",
    ]
    for row in rows:
        r = row.report
        lines.append(
            f"{row.variant:<14} {r.accuracy:>9.4f} {r.weighted_f1:>12.4f} "
            f"{r.macro_f1:>9.4f} {row.checkpoint_epoch:>11}  {row.test_hash[:12]}"
        )
    return "\n".join(lines)


def write_ablation_csv(path, rows: list[AblationRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "accuracy", "weighted_f1", "macro_f1",
                         "best_epoch", "test_hash"])
        for row in rows:
            r = row.report
            writer.writerow([row.variant, repr(r.accuracy), repr(r.weighted_f1),
                             repr(r.macro_f1), row.checkpoint_epoch, row.test_hash])
