"""Correction-driven incremental training: per-group distillation against a
frozen copy, output-layer expansion for new classes, and a momentum-SGD loop
that mixes new-data batches with replayed original batches so the updated
model keeps its old behavior."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .classifier import (
    A_SOFTMAX,
    GroupedClassifier,
    _backward,
    task_loss_and_grads,
)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d) with integer class labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must align with feature rows")
        if self.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def take(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings. new_data_rate is the fraction of each
    batch drawn from the feedback set; distill_weight scales the per-group
    distillation penalty computed on the replayed original samples."""

    batch_size: int = 32
    learning_rate: float = 0.001
    momentum: float = 0.9
    new_data_rate: float = 0.25
    distill_weight: float = 1.0
    multitask_weight: float = 1.0
    margin: int = 4
    patience: int = 10
    eval_every: int = 20
    max_steps: int = 3000
    val_fraction: float = 0.2
    replay_cap: int | None = None
    # margin annealing for angular-head training with margin > 1: the target
    # logit blends from the plain angular logit toward the margin form as
    # lambda decays from margin_lambda_start to margin_lambda_min
    margin_lambda_start: float = 1500.0
    margin_lambda_min: float = 5.0
    margin_lambda_decay: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0.0 < self.new_data_rate <= 1.0):
            raise ValueError("new_data_rate must lie in (0, 1]")
        if self.distill_weight < 0 or self.multitask_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")
        if self.margin < 1:
            raise ValueError("margin must be >= 1")
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.replay_cap is not None and self.replay_cap < 1:
            raise ValueError("replay_cap must be >= 1 when set")
        if self.margin_lambda_min < 0 or self.margin_lambda_start < self.margin_lambda_min:
            raise ValueError("margin annealing range must satisfy 0 <= min <= start")
        if self.margin_lambda_decay < 0:
            raise ValueError("margin_lambda_decay must be >= 0")


def _check_group_structure(frozen: GroupedClassifier, trainee: GroupedClassifier, old_k: int):
    if len(frozen.hidden_weights) != len(trainee.hidden_weights):
        raise ValueError("models have different group counts")
    for i, (wf, wt) in enumerate(zip(frozen.hidden_weights, trainee.hidden_weights)):
        if wf.shape != wt.shape:
            raise ValueError(f"hidden group {i} shapes differ: {wf.shape} vs {wt.shape}")
    if frozen.head != trainee.head:
        raise ValueError("models have different head types")
    if old_k > frozen.n_classes or old_k > trainee.n_classes:
        raise ValueError(
            f"old class count {old_k} exceeds a model's classes "
            f"({frozen.n_classes} vs {trainee.n_classes})"
        )


def distillation_loss(frozen: GroupedClassifier, trainee: GroupedClassifier,
                      batch: np.ndarray, old_k: int | None = None) -> float:
    """Sum over groups of the squared L2 distance between the two models'
    group outputs, averaged over the batch. When the trainee's head was
    expanded, only the first old_k logit coordinates enter the final term."""
    return _distillation(frozen, trainee, batch, old_k, want_grads=False)[0]


def distillation_grads(frozen: GroupedClassifier, trainee: GroupedClassifier,
                       batch: np.ndarray, old_k: int | None = None):
    """Distillation loss and its gradients w.r.t. the trainee's parameters."""
    return _distillation(frozen, trainee, batch, old_k, want_grads=True)


def _distillation(frozen, trainee, batch, old_k, want_grads):
    if old_k is None:
        old_k = frozen.n_classes
    _check_group_structure(frozen, trainee, old_k)
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    n = X.shape[0]
    _, hs_f, logits_f, _ = frozen.forward_trace(X)
    Xin, hs_t, logits_t, w_hat = trainee.forward_trace(X)
    loss = 0.0
    g_hidden = []
    for hf, ht in zip(hs_f, hs_t):
        diff = ht - hf
        loss += float((diff**2).sum() / n)
        g_hidden.append(2.0 * diff / n if want_grads else None)
    diff_logits = logits_t[:, :old_k] - logits_f[:, :old_k]
    loss += float((diff_logits**2).sum() / n)
    if not want_grads:
        return loss, None
    g_logits = np.zeros_like(logits_t)
    g_logits[:, :old_k] = 2.0 * diff_logits / n
    grads = _backward(trainee, Xin, hs_t, g_hidden, g_logits, w_hat)
    return loss, grads


def expand_output_layer(model: GroupedClassifier, n_new_classes: int) -> GroupedClassifier:
    """Copy of the model with n_new_classes extra zero-initialized head rows.
    Old-class rows are preserved exactly, so old logits are unchanged; new
    rows produce zero logits at initialization (a zero-norm angular row is
    defined to contribute a zero logit)."""
    if n_new_classes < 1:
        raise ValueError(f"n_new_classes must be >= 1, got {n_new_classes}")
    expanded = model.copy()
    extra_w = np.zeros((n_new_classes, model.head_weight.shape[1]))
    expanded.head_weight = np.vstack([expanded.head_weight, extra_w])
    if expanded.head_bias is not None:
        expanded.head_bias = np.concatenate([expanded.head_bias, np.zeros(n_new_classes)])
    return expanded


def _seed_zero_head_rows(model: GroupedClassifier, rng: np.random.Generator) -> None:
    """A zero angular-head row has no gradient; give freshly added rows a tiny
    deterministic direction so they can train. Old rows are untouched."""
    if model.head != A_SOFTMAX:
        return
    norms = np.linalg.norm(model.head_weight, axis=1)
    for j in np.nonzero(norms == 0.0)[0]:
        model.head_weight[j] = rng.normal(0.0, 1e-3, size=model.head_weight.shape[1])


def _split(ds: Dataset, val_fraction: float, rng: np.random.Generator):
    if ds.size < 2:
        return ds, ds
    idx = rng.permutation(ds.size)
    n_val = max(1, int(round(ds.size * val_fraction)))
    n_val = min(n_val, ds.size - 1)
    return ds.take(idx[n_val:]), ds.take(idx[:n_val])


def _sample(ds: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    replace_draw = ds.size < n
    idx = rng.choice(ds.size, size=n, replace=replace_draw)
    return ds.take(idx)


@dataclass
class TrainResult:
    model: GroupedClassifier
    history: list[dict]
    steps: int


def _sgd_loop(trainee: GroupedClassifier, feedback: Dataset, cfg: TrainConfig,
              teacher: GroupedClassifier | None = None,
              original: Dataset | None = None,
              old_k: int | None = None) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    n_f = max(1, int(round(cfg.batch_size * cfg.new_data_rate)))
    n_f = min(n_f, cfg.batch_size)
    n_o = cfg.batch_size - n_f
    distill = teacher is not None and cfg.distill_weight > 0 and n_o > 0
    # a margin above 1 trains through the annealed blend; margin 1 needs none
    anneal = trainee.head == A_SOFTMAX and cfg.margin > 1

    train_f, val_f = _split(feedback, cfg.val_fraction, rng)
    if distill:
        train_o, val_o = _split(original, cfg.val_fraction, rng)

    def val_objective() -> float:
        loss = task_loss_and_grads(
            trainee, val_f.features, val_f.labels, cfg.margin,
            cfg.margin_lambda_min if anneal else 0.0,
        )[0]
        if distill:
            loss += cfg.distill_weight * distillation_loss(teacher, trainee, val_o.features, old_k)
        return loss

    velocity = np.zeros_like(trainee.params_vector())
    best_loss = val_objective()
    best_params = trainee.params_vector()
    bad_evals = 0
    history: list[dict] = [{"step": 0, "val_loss": best_loss}]
    steps = 0
    for step in range(1, cfg.max_steps + 1):
        steps = step
        blend = 0.0
        if anneal:
            blend = max(
                cfg.margin_lambda_min,
                cfg.margin_lambda_start / (1.0 + cfg.margin_lambda_decay * step),
            )
        batch_f = _sample(train_f, n_f, rng)
        task_loss, grads = task_loss_and_grads(
            trainee, batch_f.features, batch_f.labels, cfg.margin, blend
        )
        g = np.concatenate([a.ravel() for a in grads])
        dist_loss = 0.0
        if distill:
            batch_o = _sample(train_o, n_o, rng)
            dist_loss, dgrads = distillation_grads(teacher, trainee, batch_o.features, old_k)
            g = g + cfg.distill_weight * np.concatenate([a.ravel() for a in dgrads])
        velocity = cfg.momentum * velocity - cfg.learning_rate * g
        trainee.set_params_vector(trainee.params_vector() + velocity)
        if step % cfg.eval_every == 0:
            val = val_objective()
            history.append(
                {"step": step, "task_loss": task_loss, "distill_loss": dist_loss, "val_loss": val}
            )
            if val < best_loss - 1e-12:
                best_loss = val
                best_params = trainee.params_vector()
                bad_evals = 0
            else:
                bad_evals += 1
                if bad_evals >= cfg.patience:
                    break
    trainee.set_params_vector(best_params)
    return TrainResult(model=trainee, history=history, steps=steps)


def fit_classifier(model: GroupedClassifier, data: Dataset, cfg: TrainConfig) -> GroupedClassifier:
    """Plain supervised training on one dataset (no teacher, no replay). Used
    both to converge a base model and as the fine-tuning-only baseline. The
    input model is never mutated."""
    if data.size == 0:
        raise ValueError("cannot train on an empty dataset")
    trainee = model.copy()
    if data.labels.max() >= trainee.n_classes:
        trainee = expand_output_layer(trainee, int(data.labels.max()) + 1 - trainee.n_classes)
        _seed_zero_head_rows(trainee, np.random.default_rng(cfg.seed))
    cfg = replace(cfg, new_data_rate=1.0, distill_weight=0.0)
    return _sgd_loop(trainee, data, cfg).model


def incremental_train(model: GroupedClassifier, original: Dataset, feedback: Dataset,
                      cfg: TrainConfig) -> GroupedClassifier:
    """Adapt a converged model to feedback data without forgetting.

    Each step samples batch_size * new_data_rate feedback items and fills the
    rest of the batch from the original set; the task loss is taken on the
    feedback part and the distillation loss against the frozen input model on
    the original part, combined as task + distill_weight * distill. The input
    model is never mutated; the trained copy is returned (early-stopped on a
    held-out mirror of the same objective).
    """
    return incremental_train_detailed(model, original, feedback, cfg).model


def incremental_train_detailed(model: GroupedClassifier, original: Dataset, feedback: Dataset,
                               cfg: TrainConfig) -> TrainResult:
    if feedback.size == 0:
        raise ValueError("feedback set is empty; nothing to adapt to")
    if cfg.new_data_rate >= 1.0 and cfg.distill_weight > 0:
        warnings.warn(
            "new_data_rate=1 leaves no original samples per batch; "
            "the distillation term is identically zero",
            stacklevel=2,
        )
    rng = np.random.default_rng(cfg.seed)
    replay = original
    if cfg.replay_cap is not None and original.size > cfg.replay_cap:
        idx = rng.choice(original.size, size=cfg.replay_cap, replace=False)
        replay = original.take(np.sort(idx))

    teacher = model
    trainee = model.copy()
    max_label = int(feedback.labels.max())
    if max_label >= trainee.n_classes:
        trainee = expand_output_layer(trainee, max_label + 1 - trainee.n_classes)
        _seed_zero_head_rows(trainee, np.random.default_rng(cfg.seed))
    old_k = teacher.n_classes

    n_f = max(1, int(round(cfg.batch_size * cfg.new_data_rate)))
    use_teacher = cfg.distill_weight > 0 and cfg.batch_size - min(n_f, cfg.batch_size) > 0
    if use_teacher and replay.size == 0:
        raise ValueError("original dataset is empty but the batch mix requires replay samples")
    return _sgd_loop(
        trainee,
        feedback,
        cfg,
        teacher=teacher if use_teacher else None,
        original=replay if use_teacher else None,
        old_k=old_k,
    )
