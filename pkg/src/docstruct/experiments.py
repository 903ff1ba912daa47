"""Seeded desk-scale experiments: the anti-forgetting contrast between plain
fine-tuning and replay-distillation training, and the comparison between the
plain softmax head and the angular-margin head on an angularly separable
task."""

from __future__ import annotations

from dataclasses import replace
from statistics import median

import numpy as np

from .classifier import A_SOFTMAX, SOFTMAX, GroupedClassifier
from .evaluation import topk_error
from .incremental import Dataset, TrainConfig, fit_classifier, incremental_train_detailed


def make_cluster_task(n_classes: int, dim: int, n_train: int, n_test: int,
                      seed: int, scale: float = 4.0, spread: float = 1.0,
                      means: np.ndarray | None = None):
    """Gaussian clusters: unit-direction means scaled to a fixed radius,
    isotropic noise. Returns (train, test, means)."""
    rng = np.random.default_rng(seed)
    if means is None:
        means = rng.normal(size=(n_classes, dim))
        means = scale * means / np.linalg.norm(means, axis=1, keepdims=True)
    xs, ys = [], []
    for split_n in (n_train, n_test):
        x = np.concatenate(
            [means[k] + spread * rng.normal(size=(split_n, dim)) for k in range(n_classes)]
        )
        y = np.repeat(np.arange(n_classes), split_n)
        xs.append(x)
        ys.append(y)
    return Dataset(xs[0], ys[0]), Dataset(xs[1], ys[1]), means


def top1_error(model: GroupedClassifier, data: Dataset) -> float:
    return topk_error(model.rank_classes(data.features), data.labels.tolist(), 1)


def forgetting_experiment(seed: int = 0, distill_weight: float = 1.0,
                          new_data_rate: float = 0.25, n_old_classes: int = 10,
                          dim: int = 16, new_class_radius: float = 3.0) -> dict:
    """Converge a base model on the old classes, add one new class, then
    contrast fine-tuning on the new data alone against the replay-distillation
    loop. Reports top-1 errors on the old test set and accuracy on the new
    class, plus both training histories.

    The model uses the unit-norm direction head (margin 1): a free-norm output
    row would let the new class inflate its logit on old-region inputs no
    matter how well distillation pins the old coordinates. The new cluster
    sits inside the old clusters' shell so plain fine-tuning has to warp the
    shared features, which is the failure the replay loop is there to prevent.
    """
    old_train, old_test, means = make_cluster_task(
        n_old_classes, dim, n_train=150, n_test=100, seed=seed, scale=5.0
    )
    base_cfg = TrainConfig(seed=seed, max_steps=2500, eval_every=25, patience=15, margin=1)
    model = GroupedClassifier.create(dim, (64, 64), n_old_classes, head=A_SOFTMAX, seed=seed)
    base = fit_classifier(model, old_train, base_cfg)
    base_old_error = top1_error(base, old_test)

    rng = np.random.default_rng(seed + 1)
    new_mean = rng.normal(size=dim)
    new_mean = new_class_radius * new_mean / np.linalg.norm(new_mean)
    new_x_train = new_mean + rng.normal(size=(150, dim))
    new_x_test = new_mean + rng.normal(size=(100, dim))
    new_label = n_old_classes
    feedback = Dataset(new_x_train, np.full(150, new_label))
    new_test = Dataset(new_x_test, np.full(100, new_label))

    tune_cfg = replace(base_cfg, max_steps=4000, patience=100)
    finetuned = fit_classifier(base, feedback, tune_cfg)
    finetune_old_error = top1_error(finetuned, old_test)
    finetune_new_error = top1_error(finetuned, new_test)

    incr_cfg = replace(
        base_cfg, distill_weight=distill_weight, new_data_rate=new_data_rate
    )
    result = incremental_train_detailed(base, old_train, feedback, incr_cfg)
    incremental_old_error = top1_error(result.model, old_test)
    incremental_new_error = top1_error(result.model, new_test)

    return {
        "seed": seed,
        "distill_weight": distill_weight,
        "new_data_rate": new_data_rate,
        "base_old_error": base_old_error,
        "finetune_old_error": finetune_old_error,
        "finetune_new_accuracy": 1.0 - finetune_new_error,
        "incremental_old_error": incremental_old_error,
        "incremental_new_accuracy": 1.0 - incremental_new_error,
        "history": result.history,
    }


def make_angular_task(n_classes: int, dim: int, n_train: int, n_test: int, seed: int,
                      angle_noise: float = 0.35, radius_range: tuple[float, float] = (0.5, 6.0)):
    """Classes are directions; sample radii vary widely so vector length is
    uninformative and only the angle separates classes."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def draw(n_per_class: int):
        xs, ys = [], []
        for k in range(n_classes):
            noise = angle_noise * rng.normal(size=(n_per_class, dim))
            v = dirs[k] + noise
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            r = rng.uniform(*radius_range, size=(n_per_class, 1))
            xs.append(r * v)
            ys.append(np.full(n_per_class, k))
        return Dataset(np.concatenate(xs), np.concatenate(ys))

    return draw(n_train), draw(n_test)


def head_comparison_experiment(seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
                               n_classes: int = 40, dim: int = 16,
                               margin: int = 4) -> dict:
    """Train the same architecture with both heads on each seed of the
    angular task and compare top-1 test errors; the margin head should not
    lose on the median. Many classes with few samples each is the regime
    where the tighter angular boundaries pay off."""
    softmax_errors = []
    angular_errors = []
    for seed in seeds:
        train, test = make_angular_task(n_classes, dim, n_train=10, n_test=40, seed=seed,
                                        angle_noise=0.25)
        cfg = TrainConfig(seed=seed, max_steps=2500, eval_every=50, patience=15, margin=margin)
        plain = GroupedClassifier.create(dim, (32, 32), n_classes, head=SOFTMAX, seed=seed)
        angular = GroupedClassifier.create(dim, (32, 32), n_classes, head=A_SOFTMAX, seed=seed)
        plain = fit_classifier(plain, train, cfg)
        angular = fit_classifier(angular, train, cfg)
        softmax_errors.append(top1_error(plain, test))
        angular_errors.append(top1_error(angular, test))
    return {
        "seeds": list(seeds),
        "margin": margin,
        "softmax_errors": softmax_errors,
        "asoftmax_errors": angular_errors,
        "softmax_median": median(softmax_errors),
        "asoftmax_median": median(angular_errors),
    }
