"""Mini-batch training loops."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import WindowDataset
from ..models import TrainedModel
from ..nnkernel import Adam, make_rng, weighted_bce, weighted_bce_grad
from .crossval import class_weights


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    steps: int = 0
    last_batch_sizes: list[int] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.loss)


class _Trainer:
    def __init__(self, model: TrainedModel, dataset: WindowDataset, batch_size: int,
                 weights, seed: int, lr: float):
        if len(dataset) == 0:
            raise ValueError("cannot train on an empty dataset")
        if batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if dataset.samples.shape[1:] != model.spec.input_shape:
            raise ValueError(
                f"dataset windows {dataset.samples.shape[1:]} do not fit model input "
                f"{model.spec.input_shape}")
        w0, w1 = class_weights(dataset.labels) if weights is None else weights
        self.model, self.ds, self.batch_size = model, dataset, batch_size
        self.sample_w = np.where(dataset.labels == 1, w1, w0).astype(np.float64)
        self.y = dataset.labels.astype(np.float64)
        self.rng = make_rng(seed)
        self.opt = Adam(lr)
        self.history = History()

    def epoch(self) -> None:
        net = self.model.network
        n = len(self.ds)
        order = self.rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        sizes = []
        for s in range(0, n, self.batch_size):
            idx = order[s:s + self.batch_size]
            x = self.ds.samples[idx]
            y, w = self.y[idx], self.sample_w[idx]
            p = net.forward(x, train=True)[:, 0]
            loss_sum += weighted_bce(p, y, w) * len(idx)
            correct += int(np.count_nonzero((p >= 0.5) == (y == 1)))
            net.backward(weighted_bce_grad(p, y, w)[:, None])
            self.history.steps += 1
            self.opt.step(net.params, self.history.steps)
            sizes.append(len(idx))
        self.history.loss.append(loss_sum / n)
        self.history.accuracy.append(correct / n)
        self.history.last_batch_sizes = sizes


def train(model: TrainedModel, dataset: WindowDataset, epochs: int = 15,
          batch_size: int = 4000, weights: tuple[float, float] | None = None,
          seed: int = 0, lr: float = 1e-3) -> History:
    """Fit for a fixed number of epochs.

    Every epoch reshuffles with a generator seeded from ``seed`` and keeps the
    final partial batch.  ``weights`` default to balanced class weights of
    ``dataset``.  The model is updated in place.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    tr = _Trainer(model, dataset, batch_size, weights, seed, lr)
    for _ in range(epochs):
        tr.epoch()
    model.metadata.update(epochs_run=epochs, final_train_accuracy=tr.history.accuracy[-1])
    return tr.history


def _snapshot(model: TrainedModel):
    params = [p.value.copy() for p in model.params]
    bns = [(bn.running_mean.copy(), bn.running_var.copy(), bn.initialized)
           for bn in model.batchnorms()]
    return params, bns


def _restore(model: TrainedModel, snap) -> None:
    params, bns = snap
    for p, v in zip(model.params, params):
        p.value[...] = v
    for bn, (m, v, init) in zip(model.batchnorms(), bns):
        bn.running_mean, bn.running_var, bn.initialized = m.copy(), v.copy(), init


def train_to_convergence(model: TrainedModel, dataset: WindowDataset,
                         weights: tuple[float, float] | None = None, seed: int = 0,
                         patience: int = 5, min_delta: float = 1e-3, max_epochs: int = 200,
                         batch_size: int = 4000, lr: float = 1e-3) -> TrainedModel:
    """Train until training accuracy stops improving, keeping the best epoch.

    An epoch counts as an improvement when its accuracy beats the best so far
    by at least ``min_delta``.  Training stops after ``patience`` epochs
    without one, or at ``max_epochs``.
    """
    if max_epochs < 1:
        raise ValueError("max_epochs must be >= 1")
    tr = _Trainer(model, dataset, batch_size, weights, seed, lr)
    best_acc, best_epoch, stale = -np.inf, 0, 0
    snap = None
    for epoch in range(1, max_epochs + 1):
        tr.epoch()
        acc = tr.history.accuracy[-1]
        if acc >= best_acc + min_delta:
            best_acc, best_epoch, stale = acc, epoch, 0
            snap = _snapshot(model)
        else:
            stale += 1
            if stale >= patience:
                break
    _restore(model, snap)
    model.metadata.update(epochs_run=tr.history.epochs, best_epoch=best_epoch,
                          final_train_accuracy=best_acc,
                          accuracy_history=list(tr.history.accuracy))
    return model
