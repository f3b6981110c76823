"""Deterministic mini-batch training loop.

Given a fixed seed the whole run is reproducible bit for bit: parameter
initialization, batch shuffling, and every arithmetic step are driven by
seeded PCG64 streams and single-threaded numpy ops.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .model import SeResNet, SeResNetConfig
from .optim import Adam, lr_for_epoch
from ..errors import TrainingDivergedError
from ..signloss import LossBatch, sign_loss, sign_loss_grad

logger = logging.getLogger(__name__)


def sign_loss_pair(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Default training loss: (scalar, dLoss/dprobs) with batch-mean scaling."""
    batch = LossBatch(probs, targets)
    total, _ = sign_loss(batch)
    return total, sign_loss_grad(batch) / probs.shape[0]


@dataclass
class TrainResult:
    model: SeResNet
    history: list[dict]  # one row per epoch: epoch, lr, loss

    @property
    def losses(self) -> list[float]:
        return [row["loss"] for row in self.history]


def train(x, y, config: SeResNetConfig, epochs: int = 19, batch_size: int = 16,
          loss=sign_loss_pair, model: SeResNet | None = None) -> TrainResult:
    """Train a model on (x [N, leads, T], y [N, n_classes]).

    Aborts with :class:`TrainingDivergedError` if the loss goes
    non-finite.  The history records the per-epoch mean loss and the
    learning rate actually applied.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] == 0:
        raise TrainingDivergedError("empty dataset")
    model = model or SeResNet(config)
    optimizer = Adam()
    shuffle_rng = np.random.default_rng(np.random.PCG64(config.seed + 0x5eed))
    history: list[dict] = []
    for epoch in range(1, epochs + 1):
        lr = lr_for_epoch(epoch)
        order = shuffle_rng.permutation(x.shape[0])
        epoch_losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            logits, pvars = model.forward(x[idx], training=True)
            probs = ad.sigmoid(logits)
            value, dprobs = loss(probs.value, y[idx])
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"loss became {value} at epoch {epoch}, "
                    f"batch starting {start} (lr={lr})")
            ad.backward(probs, seed=dprobs)
            grads = {name: pvars[name].grad for name in model.params}
            optimizer.step(model.params, grads, lr)
            epoch_losses.append(value)
        mean_loss = float(np.mean(epoch_losses))
        history.append({"epoch": epoch, "lr": lr, "loss": mean_loss})
        logger.debug("epoch %d lr %.4g loss %.6f", epoch, lr, mean_loss)
    return TrainResult(model=model, history=history)


def exact_match_accuracy(model: SeResNet, x, y, threshold: float = 0.5,
                         batch_size: int = 64) -> float:
    """Fraction of records whose full binarized label set matches exactly."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    hits = 0
    for start in range(0, x.shape[0], batch_size):
        probs = model.predict_probs(x[start:start + batch_size])
        pred = (probs >= threshold).astype(np.uint8)
        hits += int(np.all(pred == y[start:start + batch_size], axis=1).sum())
    return hits / x.shape[0]
