"""End-to-end optimization: Adam with decoupled weight decay, the epoch
loop with step-wise learning-rate decay, and per-epoch history.

Per batch, the classification loss is averaged over the samples; the
correlation penalty depends only on the factors, so it is added once per
step (mathematically identical to adding it per sample, and cheaper). The
whole run is deterministic for a fixed config: data order, flips, and all
initializations derive from the config seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .classifier import classification_loss, evaluate_accuracy, total_loss
from .correlation import correlation_loss, mean_abs_off_diagonal
from .errors import TrainingError
from .model import Model, ModelConfig, init_model
from .synthetic import SyntheticSample
from .tensor import Tensor, add, backward, scalar_mul

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 80
    lr: float = 3e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 20
    weight_decay: float = 5e-4
    gamma: float = 0.02
    batch_size: int = 64
    seed: int = 0
    use_asd: bool = True
    use_noise_factor: bool = True
    use_mean_feature: bool = True
    use_cmm: bool = True
    flip_augment: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class Adam:
    """Adam (beta1=0.9, beta2=0.999, eps=1e-8) with decoupled weight decay.

    Decay multiplies the listed parameters toward zero before the moment
    update, so it never contaminates the moment estimates.
    """

    def __init__(self, params: list[Tensor], lr: float, weight_decay: float = 0.0,
                 decayed: list[Tensor] | None = None):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.decayed = set(id(p) for p in (decayed if decayed is not None else params))
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.weight_decay and id(p) in self.decayed:
                p.data -= self.lr * self.weight_decay * p.data
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_acc: float
    offdiag_mean: float


def _labels_for(sample: SyntheticSample, model: Model) -> np.ndarray:
    if model.config.num_heads == model.config.num_attributes:
        return sample.labels
    return np.concatenate([sample.labels, [0.0]])  # noise head has no label


def evaluate(model: Model, samples: list[SyntheticSample]) -> tuple[float, np.ndarray]:
    """Mean and per-attribute validation accuracy of the current parameters."""
    preds = [model.forward(Tensor(s.image))[0].data for s in samples]
    return evaluate_accuracy(preds, [s.labels for s in samples], model.config.num_attributes)


def train(train_cfg: TrainConfig, model_cfg: ModelConfig,
          train_samples: list[SyntheticSample], val_samples: list[SyntheticSample],
          ) -> tuple[Model, list[EpochStats]]:
    """Optimize a fresh model; returns it with one EpochStats row per epoch."""
    if not train_samples or not val_samples:
        raise TrainingError("train and val splits must be non-empty")
    model_cfg = replace(
        model_cfg,
        use_asd=train_cfg.use_asd,
        use_noise_factor=train_cfg.use_noise_factor,
        use_mean_feature=train_cfg.use_mean_feature,
    )
    model = init_model(model_cfg, train_cfg.seed)
    use_cmm = train_cfg.use_cmm and train_cfg.use_asd

    optimizer = Adam(
        model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay,
        decayed=model.decayed_parameters(),
    )
    rng = np.random.default_rng(np.random.SeedSequence([int(train_cfg.seed), 3]))
    history: list[EpochStats] = []
    n = len(train_samples)

    for epoch in range(train_cfg.epochs):
        if epoch > 0 and epoch % train_cfg.lr_decay_every == 0:
            optimizer.lr *= train_cfg.lr_decay
            logger.info("epoch %d: learning rate decayed to %g", epoch, optimizer.lr)
        order = rng.permutation(n)
        flips = rng.random(n) < 0.5 if train_cfg.flip_augment else np.zeros(n, dtype=bool)

        epoch_losses = []
        for start in range(0, n, train_cfg.batch_size):
            batch = order[start:start + train_cfg.batch_size]
            optimizer.zero_grad()
            batch_loss = None
            for idx in batch:
                sample = train_samples[idx]
                image = sample.image[:, ::-1, :] if flips[idx] else sample.image
                p, _ = model.forward(Tensor(np.ascontiguousarray(image)))
                sample_loss = classification_loss(
                    p, _labels_for(sample, model),
                    noise_head=model.config.num_heads != model.config.num_attributes,
                )
                batch_loss = sample_loss if batch_loss is None else add(batch_loss, sample_loss)
            batch_loss = scalar_mul(batch_loss, 1.0 / len(batch))
            if use_cmm:
                batch_loss = total_loss(batch_loss, correlation_loss(model.factors),
                                        gamma=train_cfg.gamma)
            if not np.isfinite(batch_loss.data):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {start // train_cfg.batch_size}"
                )
            backward(batch_loss)
            optimizer.step()
            epoch_losses.append(batch_loss.item())

        val_acc, _ = evaluate(model, val_samples)
        offdiag = mean_abs_off_diagonal(model.factors.data) if model.factors is not None else float("nan")
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(epoch_losses)),
            val_acc=val_acc,
            offdiag_mean=offdiag,
        )
        history.append(stats)
        logger.info(
            "epoch %d: train_loss %.6f val_acc %.2f offdiag %.4f",
            epoch, stats.train_loss, stats.val_acc, stats.offdiag_mean,
        )
    return model, history


def history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_loss,val_acc,offdiag_mean"]
    for s in history:
        lines.append(f"{s.epoch},{s.train_loss:.17g},{s.val_acc:.17g},{s.offdiag_mean:.17g}")
    return "\n".join(lines) + "\n"


def write_history(history: list[EpochStats], path) -> None:
    with open(path, "w") as fh:
        fh.write(history_csv(history))
