"""Loss-based sample reweighting via simulated annealing.

Each epoch a binary keep/drop mask is annealed against the energy

    E(m) = sum_i m_i * loss_i + coeff * (sum_i m_i - keep_fraction * N)^2

and folded into smoothed per-sample weights that gate the training loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import training
from .datasets import Dataset
from .models import Model
from .sim import KrausChannel
from .training import OptimizerState, TrainConfig


@dataclass(frozen=True)
class QDetectConfig:
    wan_lr: float = 0.05
    anneal_coeff: float = 1.0
    beta_range: tuple[float, float] = (0.1, 2.0)
    sweeps: int = 50
    keep_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.beta_range[0] >= self.beta_range[1]:
            raise ValueError("beta_range must be ascending")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in (0, 1]")


def mask_energy(mask: np.ndarray, losses: np.ndarray, config: QDetectConfig) -> float:
    budget = config.keep_fraction * len(losses)
    return float(mask @ losses + config.anneal_coeff * (mask.sum() - budget) ** 2)


def anneal_mask(
    losses: np.ndarray, config: QDetectConfig, rng: np.random.Generator
) -> np.ndarray:
    """Single-spin-flip Metropolis from the all-ones mask, inverse temperature
    ramped linearly across the sweeps; returns the best mask visited."""
    n = len(losses)
    budget = config.keep_fraction * n
    coeff = config.anneal_coeff
    mask = np.ones(n)
    total = float(n)
    energy = mask_energy(mask, losses, config)
    best_mask, best_energy = mask.copy(), energy
    betas = np.linspace(config.beta_range[0], config.beta_range[1], config.sweeps)
    for beta in betas:
        for i in rng.permutation(n):
            if mask[i]:
                delta = -losses[i] + coeff * (1.0 - 2.0 * (total - budget))
            else:
                delta = losses[i] + coeff * (1.0 + 2.0 * (total - budget))
            if delta <= 0 or rng.random() < np.exp(-beta * delta):
                mask[i] = 1.0 - mask[i]
                total += 1.0 if mask[i] else -1.0
                energy += delta
                if energy < best_energy:
                    best_energy = energy
                    best_mask = mask.copy()
    return best_mask


def qdetect_weights(
    losses: np.ndarray,
    prev_weights: np.ndarray,
    config: QDetectConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Anneal a keep/drop mask over the losses, then move the weights toward
    it: w <- (1 - lr) * prev + lr * mask, clamped to [0, 1]."""
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        raise ValueError("cannot reweight an empty loss vector")
    if not np.all(np.isfinite(losses)):
        raise ValueError("losses must be finite")
    mask = anneal_mask(losses, config, rng)
    w = (1.0 - config.wan_lr) * np.asarray(prev_weights, dtype=float) + config.wan_lr * mask
    return np.clip(w, 0.0, 1.0)


def defended_train(
    model: Model,
    dataset: Dataset,
    train_config: TrainConfig,
    qdetect_config: QDetectConfig,
    mode: str = "pure",
    noise: tuple[KrausChannel, ...] = (),
    n_classes: int | None = None,
) -> tuple[Model, np.ndarray]:
    """Training loop with per-epoch loss-based reweighting. Returns the model
    and the weight history [epochs, N]."""
    anneal_rng = np.random.default_rng(np.random.SeedSequence(qdetect_config.seed))
    shuffle_seq, spsa_seq = np.random.SeedSequence(train_config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    spsa_rng = np.random.default_rng(spsa_seq)
    weights = np.ones(len(dataset))
    opt_state = OptimizerState()
    history = []
    for _ in range(train_config.epochs):
        losses = training.per_sample_losses(
            model, dataset, train_config, mode, noise, n_classes=n_classes
        )
        weights = qdetect_weights(losses, weights, qdetect_config, anneal_rng)
        history.append(weights.copy())
        model, _ = training.train_epoch(
            model,
            dataset,
            weights,
            train_config,
            mode,
            noise,
            opt_state=opt_state,
            shuffle_rng=shuffle_rng,
            spsa_rng=spsa_rng,
            n_classes=n_classes,
        )
    return model, np.array(history) if history else np.zeros((0, len(dataset)))


def write_weight_history(history: np.ndarray, path) -> None:
    """Epoch-indexed tab-separated rows of the per-sample weights."""
    with open(path, "w") as fh:
        for epoch, row in enumerate(history):
            fh.write("\t".join([str(epoch)] + [f"{w:.6f}" for w in row]) + "\n")
