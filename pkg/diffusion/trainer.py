"""
Diffusion Training

Epsilon-MSE objective with per-example condition dropout, one optimizer
step per batch, and a trainer loop that logs the loss curve to CSV.
"""

import logging
import weakref
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from data.logger import TrainingLogger
from utils.seeding import torch_generator
from .conditioning import ConditionPair, collate, sample_dropout
from .schedule import NoiseSchedule

logger = logging.getLogger(__name__)

# Optimizers created by train_step for callers that do not pass one.
_DEFAULT_OPTIMIZERS = weakref.WeakKeyDictionary()


class TrainingDivergedError(FloatingPointError):
    """The training loss became non-finite."""


@dataclass
class DiffusionData:
    """
    Training tensors kept in memory.

    x0 is in [-1, 1]; semantic/context are None for an unconditional model.
    """

    x0: torch.Tensor
    semantic: Optional[torch.Tensor] = None
    context: Optional[torch.Tensor] = None

    def __len__(self) -> int:
        return int(self.x0.shape[0])

    def batch(self, idx: torch.Tensor):
        sem = None if self.semantic is None else self.semantic[idx]
        ctx = None if self.context is None else self.context[idx]
        return self.x0[idx], sem, ctx


def denoising_loss(model, x0: torch.Tensor, semantic: Optional[torch.Tensor],
                   context: Optional[torch.Tensor], t: torch.Tensor, eps: torch.Tensor,
                   sched: NoiseSchedule) -> torch.Tensor:
    """
    Mean over batch and pixels of (eps - model(x_t, t, c))^2.

    Args:
        t: (B,) long tensor of steps in 1..T
    """
    ab = torch.as_tensor(sched.alphas_bar, dtype=x0.dtype)[t - 1].reshape(-1, 1, 1, 1)
    x_t = ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps
    eps_hat = model(x_t, t, semantic, context)
    return F.mse_loss(eps_hat, eps.to(eps_hat.dtype))


def apply_dropout(semantic: Optional[torch.Tensor], context: Optional[torch.Tensor],
                  drop_semantic: torch.Tensor, drop_context: torch.Tensor):
    """Zero the dropped condition channels per example."""
    if semantic is not None:
        keep = (~drop_semantic).to(semantic.dtype).reshape(-1, 1, 1, 1)
        semantic = semantic * keep
    if context is not None:
        keep = (~drop_context).to(context.dtype).reshape(-1, 1, 1, 1)
        context = context * keep
    return semantic, context


def train_step_tensors(model, optimizer, x0: torch.Tensor, semantic: Optional[torch.Tensor],
                       context: Optional[torch.Tensor], sched: NoiseSchedule,
                       gen: torch.Generator, p_context: float = 0.05,
                       p_both: float = 0.05, step: int = 0) -> float:
    """
    One optimization step on batch tensors.

    Returns:
        The batch loss before the update

    Raises:
        TrainingDivergedError: loss is NaN or infinite (no update applied)
    """
    b = x0.shape[0]
    if b == 0:
        raise ValueError("Batch is empty")

    drop_semantic, drop_context = sample_dropout(b, gen, p_context, p_both)
    semantic, context = apply_dropout(semantic, context, drop_semantic, drop_context)
    t = torch.randint(1, sched.T + 1, (b,), generator=gen)
    eps = torch.randn(x0.shape, generator=gen, dtype=x0.dtype)

    model.train()
    optimizer.zero_grad()
    loss = denoising_loss(model, x0, semantic, context, t, eps, sched)
    value = float(loss.detach())
    if not np.isfinite(value):
        raise TrainingDivergedError(
            f"Non-finite loss {value} at step {step} "
            f"(t range {int(t.min())}..{int(t.max())}, batch {b})")
    loss.backward()
    optimizer.step()
    return value


def train_step(model, batch: Sequence[Tuple[np.ndarray, ConditionPair]], sched: NoiseSchedule,
               rng: torch.Generator, optimizer: Optional[torch.optim.Optimizer] = None,
               p_context: float = 0.05, p_both: float = 0.05) -> float:
    """
    One step on a list of (x0 image in [0,1], ConditionPair) examples.

    Examples whose semantic or context is None train that branch as null.
    Without an optimizer the model keeps one AdamW instance across calls.
    """
    if not batch:
        raise ValueError("Batch is empty")
    if optimizer is None:
        optimizer = _DEFAULT_OPTIMIZERS.get(model)
        if optimizer is None:
            optimizer = _DEFAULT_OPTIMIZERS[model] = make_optimizer(model)
    x0, semantic, context, has_semantic, has_context = collate(batch)
    semantic = semantic if bool(has_semantic.any()) else None
    context = context if bool(has_context.any()) else None
    return train_step_tensors(model, optimizer, x0, semantic, context, sched, rng,
                              p_context, p_both)


def make_optimizer(model, lr: float = 3e-4) -> torch.optim.Optimizer:
    return torch.optim.AdamW(model.parameters(), lr=lr, betas=(0.9, 0.999))


class DiffusionTrainer:
    """
    Seeded training loop for a denoiser.

    Batches are drawn from a fresh permutation each epoch; all randomness
    comes from one torch generator.
    """

    def __init__(self, model, sched: NoiseSchedule, seed: int, lr: float = 3e-4,
                 batch_size: int = 16, p_context: float = 0.05, p_both: float = 0.05,
                 log_every: int = 50):
        self.model = model
        self.sched = sched
        self.batch_size = int(batch_size)
        self.p_context = p_context
        self.p_both = p_both
        self.log_every = max(1, int(log_every))
        self.gen = torch_generator(seed)
        self.optimizer = make_optimizer(model, lr)
        self.training_logger = TrainingLogger()
        self.losses: List[float] = []

    def fit(self, data: DiffusionData, steps: int, log_path: Optional[Path] = None,
            metadata: Optional[dict] = None,
            progress_callback: Optional[Callable[[float, str], None]] = None) -> List[float]:
        """
        Train for a fixed number of steps.

        Args:
            data: In-memory training tensors
            steps: Optimizer steps
            log_path: Optional CSV loss log (step, loss)
            metadata: '# key: value' header for the CSV
            progress_callback: Called with (percent, message)

        Returns:
            Per-step losses
        """
        if len(data) == 0:
            raise ValueError("No training examples")
        if log_path is not None:
            self.training_logger.start_logging(log_path, ['step', 'loss'], metadata)

        order = torch.empty(0, dtype=torch.long)
        cursor = 0
        try:
            for step in range(1, steps + 1):
                if cursor + self.batch_size > order.numel():
                    order = torch.randperm(len(data), generator=self.gen)
                    cursor = 0
                idx = order[cursor:cursor + self.batch_size]
                cursor += self.batch_size

                x0, semantic, context = data.batch(idx)
                loss = train_step_tensors(self.model, self.optimizer, x0, semantic, context,
                                          self.sched, self.gen, self.p_context, self.p_both,
                                          step=step)
                self.losses.append(loss)
                self.training_logger.log({'step': step, 'loss': repr(loss)})

                if step % self.log_every == 0 or step == steps:
                    recent = self.losses[-self.log_every:]
                    logger.info("step %d/%d loss %.5f", step, steps, float(np.mean(recent)),
                                extra={'step': step, 'loss': float(np.mean(recent))})
                    if progress_callback:
                        progress_callback(100.0 * step / steps, f"step {step}/{steps}")
        finally:
            self.training_logger.stop_logging()

        return list(self.losses)
