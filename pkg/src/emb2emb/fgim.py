"""Fast gradient iterative modification of predicted embeddings."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .objectives import LossWeights, adversarial_generator_loss, style_loss, unsupervised_task_loss

log = logging.getLogger(__name__)

THRESHOLD_GRID = (0.5, 0.9, 0.99, 0.999, 0.9999)
VARIANTS = ("classifier-only", "full-loss")


@dataclass(frozen=True)
class FgimConfig:
    stepsizes: tuple = (1.0, 10.0, 100.0, 1000.0)
    max_steps: int = 30
    threshold: float = 0.9
    variant: str = "full-loss"
    lambda_sty: float = 0.5
    lambda_adv: float = 0.0
    target_label: int = 1

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if not self.stepsizes or list(self.stepsizes) != sorted(self.stepsizes):
            raise ValueError("stepsize schedule must be nonempty and ascending")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class FgimTrace:
    steps: list = field(default_factory=list)   # gradient steps taken per stepsize tried
    stepsize: float | None = None              # stepsize that crossed the threshold, if any
    success: bool = False
    aborted: bool = False


def make_loss(cfg: FgimConfig, classifier, discriminator=None):
    """Loss over a single embedding ``z`` (shape 1 x d) given the mapping input ``z_x``."""
    if cfg.variant == "classifier-only":
        return lambda z, z_x: style_loss(z, classifier, cfg.target_label)
    weights = LossWeights(cfg.lambda_adv, cfg.lambda_sty)

    def full(z, z_x):
        loss = unsupervised_task_loss(z, z_x, weights, classifier, cfg.target_label)
        if discriminator is not None and cfg.lambda_adv > 0:
            loss = loss + adversarial_generator_loss(z, discriminator) * cfg.lambda_adv
        return loss
    return full


def _target_prob(classifier, z, target):
    p = float(classifier.prob(z, const=True).data[0])
    return p if target == 1 else 1.0 - p


def fgim_refine(z_hat, z_x, loss_fn, classifier, cfg: FgimConfig) -> tuple[np.ndarray, FgimTrace]:
    """Descend ``loss_fn`` from ``z_hat`` until the classifier's target probability exceeds the threshold.

    Each stepsize restarts from ``z_hat`` and takes at most ``cfg.max_steps``
    steps; the first iterate above the threshold is returned.  If no stepsize
    succeeds the last iterate of the largest stepsize is returned.  A
    non-finite gradient aborts and returns ``z_hat`` unchanged.
    """
    start = np.asarray(z_hat, dtype=ad.DTYPE).reshape(1, -1)
    zx = ad.Tensor(np.asarray(z_x, dtype=ad.DTYPE).reshape(1, -1))
    trace = FgimTrace()
    if _target_prob(classifier, ad.Tensor(start), cfg.target_label) > cfg.threshold:
        trace.success = True
        return start[0].copy(), trace
    z = start
    for omega in cfg.stepsizes:
        z = start.copy()
        taken = 0
        for _ in range(cfg.max_steps):
            zt = ad.Tensor(z, requires_grad=True)
            loss_fn(zt, zx).backward()
            g = zt.grad
            if g is None or not np.all(np.isfinite(g)):
                log.warning("FGIM aborted: non-finite gradient at stepsize %s", omega)
                trace.steps.append(taken)
                trace.aborted = True
                return start[0].copy(), trace
            z = z - omega * g
            taken += 1
            if _target_prob(classifier, ad.Tensor(z), cfg.target_label) > cfg.threshold:
                trace.steps.append(taken)
                trace.stepsize, trace.success = omega, True
                return z[0], trace
        trace.steps.append(taken)
    return z[0], trace


def fgim_batch(z_hat, z_x, loss_fn, classifier, cfg: FgimConfig) -> tuple[np.ndarray, list]:
    out, traces = [], []
    for zh, zx in zip(np.asarray(z_hat), np.asarray(z_x)):
        z, tr = fgim_refine(zh, zx, loss_fn, classifier, cfg)
        out.append(z)
        traces.append(tr)
    return np.stack(out) if out else np.zeros_like(np.asarray(z_hat)), traces
