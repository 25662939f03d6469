"""Loss terms, latent classifiers and the alternating Emb2Emb training loop."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .mapping import Mapping

log = logging.getLogger(__name__)

LAMBDA_ADV_GRID = (0.008, 0.016, 0.032, 0.064, 0.128)
LAMBDA_STY_GRID = (0.1, 0.5, 0.9, 0.95, 0.99)


@dataclass
class LossWeights:
    lambda_adv: float = 0.0
    lambda_sty: float = 0.5
    adv_grid: tuple = LAMBDA_ADV_GRID
    sty_grid: tuple = LAMBDA_STY_GRID

    def __post_init__(self):
        if self.lambda_adv < 0:
            raise ValueError(f"lambda_adv must be >= 0, got {self.lambda_adv}")
        if not 0.0 <= self.lambda_sty <= 1.0:
            raise ValueError(f"lambda_sty must lie in [0, 1], got {self.lambda_sty}")
        if not self.adv_grid or not self.sty_grid:
            raise ValueError("sweep grids must be nonempty")
        if any(not 0.0 <= s <= 1.0 for s in self.sty_grid):
            raise ValueError("lambda_sty grid values must lie in [0, 1]")


# -- latent classifiers --------------------------------------------------------

class LatentMLP:
    """Binary MLP over embeddings returning one logit per row.

    Hidden layers use ReLU.  ``input_noise`` and ``dropout`` are applied only
    when ``train=True``.
    """

    def __init__(self, dim: int, hidden: tuple, rng, input_noise: float = 0.0, dropout: float = 0.0,
                 params: dict | None = None):
        self.dim = dim
        self.hidden = tuple(hidden)
        self.input_noise = input_noise
        self.dropout = dropout
        self.frozen = False
        if params is None:
            params = {}
            sizes = (dim,) + self.hidden + (1,)
            for j, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
                b = 1.0 / math.sqrt(n_in)
                params[f"w{j}"] = rng.uniform(-b, b, (n_in, n_out))
                params[f"b{j}"] = rng.uniform(-b, b, n_out)
        self.params = {k: ad.parameter(v) for k, v in params.items()}

    @property
    def n_layers(self):
        return len(self.hidden) + 1

    def trainable(self):
        return [t for t in self.params.values() if t.requires_grad]

    def freeze(self):
        for t in self.params.values():
            t.requires_grad = False
            t.grad = None
            t.data.flags.writeable = False
        self.frozen = True
        return self

    def digest(self) -> str:
        return checkpoint.params_digest({k: t.data for k, t in self.params.items()})

    def _drop(self, x, rng):
        if self.dropout <= 0:
            return x
        keep = (rng.random(x.shape) >= self.dropout) / (1.0 - self.dropout)
        return x * keep

    def logits(self, z, train: bool = False, rng=None, const: bool = False):
        """``const=True`` treats the weights as constants so no gradient reaches them."""
        x = ad.as_tensor(z)
        if x.shape[-1] != self.dim:
            raise ad.DimensionError(f"classifier expects width {self.dim}, got shape {x.shape}")
        p = {k: ad.Tensor(t.data) for k, t in self.params.items()} if const else self.params
        if train:
            if self.input_noise > 0:
                x = x + rng.normal(0.0, self.input_noise, x.shape)
            x = self._drop(x, rng)
        for j in range(self.n_layers):
            x = ad.linear(x, p[f"w{j}"], p[f"b{j}"])
            if j < self.n_layers - 1:
                x = ad.relu(x)
                if train:
                    x = self._drop(x, rng)
        return x.reshape(x.shape[0])

    def prob(self, z, **kw):
        return ad.sigmoid(self.logits(z, **kw))

    def predict(self, z) -> np.ndarray:
        return (self.logits(np.asarray(z), const=True).data > 0).astype(np.int64)

    def to_section(self, name: str, extra_meta: dict | None = None) -> checkpoint.Section:
        meta = {"dim": self.dim, "hidden": list(self.hidden), "input_noise": self.input_noise,
                "dropout": self.dropout, "frozen": self.frozen, **(extra_meta or {})}
        return checkpoint.Section(name, meta, {k: t.data for k, t in self.params.items()})

    @classmethod
    def from_section(cls, sec: checkpoint.Section):
        m = sec.meta
        obj = cls(m["dim"], tuple(m["hidden"]), None, m["input_noise"], m["dropout"],
                  params={k: np.array(v) for k, v in sec.arrays.items()})
        if m.get("frozen"):
            obj.freeze()
        return obj


def make_style_classifier(dim: int, rng, hidden: int = 512, input_noise: float = 0.5,
                          dropout: float = 0.5) -> LatentMLP:
    """``hidden=0`` gives a linear (logistic) classifier."""
    return LatentMLP(dim, (hidden,) if hidden else (), rng, input_noise=input_noise, dropout=dropout)


def make_discriminator(dim: int, rng, hidden: int = 300) -> LatentMLP:
    return LatentMLP(dim, (hidden,), rng)


# -- loss terms ----------------------------------------------------------------

def supervised_task_loss(z_hat, z_y):
    return ad.mean(ad.cosine_distance(z_hat, z_y))


def content_loss(z_hat, z_x):
    return ad.mean(ad.cosine_distance(z_hat, z_x))


def style_loss(z_hat, classifier: LatentMLP, target: int = 1):
    """Mean ``-log c(z)`` for the target attribute (``-log(1 - c(z))`` when target is 0)."""
    logit = classifier.logits(z_hat, const=True)
    return ad.mean(-ad.log_sigmoid(logit if target == 1 else -logit))


def unsupervised_task_loss(z_hat, z_x, weights: LossWeights, classifier: LatentMLP, target: int = 1):
    lam = weights.lambda_sty
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda_sty must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return content_loss(z_hat, z_x)
    if lam == 1.0:
        return style_loss(z_hat, classifier, target)
    return style_loss(z_hat, classifier, target) * lam + content_loss(z_hat, z_x) * (1.0 - lam)


def discriminator_objective(z_real, z_fake, disc: LatentMLP):
    """BCE form of the discriminator's objective; mean over the batch of both log terms.

    ``z_fake`` is detached, so nothing flows back into the mapping.
    """
    real = disc.logits(ad.as_tensor(z_real).detach())
    fake = disc.logits(ad.as_tensor(z_fake).detach())
    return ad.mean(-ad.log_sigmoid(real) - ad.log_sigmoid(-fake))


def adversarial_generator_loss(z_hat, disc: LatentMLP):
    """Mean ``-log disc(z_hat)``; the discriminator is held constant."""
    return ad.mean(-ad.log_sigmoid(disc.logits(z_hat, const=True)))


def total_loss(task, adv, weights: LossWeights | float):
    lam = weights.lambda_adv if isinstance(weights, LossWeights) else float(weights)
    if lam < 0:
        raise ValueError(f"lambda_adv must be >= 0, got {lam}")
    if lam == 0.0 or adv is None:
        return task
    return task + adv * lam


def sample_negatives(mode: str, batch_index, z_targets, z_pool, rng) -> np.ndarray:
    """Real encodings for the discriminator.

    Supervised: the gold target encodings of the batch.  Unsupervised: a
    uniform draw (with replacement) from the pool of training encodings.
    """
    if mode == "supervised":
        return np.asarray(z_targets)[batch_index]
    if mode == "unsupervised":
        if len(z_pool) == 0:
            raise ValueError("negative pool is empty")
        return np.asarray(z_pool)[rng.integers(len(z_pool), size=len(batch_index))]
    raise ValueError(f"unknown mode {mode!r}")


# -- style classifier training ------------------------------------------------

@dataclass
class ClassifierConfig:
    hidden: int = 512
    lr: float = 1e-4
    epochs: int = 30
    batch_size: int = 64
    input_noise: float = 0.5
    dropout: float = 0.5
    holdout: float = 0.1
    patience: int = 10
    seed: int = 0


@dataclass
class ClassifierResult:
    classifier: LatentMLP
    heldout_accuracy: float
    history: list


def train_latent_classifier(z: np.ndarray, labels, cfg: ClassifierConfig) -> ClassifierResult:
    """Train on encodings with noise/dropout; keep the best held-out epoch and freeze it."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(set(labels.tolist())) < 2:
        raise ValueError("style classifier needs examples of both classes")
    rng = np.random.default_rng([cfg.seed, 3])
    order = rng.permutation(len(labels))
    n_hold = max(1, int(round(cfg.holdout * len(labels)))) if cfg.holdout > 0 else 0
    hold, train = order[:n_hold], order[n_hold:]
    clf = make_style_classifier(z.shape[1], rng, cfg.hidden, cfg.input_noise, cfg.dropout)
    opt = ad.Adam(clf.trainable(), lr=cfg.lr)
    best, best_acc, bad, history = None, -1.0, 0, []
    eval_idx = hold if n_hold else train
    for epoch in range(1, cfg.epochs + 1):
        perm = train[rng.permutation(len(train))]
        losses = []
        for lo in range(0, len(perm), cfg.batch_size):
            idx = perm[lo: lo + cfg.batch_size]
            opt.zero_grad()
            logit = clf.logits(z[idx], train=True, rng=rng)
            y = labels[idx]
            loss = ad.mean(-ad.log_sigmoid(logit * (2.0 * y - 1.0)))
            loss.backward()
            opt.step()
            losses.append(loss.item())
        acc = float(np.mean(clf.predict(z[eval_idx]) == labels[eval_idx]))
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "heldout_accuracy": acc})
        if acc > best_acc:
            best_acc, bad = acc, 0
            best = {k: t.data.copy() for k, t in clf.params.items()}
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    final = LatentMLP(z.shape[1], (cfg.hidden,) if cfg.hidden else (), None, cfg.input_noise, cfg.dropout, params=best)
    return ClassifierResult(final.freeze(), best_acc, history)


def train_style_classifier(ae, corpus, cfg: ClassifierConfig) -> ClassifierResult:
    if not getattr(ae, "frozen", False):
        raise ValueError("the autoencoder must be frozen before training a style classifier")
    return train_latent_classifier(ae.encode_texts(corpus.texts), corpus.labels, cfg)


# -- Emb2Emb training ------------------------------------------------------------

@dataclass
class Emb2EmbConfig:
    mode: str = "supervised"
    lambda_adv: float = 0.0
    lambda_sty: float = 0.5
    epochs: int = 10
    lr: float = 1e-4
    disc_lr: float = 1e-5
    disc_hidden: int = 300
    batch_size: int = 64
    seed: int = 0
    target_label: int = 1

    def __post_init__(self):
        if self.mode not in ("supervised", "unsupervised"):
            raise ValueError(f"mode must be supervised or unsupervised, got {self.mode!r}")
        LossWeights(self.lambda_adv, self.lambda_sty)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_adv, self.lambda_sty)


@dataclass
class Emb2EmbResult:
    mapping: Mapping
    discriminator: Optional[LatentMLP]
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")


LOG_FIELDS = ("epoch", "task_loss", "adv_loss", "disc_loss", "valid_metric")


def write_log(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in history:
            w.writerow({k: row[k] for k in LOG_FIELDS})


def train_emb2emb(mapping: Mapping, z_x: np.ndarray, cfg: Emb2EmbConfig, z_y: np.ndarray | None = None,
                  classifier: LatentMLP | None = None, z_pool: np.ndarray | None = None,
                  validate: Callable[[Mapping], float] | None = None,
                  frozen: tuple = ()) -> Emb2EmbResult:
    """Alternate one mapping update and one discriminator update per batch.

    ``z_x``/``z_y`` are precomputed encodings from the frozen autoencoder.
    ``validate`` scores the current mapping after each epoch (higher is
    better) and the best-scoring parameters are returned; without it the
    final epoch wins.  ``frozen`` lists components (autoencoder, classifier)
    whose parameter digests must not change.
    """
    if cfg.mode == "supervised" and z_y is None:
        raise ValueError("supervised training needs target encodings")
    if cfg.mode == "unsupervised":
        if classifier is None or not classifier.frozen:
            raise ValueError("unsupervised training needs a frozen style classifier")
        z_pool = z_x if z_pool is None else z_pool
    for comp in frozen:
        if not comp.frozen:
            raise ValueError(f"{type(comp).__name__} must be frozen before mapping training")
    if mapping.kind == "meanoffset":
        raise ValueError("mean-offset mappings have nothing to train")
    digests = [c.digest() for c in frozen]
    weights = cfg.weights
    rng = np.random.default_rng([cfg.seed, 4])
    opt = ad.Adam(mapping.trainable(), lr=cfg.lr)
    use_adv = cfg.lambda_adv > 0
    disc = make_discriminator(mapping.dim, np.random.default_rng([cfg.seed, 5]), cfg.disc_hidden)
    disc_opt = ad.Adam(disc.trainable(), lr=cfg.disc_lr)
    history, best, best_metric, best_epoch = [], mapping.copy_params(), -math.inf, 0
    n = len(z_x)
    for epoch in range(1, cfg.epochs + 1):
        sums = {"task_loss": 0.0, "adv_loss": 0.0, "disc_loss": 0.0}
        batches = 0
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo: lo + cfg.batch_size]
            zx = ad.Tensor(z_x[idx])
            opt.zero_grad()
            z_hat = mapping(zx)
            if cfg.mode == "supervised":
                task = supervised_task_loss(z_hat, z_y[idx])
            else:
                task = unsupervised_task_loss(z_hat, zx, weights, classifier, cfg.target_label)
            adv = adversarial_generator_loss(z_hat, disc) if use_adv else None
            loss = total_loss(task, adv, weights)
            if not np.isfinite(loss.item()):
                raise FloatingPointError(
                    f"mapping loss diverged at epoch {epoch} (lambda_adv={cfg.lambda_adv}, "
                    f"lambda_sty={cfg.lambda_sty})")
            loss.backward()
            opt.step()
            sums["task_loss"] += task.item()
            if use_adv:
                sums["adv_loss"] += adv.item()
                real = sample_negatives(cfg.mode, idx, z_y, z_pool, rng)
                disc_opt.zero_grad()
                d_loss = discriminator_objective(real, z_hat.detach(), disc)
                d_loss.backward()
                disc_opt.step()
                sums["disc_loss"] += d_loss.item()
            batches += 1
        row = {"epoch": epoch, **{k: v / batches for k, v in sums.items()}}
        metric = validate(mapping) if validate is not None else -row["task_loss"]
        row["valid_metric"] = metric
        history.append(row)
        log.info("emb2emb epoch %d task %.5f adv %.5f disc %.5f valid %.5f", epoch, row["task_loss"],
                 row["adv_loss"], row["disc_loss"], metric)
        if metric > best_metric:
            best_metric, best_epoch, best = metric, epoch, mapping.copy_params()
    mapping.load_params(best)
    if [c.digest() for c in frozen] != digests:
        raise RuntimeError("a frozen component changed during mapping training")
    return Emb2EmbResult(mapping, disc if use_adv else None, history, best_epoch, best_metric)

