"""High-level composition of the frozen autoencoder with a mapping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autoencoder import Autoencoder
from .evaluation import bleu, self_bleu
from .fgim import FgimConfig, fgim_batch, make_loss
from .mapping import Mapping, make_mapping
from .objectives import Emb2EmbConfig, Emb2EmbResult, LatentMLP, train_emb2emb


def map_codes(mapping: Mapping, z: np.ndarray) -> np.ndarray:
    return mapping(ad.Tensor(z)).data if len(z) else np.zeros_like(z)


@dataclass
class Emb2Emb:
    """``dec(fgim?(mapping(enc(x))))`` over raw text."""

    autoencoder: Autoencoder
    mapping: Mapping
    classifier: LatentMLP | None = None
    discriminator: LatentMLP | None = None

    def transfer_codes(self, texts, fgim: FgimConfig | None = None):
        z_x = self.autoencoder.encode_texts(texts)
        z_hat = map_codes(self.mapping, z_x)
        traces = None
        if fgim is not None:
            if self.classifier is None:
                raise ValueError("FGIM needs a style classifier")
            loss = make_loss(fgim, self.classifier, self.discriminator)
            z_hat, traces = fgim_batch(z_hat, z_x, loss, self.classifier, fgim)
        return z_hat, traces

    def transfer(self, texts, fgim: FgimConfig | None = None, max_len: int | None = None) -> list[str]:
        texts = list(texts)
        if not texts:
            return []
        z_hat, _ = self.transfer_codes(texts, fgim)
        return self.autoencoder.decode_codes(z_hat, max_len=max_len)


def decode_len(texts, slack: int = 5) -> int:
    return max((len(t.split()) for t in texts), default=0) + slack


def bleu_validator(ae: Autoencoder, sources, reference_sets):
    """Corpus BLEU of decoded predictions on a validation set."""
    z = ae.encode_texts(sources)
    cap = decode_len([r for refs in reference_sets for r in refs])

    def validate(mapping: Mapping) -> float:
        return bleu(ae.decode_codes(map_codes(mapping, z), max_len=cap), reference_sets)
    return validate


def transfer_validator(ae: Autoencoder, classifier: LatentMLP, texts, target: int = 1):
    """Self-BLEU plus the latent classifier's accuracy on re-encoded outputs."""
    z = ae.encode_texts(texts)
    cap = decode_len(texts)

    def validate(mapping: Mapping) -> float:
        out = ae.decode_codes(map_codes(mapping, z), max_len=cap)
        acc = float(np.mean(classifier.predict(ae.encode_texts(out)) == target))
        return self_bleu(texts, out) + acc
    return validate


def train_supervised(ae: Autoencoder, sources, targets, cfg: Emb2EmbConfig, kind: str = "offsetnet",
                     valid=None, layers: int = 1) -> Emb2EmbResult:
    """``valid`` is an optional ``(sources, reference_sets)`` pair used for BLEU model selection."""
    z_x, z_y = ae.encode_texts(sources), ae.encode_texts(targets)
    mapping = make_mapping(kind, ae.dim, np.random.default_rng([cfg.seed, 6]), layers=layers)
    validate = bleu_validator(ae, *valid) if valid is not None else None
    return train_emb2emb(mapping, z_x, cfg, z_y=z_y, validate=validate, frozen=(ae,))


def train_unsupervised(ae: Autoencoder, classifier: LatentMLP, texts, cfg: Emb2EmbConfig,
                       kind: str = "offsetnet", valid_texts=None, pool_texts=None,
                       layers: int = 1) -> Emb2EmbResult:
    """``texts`` are the source-style sentences to be transferred; ``pool_texts`` feeds negative sampling."""
    z_x = ae.encode_texts(texts)
    z_pool = ae.encode_texts(pool_texts) if pool_texts is not None else None
    mapping = make_mapping(kind, ae.dim, np.random.default_rng([cfg.seed, 6]), layers=layers)
    validate = transfer_validator(ae, classifier, valid_texts, cfg.target_label) if valid_texts else None
    return train_emb2emb(mapping, z_x, cfg, classifier=classifier, z_pool=z_pool, validate=validate,
                         frozen=(ae, classifier))
