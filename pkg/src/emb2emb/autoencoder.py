"""Bidirectional-LSTM sentence autoencoder and its denoising pretraining loop."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .text import BOS, EOS, PAD, NoiseConfig, Vocab, apply_noise, batch_indices, pad_batch

log = logging.getLogger(__name__)


@dataclass
class DAEConfig:
    dim: int = 64
    emb_dim: int = 300
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    tf_prob: float = 0.5
    p_drop: float = 0.1
    seed: int = 0
    patience: int = 20
    shared_embeddings: bool = True
    max_decode_len: int = 100


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class Autoencoder:
    """``enc``: mean of the final forward/backward LSTM states; ``dec``: LSTM seeded with the code."""

    def __init__(self, vocab: Vocab, cfg: DAEConfig, params: dict | None = None):
        self.vocab = vocab
        self.cfg = cfg
        self.frozen = False
        if params is None:
            params = self._init_params(np.random.default_rng([cfg.seed, 1]))
        self.params = {k: ad.parameter(v) for k, v in params.items()}

    def _init_params(self, rng):
        v, e, d = len(self.vocab), self.cfg.emb_dim, self.cfg.dim
        b = 1.0 / math.sqrt(d)
        p = {"embedding": rng.normal(0.0, 0.1, (v, e))}
        for pre in ("enc_fwd", "enc_bwd", "dec"):
            p[f"{pre}_wih"] = _uniform(rng, (e, 4 * d), b)
            p[f"{pre}_whh"] = _uniform(rng, (d, 4 * d), b)
            p[f"{pre}_bias"] = _uniform(rng, (4 * d,), b)
        if not self.cfg.shared_embeddings:
            p["dec_embedding"] = rng.normal(0.0, 0.1, (v, e))
        p["out_w"] = _uniform(rng, (d, v), b)
        p["out_b"] = _uniform(rng, (v,), b)
        return p

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def trainable(self) -> list:
        return list(self.params.values())

    def freeze(self) -> "Autoencoder":
        for t in self.params.values():
            t.requires_grad = False
            t.grad = None
            t.data.flags.writeable = False
        self.frozen = True
        return self

    def digest(self) -> str:
        return checkpoint.params_digest({k: t.data for k, t in self.params.items()})

    # -- encoder ---------------------------------------------------------------

    def _run_direction(self, ids, lengths, prefix):
        d = self.cfg.dim
        p = self.params
        bsz, width = ids.shape
        emb = ad.embedding(p["embedding"], ids.T)                      # T x B x E
        xw = ad.linear(emb.reshape(width * bsz, -1), p[f"{prefix}_wih"], p[f"{prefix}_bias"])
        xw = xw.reshape(width, bsz, 4 * d)
        h = ad.Tensor(np.zeros((bsz, d)))
        c = h
        for t in range(width):
            hc = ad.lstm_cell(xw[t], h, c, p[f"{prefix}_whh"], mask=t < lengths)
            h, c = hc[:, :d], hc[:, d:]
        return h

    def encode(self, ids, lengths) -> ad.Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if lengths.size == 0 or lengths.min() < 1:
            raise ValueError("cannot encode an empty sequence")
        rev = np.full_like(ids, PAD)
        for r, n in enumerate(lengths):
            rev[r, :n] = ids[r, :n][::-1]
        fwd = self._run_direction(ids, lengths, "enc_fwd")
        bwd = self._run_direction(rev, lengths, "enc_bwd")
        return (fwd + bwd) * 0.5

    def encode_ids(self, seqs, batch_size: int = 256) -> np.ndarray:
        """Encode token-id sequences without building a graph."""
        out = []
        for lo in range(0, len(seqs), batch_size):
            ids, lengths = pad_batch(seqs[lo: lo + batch_size])
            out.append(self._const_encode(ids, lengths))
        return np.concatenate(out) if out else np.zeros((0, self.dim))

    def _const_encode(self, ids, lengths):
        saved = {k: t.requires_grad for k, t in self.params.items()}
        for t in self.params.values():
            t.requires_grad = False
        try:
            return self.encode(ids, lengths).data
        finally:
            for k, t in self.params.items():
                t.requires_grad = saved[k]

    # -- decoder ---------------------------------------------------------------

    def _dec_embedding(self):
        return self.params["embedding" if self.cfg.shared_embeddings else "dec_embedding"]

    def _check_code(self, z):
        if z.ndim != 2 or z.shape[1] != self.cfg.dim:
            raise ad.DimensionError(f"decoder expects codes of width {self.cfg.dim}, got shape {z.shape}")

    def decode_teacher_forced(self, z, targets, lengths, tf_prob: float, rng) -> ad.Tensor:
        """Mean masked cross-entropy of reconstructing ``targets`` (+EOS) from ``z``.

        At each step the whole batch is fed the gold previous token with
        probability ``tf_prob``, otherwise its own previous argmax.
        """
        z = ad.as_tensor(z)
        self._check_code(z)
        p = self.params
        d = self.cfg.dim
        targets = np.asarray(targets, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        bsz = targets.shape[0]
        steps = targets.shape[1] + 1
        gold = np.full((bsz, steps), PAD, dtype=np.int64)
        gold[:, :-1] = targets
        gold[np.arange(bsz), lengths] = EOS
        h, c = z, ad.Tensor(np.zeros((bsz, d)))
        emb = self._dec_embedding()
        inp = np.full(bsz, BOS, dtype=np.int64)
        states = []
        for t in range(steps):
            xw = ad.linear(ad.embedding(emb, inp), p["dec_wih"], p["dec_bias"])
            hc = ad.lstm_cell(xw, h, c, p["dec_whh"])
            h, c = hc[:, :d], hc[:, d:]
            states.append(h)
            if t + 1 < steps:
                if rng.random() < tf_prob:
                    inp = gold[:, t]
                else:
                    inp = np.argmax(h.data @ p["out_w"].data + p["out_b"].data, axis=1)
        hs = ad.stack(states, axis=0).reshape(steps * bsz, d)
        logits = ad.linear(hs, p["out_w"], p["out_b"])
        flat = gold.T.reshape(-1)
        mask = (np.arange(steps)[:, None] <= lengths[None, :]).reshape(-1)
        return ad.softmax_cross_entropy(logits, flat, mask)

    def decode_greedy(self, z, max_len: int | None = None) -> list[list[int]]:
        """Argmax decoding from BOS until EOS or ``max_len`` tokens; EOS is not returned."""
        z = np.asarray(z.data if isinstance(z, ad.Tensor) else z, dtype=ad.DTYPE)
        self._check_code(z)
        max_len = self.cfg.max_decode_len if max_len is None else max_len
        p = {k: t.data for k, t in self.params.items()}
        emb = p["embedding" if self.cfg.shared_embeddings else "dec_embedding"]
        d = self.cfg.dim
        bsz = z.shape[0]
        h, c = z.copy(), np.zeros((bsz, d))
        inp = np.full(bsz, BOS, dtype=np.int64)
        out = [[] for _ in range(bsz)]
        done = np.zeros(bsz, dtype=bool)
        for _ in range(max_len):
            xw = emb[inp] @ p["dec_wih"] + p["dec_bias"]
            hc = ad.lstm_cell(xw, h, c, p["dec_whh"]).data
            h, c = hc[:, :d], hc[:, d:]
            inp = np.argmax(h @ p["out_w"] + p["out_b"], axis=1)
            for r in np.flatnonzero(~done):
                if inp[r] == EOS:
                    done[r] = True
                else:
                    out[r].append(int(inp[r]))
            if done.all():
                break
        return out

    def decode_codes(self, codes, batch_size: int = 256, max_len: int | None = None) -> list[str]:
        from .text import decode_tokens
        out = []
        for lo in range(0, len(codes), batch_size):
            out.extend(decode_tokens(s, self.vocab) for s in self.decode_greedy(codes[lo: lo + batch_size], max_len))
        return out

    def encode_texts(self, texts, batch_size: int = 256) -> np.ndarray:
        from .text import encode_text
        return self.encode_ids([encode_text(t, self.vocab) or [self.vocab.id("")] for t in texts], batch_size)

    # -- persistence -----------------------------------------------------------

    def to_section(self, name: str = "autoencoder") -> checkpoint.Section:
        meta = {"config": asdict(self.cfg), "vocab": self.vocab.itos, "vocab_cap": self.vocab.cap,
                "frozen": self.frozen, "digest": self.digest()}
        return checkpoint.Section(name, meta, {k: t.data for k, t in self.params.items()})

    @classmethod
    def from_section(cls, sec: checkpoint.Section) -> "Autoencoder":
        meta = sec.meta
        vocab = Vocab(meta["vocab"][4:], cap=meta["vocab_cap"])
        cfg = DAEConfig(**meta["config"])
        model = cls(vocab, cfg, params={k: np.array(v) for k, v in sec.arrays.items()})
        expected = model._init_shapes()
        got = {k: t.shape for k, t in model.params.items()}
        if expected != got:
            raise checkpoint.CheckpointError(f"parameter shapes {got} do not match config {expected}")
        if meta.get("frozen"):
            model.freeze()
        return model

    def _init_shapes(self):
        v, e, d = len(self.vocab), self.cfg.emb_dim, self.cfg.dim
        shapes = {"embedding": (v, e), "out_w": (d, v), "out_b": (v,)}
        for pre in ("enc_fwd", "enc_bwd", "dec"):
            shapes.update({f"{pre}_wih": (e, 4 * d), f"{pre}_whh": (d, 4 * d), f"{pre}_bias": (4 * d,)})
        if not self.cfg.shared_embeddings:
            shapes["dec_embedding"] = (v, e)
        return shapes

    def save(self, path) -> None:
        checkpoint.save(path, [self.to_section()])

    @classmethod
    def load(cls, path) -> "Autoencoder":
        secs = checkpoint.load(path)
        if "autoencoder" not in secs:
            raise checkpoint.CheckpointError(f"{path}: no autoencoder section")
        return cls.from_section(secs["autoencoder"])


def reconstruction_accuracy(model: Autoencoder, seqs, batch_size: int = 256) -> float:
    """Token accuracy of greedy reconstructions, compared position-wise against ``x + [EOS]``."""
    correct = total = 0
    for lo in range(0, len(seqs), batch_size):
        chunk = seqs[lo: lo + batch_size]
        ids, lengths = pad_batch(chunk)
        preds = model.decode_greedy(model._const_encode(ids, lengths), max_len=int(lengths.max()) + 1)
        for ref, hyp in zip(chunk, preds):
            ref = list(ref) + [EOS]
            hyp = list(hyp) + [EOS]
            correct += sum(1 for i, tok in enumerate(ref) if i < len(hyp) and hyp[i] == tok)
            total += len(ref)
    return correct / total if total else 0.0


# -- pretraining ---------------------------------------------------------------

@dataclass
class TrainState:
    epoch: int = 0
    best_score: float = -1.0
    best_epoch: int = 0
    bad_epochs: int = 0
    history: list = field(default_factory=list)


class DAETrainer:
    """Denoising-autoencoder training with per-epoch validation and early stopping.

    Every epoch draws its randomness from ``default_rng([seed, epoch])`` so a
    run resumed from a saved state replays the uninterrupted run exactly.
    """

    def __init__(self, model: Autoencoder, corpus, valid=None):
        if not corpus:
            raise ValueError("cannot pretrain on an empty corpus")
        self.model = model
        self.cfg = model.cfg
        self.corpus = [list(s) for s in corpus]
        self.valid = [list(s) for s in (valid if valid else corpus)]
        self.opt = ad.Adam(model.trainable(), lr=self.cfg.lr)
        self.state = TrainState()
        self.best = {k: t.data.copy() for k, t in model.params.items()}
        self.noise = NoiseConfig(self.cfg.p_drop, self.cfg.seed)

    def run_epoch(self) -> float:
        cfg, model = self.cfg, self.model
        rng = np.random.default_rng([cfg.seed, 2, self.state.epoch])
        losses = []
        for idx in batch_indices(len(self.corpus), cfg.batch_size, shuffle=True, rng=rng):
            clean = [self.corpus[i] for i in idx]
            noisy = [apply_noise(s, self.noise, rng) for s in clean]
            src, src_len = pad_batch(noisy)
            tgt, tgt_len = pad_batch(clean)
            self.opt.zero_grad()
            loss = model.decode_teacher_forced(model.encode(src, src_len), tgt, tgt_len, cfg.tf_prob, rng)
            if not np.isfinite(loss.item()):
                raise FloatingPointError(
                    f"autoencoder loss diverged at epoch {self.state.epoch + 1} (lr={cfg.lr})")
            loss.backward()
            self.opt.step()
            losses.append(loss.item())
        self.state.epoch += 1
        return float(np.mean(losses))

    @property
    def finished(self) -> bool:
        s = self.state
        return s.epoch >= self.cfg.epochs or s.bad_epochs >= self.cfg.patience or s.best_score >= 1.0

    def fit(self, epochs: int | None = None, callback=None) -> Autoencoder:
        """Train until ``epochs`` total epochs (default ``cfg.epochs``) or early stop."""
        limit = self.cfg.epochs if epochs is None else epochs
        while self.state.epoch < limit and not self.finished:
            loss = self.run_epoch()
            acc = reconstruction_accuracy(self.model, self.valid)
            s = self.state
            row = {"epoch": s.epoch, "loss": loss, "valid_accuracy": acc}
            s.history.append(row)
            if acc > s.best_score:
                s.best_score, s.best_epoch, s.bad_epochs = acc, s.epoch, 0
                self.best = {k: t.data.copy() for k, t in self.model.params.items()}
            else:
                s.bad_epochs += 1
            log.info("dae epoch %d loss %.4f valid token accuracy %.4f", s.epoch, loss, acc)
            if callback is not None:
                callback(row)
        return self.model

    def best_model(self) -> Autoencoder:
        model = Autoencoder(self.model.vocab, self.cfg, params={k: v.copy() for k, v in self.best.items()})
        return model.freeze()

    # resumable state
    def save_state(self, path) -> None:
        arrays = {}
        for i, (m, v) in enumerate(zip(self.opt.state.m, self.opt.state.v)):
            arrays[f"m{i}"], arrays[f"v{i}"] = m, v
        arrays.update({f"best/{k}": v for k, v in self.best.items()})
        meta = {"state": asdict(self.state), "adam_t": self.opt.state.t}
        checkpoint.save(path, [self.model.to_section("current"), checkpoint.Section("trainer", meta, arrays)])

    @classmethod
    def from_state(cls, path, corpus, valid=None, cfg_overrides: dict | None = None) -> "DAETrainer":
        secs = checkpoint.load(path)
        model = Autoencoder.from_section(secs["current"])
        if cfg_overrides:
            for k, v in cfg_overrides.items():
                setattr(model.cfg, k, v)
        trainer = cls(model, corpus, valid)
        tr = secs["trainer"]
        trainer.state = TrainState(**tr.meta["state"])
        trainer.opt.state.t = tr.meta["adam_t"]
        n = len(model.params)
        if trainer.opt.state.t:
            trainer.opt.state.m = [np.array(tr.arrays[f"m{i}"]) for i in range(n)]
            trainer.opt.state.v = [np.array(tr.arrays[f"v{i}"]) for i in range(n)]
        trainer.best = {k[5:]: np.array(v) for k, v in tr.arrays.items() if k.startswith("best/")}
        return trainer


def pretrain_dae(corpus, vocab: Vocab, cfg: DAEConfig, valid=None, callback=None) -> Autoencoder:
    """Pretrain a denoising autoencoder on token-id sequences; return the best frozen checkpoint."""
    trainer = DAETrainer(Autoencoder(vocab, cfg), corpus, valid)
    trainer.fit(callback=callback)
    return trainer.best_model()
