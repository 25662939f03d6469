"""Command-line entry point.

Every subcommand reads a flat ``key = value`` config file (``--config``),
applies per-key flag overrides (``--lambda-adv 0.032`` ...), writes the
resolved config to ``--out DIR/config.txt`` and puts all artifacts in that
directory.  Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .autoencoder import Autoencoder, DAEConfig, DAETrainer, reconstruction_accuracy
from .checkpoint import CheckpointError
from .evaluation import (TextJudge, bleu, bleu_report, sari, sari_report, select_lambda_adv, self_bleu,
                         tradeoff_sweep, transfer_accuracy, write_sweep_csv)
from .fgim import VARIANTS, FgimConfig
from .mapping import KINDS, Mapping, fit_mean_offsets
from .objectives import (ClassifierConfig, Emb2EmbConfig, LatentMLP, train_style_classifier, write_log)
from .pipeline import Emb2Emb, decode_len, train_supervised, train_unsupervised
from .text import build_vocab, encode_text, load_labeled, load_labeled_files, read_lines

log = logging.getLogger("emb2emb")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
LAMBDA_ADV_MAX = 10.0


class UsageError(Exception):
    """Bad flags, config values or input files; maps to exit code 2."""


@dataclass
class RunConfig:
    seed: int = 0
    # autoencoder
    dim: int = 64
    emb_dim: int = 300
    vocab_cap: int = 30000
    dae_epochs: int = 50
    dae_batch_size: int = 64
    dae_lr: float = 1e-3
    dae_patience: int = 20
    p_drop: float = 0.1
    tf_prob: float = 0.5
    shared_embeddings: bool = True
    # style classifier
    clf_hidden: int = 512
    clf_epochs: int = 30
    clf_lr: float = 1e-4
    clf_batch_size: int = 64
    clf_patience: int = 10
    clf_noise: float = 0.5
    clf_dropout: float = 0.5
    # mapping
    mode: str = "supervised"
    mapping_kind: str = "offsetnet"
    layers: int = 1
    lambda_adv: float = 0.0
    lambda_sty: float = 0.5
    epochs: int = 10
    lr: float = 1e-4
    disc_lr: float = 1e-5
    disc_hidden: int = 300
    batch_size: int = 64
    target_label: int = 1
    multiplier: float = 1.0
    # inference
    max_decode_len: int = 100
    fgim: bool = False
    fgim_variant: str = "full-loss"
    fgim_threshold: float = 0.9
    # sweeps
    sweep_param: str = "lambda_sty"
    grid: str = "0.1,0.5,0.9,0.95,0.99"
    adv_grid: str = ""

    def validate(self) -> "RunConfig":
        checks = [
            (0.0 <= self.lambda_adv <= LAMBDA_ADV_MAX, f"lambda_adv must lie in [0, {LAMBDA_ADV_MAX:g}]"),
            (0.0 <= self.lambda_sty <= 1.0, "lambda_sty must lie in [0, 1]"),
            (0.0 <= self.p_drop <= 1.0, "p_drop must lie in [0, 1]"),
            (0.0 <= self.tf_prob <= 1.0, "tf_prob must lie in [0, 1]"),
            (0.0 <= self.fgim_threshold <= 1.0, "fgim_threshold must lie in [0, 1]"),
            (self.mode in ("supervised", "unsupervised"), "mode must be supervised or unsupervised"),
            (self.mapping_kind in KINDS, f"mapping_kind must be one of {', '.join(KINDS)}"),
            (self.fgim_variant in VARIANTS, f"fgim_variant must be one of {', '.join(VARIANTS)}"),
            (self.sweep_param in SWEEP_PARAMS, f"sweep_param must be one of {', '.join(SWEEP_PARAMS)}"),
            (self.target_label in (0, 1), "target_label must be 0 or 1"),
            (min(self.dim, self.emb_dim, self.layers, self.batch_size, self.dae_batch_size) >= 1,
             "sizes must be positive"),
            (min(self.lr, self.dae_lr, self.clf_lr, self.disc_lr) > 0, "learning rates must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise UsageError(msg)
        self.grid_values()
        self.adv_grid_values()
        return self

    def grid_values(self) -> list[float]:
        return _floats(self.grid, "grid")

    def adv_grid_values(self) -> list[float]:
        vals = _floats(self.adv_grid, "adv_grid") if self.adv_grid.strip() else []
        if any(not 0.0 <= v <= LAMBDA_ADV_MAX for v in vals):
            raise UsageError(f"adv_grid values must lie in [0, {LAMBDA_ADV_MAX:g}]")
        return vals

    def dae(self) -> DAEConfig:
        return DAEConfig(dim=self.dim, emb_dim=self.emb_dim, epochs=self.dae_epochs, batch_size=self.dae_batch_size,
                         lr=self.dae_lr, tf_prob=self.tf_prob, p_drop=self.p_drop, seed=self.seed,
                         patience=self.dae_patience, shared_embeddings=self.shared_embeddings,
                         max_decode_len=self.max_decode_len)

    def classifier(self) -> ClassifierConfig:
        return ClassifierConfig(hidden=self.clf_hidden, lr=self.clf_lr, epochs=self.clf_epochs,
                                batch_size=self.clf_batch_size, input_noise=self.clf_noise, dropout=self.clf_dropout,
                                patience=self.clf_patience, seed=self.seed)

    def emb2emb(self, **overrides) -> Emb2EmbConfig:
        kw = dict(mode=self.mode, lambda_adv=self.lambda_adv, lambda_sty=self.lambda_sty, epochs=self.epochs,
                  lr=self.lr, disc_lr=self.disc_lr, disc_hidden=self.disc_hidden, batch_size=self.batch_size,
                  seed=self.seed, target_label=self.target_label)
        kw.update(overrides)
        return Emb2EmbConfig(**kw)

    def fgim_config(self) -> FgimConfig | None:
        if not self.fgim:
            return None
        return FgimConfig(threshold=self.fgim_threshold, variant=self.fgim_variant, lambda_sty=self.lambda_sty,
                          lambda_adv=self.lambda_adv, target_label=self.target_label)


SWEEP_PARAMS = ("lambda_sty", "lambda_adv", "multiplier", "fgim_threshold")


def _floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise UsageError(f"{name} is empty")
    return vals


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CONVERT = {"int": int, "float": float, "str": str, "bool": _parse_bool}


def _convert(key: str, raw):
    if key not in _FIELD_TYPES:
        raise UsageError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    try:
        return _CONVERT[_FIELD_TYPES[key]](raw.strip())
    except ValueError as exc:
        raise UsageError(f"config key {key}: {exc}") from exc


def read_config(path) -> dict:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        out[key] = _convert(key, value)
    return out


def write_config(path, cfg: RunConfig, inputs: dict | None = None) -> None:
    """Write ``cfg`` in the format :func:`read_config` accepts.

    ``inputs`` (flag name to path) are recorded as comment lines, so the file
    documents the whole run while staying loadable as a config.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for flag, value in (inputs or {}).items():
            fh.write(f"# --{flag} {value}\n")
        for key, value in asdict(cfg).items():
            fh.write(f"{key} = {str(value).lower() if isinstance(value, bool) else value}\n")


_NOT_INPUTS = {"command", "config", "out", "verbose", "resume"}


def _inputs(args) -> dict:
    out = {}
    for key, value in vars(args).items():
        if key.startswith("cfg_") or key in _NOT_INPUTS or value in (None, False):
            continue
        out[key.replace("_", "-")] = " ".join(map(str, value)) if isinstance(value, list) else value
    return out


def resolve_config(args) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    for f in fields(RunConfig):
        flag = getattr(args, f"cfg_{f.name}", None)
        if flag is not None:
            values[f.name] = _convert(f.name, flag)
    return RunConfig(**values).validate()


# -- file helpers ------------------------------------------------------------------

def _need(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _lines(path, what: str) -> list[str]:
    return read_lines(_need(path, what))


def _load_ae(path) -> Autoencoder:
    ae = Autoencoder.load(_need(path, "--autoencoder"))
    if not ae.frozen:
        ae.freeze()
    return ae


def _load_classifier(path, what="--classifier") -> LatentMLP:
    secs = checkpoint.load(_need(path, what))
    if "classifier" not in secs:
        raise UsageError(f"{path}: no classifier section")
    return LatentMLP.from_section(secs["classifier"])


def _labeled(args):
    try:
        if args.labeled:
            return load_labeled(_need(args.labeled, "--labeled"))
        if args.neg or args.pos:
            return load_labeled_files(_need(args.neg, "--neg"), _need(args.pos, "--pos"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    raise UsageError("a labeled corpus is required: --labeled FILE or --neg FILE --pos FILE")


def _check_dim(ae: Autoencoder, cfg: RunConfig) -> None:
    if ae.dim != cfg.dim:
        raise UsageError(f"autoencoder checkpoint has d={ae.dim} but the config says dim={cfg.dim}")


def _write_rows(path, rows, fieldnames) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in fieldnames})


# -- mapping checkpoints -------------------------------------------------------------

def save_mapping(path, mapping: Mapping, ae: Autoencoder, discriminator=None, classifier=None) -> str:
    meta = {"autoencoder_digest": ae.digest(), "vocab_fingerprint": ae.vocab.fingerprint(),
            "classifier_digest": classifier.digest() if classifier is not None else None}
    sections = [mapping.to_section("mapping", meta)]
    if discriminator is not None:
        sections.append(discriminator.to_section("discriminator"))
    checkpoint.save(path, sections)
    return mapping.digest()


def load_mapping(path, ae: Autoencoder):
    secs = checkpoint.load(_need(path, "--mapping"))
    if "mapping" not in secs:
        raise UsageError(f"{path}: no mapping section")
    sec = secs["mapping"]
    if sec.meta.get("dim") != ae.dim:
        raise UsageError(f"mapping has d={sec.meta.get('dim')} but the autoencoder has d={ae.dim}")
    if sec.meta.get("vocab_fingerprint") != ae.vocab.fingerprint():
        raise UsageError("vocabulary mismatch: the mapping was trained with a different autoencoder vocabulary")
    if sec.meta.get("autoencoder_digest") != ae.digest():
        raise UsageError("the mapping was trained against a different autoencoder checkpoint")
    disc = LatentMLP.from_section(secs["discriminator"]) if "discriminator" in secs else None
    return Mapping.from_section(sec), disc


# -- subcommands ---------------------------------------------------------------------

def cmd_pretrain(args, cfg: RunConfig, out: Path) -> int:
    texts = [t for path in (args.text or []) for t in _lines(path, "--text") if t.strip()]
    if not args.text:
        raise UsageError("--text FILE is required")
    if not texts:
        raise UsageError("the pretraining corpus is empty")
    valid_texts = [t for t in _lines(args.valid, "--valid") if t.strip()] if args.valid else None
    state_path = out / "trainer_state.ckpt"
    if args.resume:
        if not state_path.is_file():
            raise UsageError(f"--resume: no saved trainer state in {out}")
        vocab = Autoencoder.from_section(checkpoint.load(state_path)["current"]).vocab
    else:
        vocab = build_vocab(texts, cfg.vocab_cap)
    ids = [encode_text(t, vocab) for t in texts]
    valid = [encode_text(t, vocab) for t in valid_texts] if valid_texts else None
    if args.resume:
        trainer = DAETrainer.from_state(state_path, ids, valid, {"epochs": cfg.dae_epochs})
    else:
        trainer = DAETrainer(Autoencoder(vocab, cfg.dae()), ids, valid)
    trainer.fit()
    trainer.save_state(state_path)
    model = trainer.best_model()
    model.save(out / "autoencoder.ckpt")
    vocab.save(out / "vocab.txt")
    _write_rows(out / "pretrain_log.csv", trainer.state.history, ["epoch", "loss", "valid_accuracy"])
    acc = reconstruction_accuracy(model, valid or ids)
    print(f"validation reconstruction accuracy {acc:.4f} (best epoch {trainer.state.best_epoch})")
    print(f"autoencoder digest {model.digest()}")
    return EXIT_OK


def cmd_train_classifier(args, cfg: RunConfig, out: Path) -> int:
    ae = _load_ae(args.autoencoder)
    _check_dim(ae, cfg)
    corpus = _labeled(args)
    try:
        res = train_style_classifier(ae, corpus, cfg.classifier())
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    meta = {"heldout_accuracy": res.heldout_accuracy, "autoencoder_digest": ae.digest()}
    checkpoint.save(out / "classifier.ckpt", [res.classifier.to_section("classifier", meta)])
    _write_rows(out / "classifier_log.csv", res.history, ["epoch", "loss", "heldout_accuracy"])
    print(f"held-out accuracy {res.heldout_accuracy:.4f}")
    return EXIT_OK


def _train_one(args, cfg: RunConfig, ae: Autoencoder, clf, **overrides):
    """Train (or fit) one mapping; returns (mapping, discriminator, history)."""
    if cfg.mapping_kind == "meanoffset":
        corpus = _labeled(args)
        try:
            m = fit_mean_offsets(ae.encode_texts, corpus.of_class(0), corpus.of_class(1),
                                 alpha=overrides.get("multiplier", cfg.multiplier))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if cfg.target_label == 0:
            m.alpha = -m.alpha
        return m, None, []
    overrides.pop("multiplier", None)
    e2e = cfg.emb2emb(**overrides)
    if cfg.mode == "supervised":
        sources = _lines(args.source, "--source")
        targets = _lines(args.target, "--target")
        if len(sources) != len(targets):
            raise UsageError(f"{len(sources)} source lines but {len(targets)} target lines")
        valid = None
        if args.valid_source or args.valid_target:
            vs, vt = _lines(args.valid_source, "--valid-source"), _lines(args.valid_target, "--valid-target")
            valid = (vs, [[t] for t in vt])
        res = train_supervised(ae, sources, targets, e2e, cfg.mapping_kind, valid, layers=cfg.layers)
    else:
        if clf is None:
            raise UsageError("unsupervised training needs a frozen style classifier (--classifier)")
        corpus = _labeled(args)
        texts = corpus.of_class(1 - cfg.target_label)
        if not texts:
            raise UsageError("no source-style sentences to transfer")
        valid_texts = [t for t in _lines(args.valid_texts, "--valid-texts") if t.strip()] if args.valid_texts else None
        res = train_unsupervised(ae, clf, texts, e2e, cfg.mapping_kind, valid_texts, corpus.texts, layers=cfg.layers)
    return res.mapping, res.discriminator, res.history


def cmd_train(args, cfg: RunConfig, out: Path) -> int:
    ae = _load_ae(args.autoencoder)
    _check_dim(ae, cfg)
    clf = _load_classifier(args.classifier) if args.classifier else None
    if cfg.mode == "unsupervised" and cfg.mapping_kind != "meanoffset" and clf is None:
        raise UsageError("unsupervised training needs a frozen style classifier (--classifier)")
    mapping, disc, history = _train_one(args, cfg, ae, clf)
    digest = save_mapping(out / "mapping.ckpt", mapping, ae, disc, clf)
    write_log(out / "train_log.csv", history)
    if history:
        best = max(history, key=lambda r: r["valid_metric"])
        print(f"best epoch {best['epoch']} validation metric {best['valid_metric']:.4f}")
    print(f"mapping digest {digest}")
    return EXIT_OK


def _split_dump(lines):
    """``input<TAB>output`` lines -> (inputs, outputs); plain lines are outputs only."""
    srcs, hyps = [], []
    for line in lines:
        src, sep, hyp = line.partition("\t")
        srcs.append(src if sep else None)
        hyps.append(hyp if sep else line)
    return srcs, hyps


def cmd_infer(args, cfg: RunConfig, out: Path) -> int:
    ae = _load_ae(args.autoencoder)
    _check_dim(ae, cfg)
    mapping, disc = load_mapping(args.mapping, ae)
    clf = _load_classifier(args.classifier) if args.classifier else None
    if cfg.fgim and clf is None:
        raise UsageError("--fgim needs a style classifier (--classifier)")
    texts = _lines(args.input, "--input")
    system = Emb2Emb(ae, mapping, clf, disc)
    outputs = system.transfer(texts, cfg.fgim_config(), max_len=min(cfg.max_decode_len, decode_len(texts, 20)))
    with open(out / "outputs.tsv", "w", encoding="utf-8") as fh:
        for src, hyp in zip(texts, outputs):
            fh.write(f"{src}\t{hyp}\n")
    print(f"wrote {len(outputs)} lines to {out / 'outputs.tsv'}")
    return EXIT_OK


def _judge(args) -> TextJudge | None:
    if not (args.judge_autoencoder or args.judge_classifier):
        return None
    ae = _load_ae(args.judge_autoencoder)
    secs = checkpoint.load(_need(args.judge_classifier, "--judge-classifier"))
    clf = LatentMLP.from_section(secs["classifier"])
    return TextJudge(ae, clf, secs["classifier"].meta.get("heldout_accuracy"))


def cmd_eval(args, cfg: RunConfig, out: Path) -> int:
    srcs, hyps = _split_dump(_lines(args.hyp, "--hyp"))
    if args.src:
        srcs = _lines(args.src, "--src")
    refsets = None
    if args.ref:
        columns = [_lines(p, "--ref") for p in args.ref]
        if any(len(c) != len(hyps) for c in columns):
            raise UsageError("every --ref file must have one line per hypothesis")
        refsets = [list(r) for r in zip(*columns)]
    if not hyps:
        raise UsageError("no hypotheses to evaluate")
    have_src = all(s is not None for s in srcs) and len(srcs) == len(hyps)
    report = {}
    if refsets:
        files = {"hyp": args.hyp, "ref": args.ref, "src": args.src}
        report["bleu"] = bleu_report(hyps, refsets, files).as_dict()
        if have_src:
            report["sari"] = sari_report(srcs, hyps, refsets, files).as_dict()
    if have_src:
        report["self_bleu"] = self_bleu(srcs, hyps)
    judge = _judge(args)
    if judge is not None:
        report["accuracy"] = transfer_accuracy(hyps, cfg.target_label, judge)
    if not report:
        raise UsageError("nothing to evaluate: give --ref, sources, or a judge")
    (out / "eval.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    for key in ("bleu", "sari"):
        if key in report:
            print(f"{key} {report[key]['value']:.4f}")
    for key in ("self_bleu", "accuracy"):
        if key in report:
            print(f"{key} {report[key]:.4f}")
    return EXIT_OK


def _run_curve(args, cfg: RunConfig, ae, clf, inputs, refsets, judge, out: Path, tag: str):
    def run_point(value):
        point_cfg = dataclasses.replace(cfg, **{cfg.sweep_param: value})
        if cfg.sweep_param == "fgim_threshold":
            point_cfg.fgim = True
        mapping, disc, history = _train_one(args, point_cfg, ae, clf)
        ckpt = out / f"mapping_{tag}{cfg.sweep_param}={value:g}.ckpt"
        digest = save_mapping(ckpt, mapping, ae, disc, clf)
        system = Emb2Emb(ae, mapping, clf, disc)
        hyps = system.transfer(inputs, point_cfg.fgim_config(), max_len=min(cfg.max_decode_len,
                                                                              decode_len(inputs, 20)))
        res = {"self_bleu": self_bleu(inputs, hyps), "checkpoint_hash": digest}
        if refsets is not None:
            res["bleu"] = bleu(hyps, refsets)
            res["sari"] = sari(inputs, hyps, refsets)
        if judge is not None:
            res["accuracy"] = transfer_accuracy(hyps, cfg.target_label, judge)
        elif clf is not None:
            # no held-out judge: fall back to the training classifier on re-encoded outputs
            res["accuracy"] = float(np.mean(clf.predict(ae.encode_texts(hyps)) == cfg.target_label))
        return res
    return tradeoff_sweep(run_point, cfg.grid_values(), cfg.sweep_param)


def cmd_sweep(args, cfg: RunConfig, out: Path) -> int:
    ae = _load_ae(args.autoencoder)
    _check_dim(ae, cfg)
    clf = _load_classifier(args.classifier) if args.classifier else None
    if cfg.mode == "unsupervised" and cfg.mapping_kind != "meanoffset" and clf is None:
        raise UsageError("unsupervised sweeps need a frozen style classifier (--classifier)")
    if (cfg.fgim or cfg.sweep_param == "fgim_threshold") and clf is None:
        raise UsageError("FGIM needs a style classifier (--classifier)")
    inputs = [t for t in _lines(args.input, "--input") if t.strip()]
    if not inputs:
        raise UsageError("the sweep input file is empty")
    refsets = [[r] for r in _lines(args.ref, "--ref")] if args.ref else None
    if refsets is not None and len(refsets) != len(inputs):
        raise UsageError("--ref must have one line per input")
    judge = _judge(args)
    adv = cfg.adv_grid_values()
    if adv and judge is None and clf is None:
        raise UsageError("choosing lambda_adv needs accuracies: give --classifier or a judge")
    if not adv:
        points = _run_curve(args, cfg, ae, clf, inputs, refsets, judge, out, "")
        write_sweep_csv(out / "sweep.csv", points)
        print(f"wrote {len(points)} points to {out / 'sweep.csv'}")
    else:
        curves = {}
        for lam in adv:
            curves[lam] = _run_curve(args, dataclasses.replace(cfg, lambda_adv=lam), ae, clf, inputs, refsets,
                                     judge, out, f"lambda_adv={lam:g}_")
            write_sweep_csv(out / f"sweep_lambda_adv={lam:g}.csv", curves[lam])
        points = [p for curve in curves.values() for p in curve]
        best, scores = select_lambda_adv(curves)
        selection = {"selected_lambda_adv": best, "scores": {f"{k:g}": v for k, v in scores.items()}}
        (out / "selection.json").write_text(json.dumps(selection, indent=2), encoding="utf-8")
        print(f"selected lambda_adv {best:g}")
    failed = sum(p.failed for p in points)
    if failed:
        log.warning("%d sweep point(s) failed", failed)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------------

COMMANDS = {
    "pretrain": cmd_pretrain,
    "train-classifier": cmd_train_classifier,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides (any config key)")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            g.add_argument(flag, dest=f"cfg_{f.name}", action=argparse.BooleanOptionalAction, default=None)
        else:
            g.add_argument(flag, dest=f"cfg_{f.name}", metavar=f.type.upper(), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emb2emb", description="Text rewriting by learned maps between "
                                     "the embeddings of a frozen sequence autoencoder.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="directory for every artifact of this run")
    common.add_argument("--config", help="flat 'key = value' config file")
    common.add_argument("-v", "--verbose", action="store_true")
    _add_config_flags(common)

    p = sub.add_parser("pretrain", parents=[common], help="pretrain the denoising autoencoder")
    p.add_argument("--text", action="append", help="plain-text corpus, one sentence per line (repeatable)")
    p.add_argument("--valid", help="validation sentences for early stopping")
    p.add_argument("--resume", action="store_true", help="continue from --out/trainer_state.ckpt")

    labeled = argparse.ArgumentParser(add_help=False)
    labeled.add_argument("--labeled", help="label<TAB>text file")
    labeled.add_argument("--neg", help="style-0 sentences, one per line")
    labeled.add_argument("--pos", help="style-1 sentences, one per line")

    p = sub.add_parser("train-classifier", parents=[common, labeled], help="train the latent style classifier")
    p.add_argument("--autoencoder", required=True)

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--autoencoder", required=True)
    training.add_argument("--classifier", help="frozen style classifier checkpoint")
    training.add_argument("--source", help="supervised: source sentences")
    training.add_argument("--target", help="supervised: aligned target sentences")
    training.add_argument("--valid-source")
    training.add_argument("--valid-target")
    training.add_argument("--valid-texts", help="unsupervised: source-style validation sentences")

    sub.add_parser("train", parents=[common, labeled, training], help="train a mapping")

    p = sub.add_parser("infer", parents=[common], help="rewrite sentences with a trained mapping")
    p.add_argument("--autoencoder", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--classifier", help="style classifier, needed for --fgim")
    p.add_argument("--input", required=True)

    judge = argparse.ArgumentParser(add_help=False)
    judge.add_argument("--judge-autoencoder", help="autoencoder of the held-out judge")
    judge.add_argument("--judge-classifier", help="classifier of the held-out judge")

    p = sub.add_parser("eval", parents=[common, judge], help="score system outputs")
    p.add_argument("--hyp", required=True, help="outputs, plain or input<TAB>output")
    p.add_argument("--src", help="source sentences (overrides the inputs of a tab dump)")
    p.add_argument("--ref", action="append", help="reference file (repeatable for multiple references)")

    p = sub.add_parser("sweep", parents=[common, labeled, training, judge], help="tradeoff sweep over a grid")
    p.add_argument("--input", required=True, help="sentences to transfer at every grid point")
    p.add_argument("--ref", help="one reference per input, for BLEU and SARI")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_config(out / "config.txt", cfg, _inputs(args))
        return COMMANDS[args.command](args, cfg, out)
    except (UsageError, CheckpointError) as exc:
        print(f"emb2emb {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("traceback", exc_info=True)
        print(f"emb2emb {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
