import csv
import json

import numpy as np
import pytest

from emb2emb import checkpoint, cli, toydata
from emb2emb.autoencoder import Autoencoder
from emb2emb.mapping import make_mapping
from emb2emb.objectives import LatentMLP
from emb2emb.text import write_labeled

TINY = """\
# small enough to train in a second
dim = 16
emb_dim = 8
dae_epochs = 3
dae_batch_size = 16
epochs = 2
batch_size = 16
clf_hidden = 16
clf_epochs = 3
max_decode_len = 20
"""


def write(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines))
    return str(path)


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    pc = toydata.rewrite_pairs(40, seed=1)
    files = {
        "cfg": str(d / "cfg.txt"),
        "all": write(d / "all.txt", pc.sources + pc.targets),
        "src": write(d / "src.txt", pc.sources[:30]),
        "tgt": write(d / "tgt.txt", pc.targets[:30]),
        "vsrc": write(d / "vsrc.txt", pc.sources[30:]),
        "vtgt": write(d / "vtgt.txt", pc.targets[30:]),
        "lab": str(d / "lab.txt"),
    }
    (d / "cfg.txt").write_text(TINY)
    write_labeled(files["lab"], toydata.marker_corpus(20, seed=0))
    assert cli.main(["pretrain", "--config", files["cfg"], "--out", str(d / "ae"), "--text", files["all"],
                     "--text", files["lab"]]) == 0
    files["ae"] = str(d / "ae" / "autoencoder.ckpt")
    assert cli.main(["train-classifier", "--config", files["cfg"], "--out", str(d / "clf"),
                     "--autoencoder", files["ae"], "--labeled", files["lab"]]) == 0
    files["clf"] = str(d / "clf" / "classifier.ckpt")
    files["dir"] = d
    return files


def run(work, *argv):
    return cli.main([argv[0], "--config", work["cfg"], *argv[1:]])


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = cli.RunConfig(lambda_adv=0.032, fgim=True, mapping_kind="resnet")
        cli.write_config(tmp_path / "c.txt", cfg, {"source": "a.txt"})
        assert cli.RunConfig(**cli.read_config(tmp_path / "c.txt")) == cfg

    def test_comments_and_blank_lines(self, tmp_path):
        (tmp_path / "c.txt").write_text("# header\n\nseed = 3  # trailing\nfgim = yes\n")
        assert cli.read_config(tmp_path / "c.txt") == {"seed": 3, "fgim": True}

    @pytest.mark.parametrize("text", ["nope = 1\n", "seed\n", "seed = x\n", "fgim = maybe\n"])
    def test_bad_config_is_usage_error(self, tmp_path, text):
        (tmp_path / "c.txt").write_text(text)
        with pytest.raises(cli.UsageError):
            cli.read_config(tmp_path / "c.txt")

    @pytest.mark.parametrize("kw", [{"lambda_adv": 10.5}, {"lambda_adv": -0.1}, {"lambda_sty": 1.2},
                                    {"mapping_kind": "transformer"}, {"grid": "0.1,x"}, {"adv_grid": "0,20"}])
    def test_validation(self, kw):
        with pytest.raises(cli.UsageError):
            cli.RunConfig(**kw).validate()

    def test_flag_overrides_file(self, tmp_path):
        (tmp_path / "c.txt").write_text("seed = 3\nlambda_adv = 0.5\n")
        args = cli.build_parser().parse_args(["eval", "--out", str(tmp_path), "--hyp", "h", "--config",
                                              str(tmp_path / "c.txt"), "--lambda-adv", "0.25", "--no-fgim"])
        cfg = cli.resolve_config(args)
        assert (cfg.seed, cfg.lambda_adv, cfg.fgim) == (3, 0.25, False)


class TestExitCodes:
    def test_missing_corpus(self, tmp_path):
        assert cli.main(["pretrain", "--out", str(tmp_path), "--text", str(tmp_path / "none.txt")]) == 2

    def test_missing_config(self, tmp_path):
        assert cli.main(["pretrain", "--out", str(tmp_path), "--config", str(tmp_path / "c.txt"),
                         "--text", "x"]) == 2

    def test_lambda_adv_rejected_before_any_work(self, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["train", "--out", str(out), "--autoencoder", "x", "--lambda-adv", "11"]) == 2
        assert not out.exists()

    def test_argparse_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train"])
        assert exc.value.code == 2

    def test_unsupervised_requires_classifier(self, work, tmp_path):
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", work["ae"], "--labeled", work["lab"],
                   "--mode", "unsupervised") == 2

    def test_dim_mismatch(self, work, tmp_path):
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", work["ae"], "--source", work["src"],
                   "--target", work["tgt"], "--dim", "32") == 2

    def test_corrupt_checkpoint(self, work, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint")
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", str(bad), "--source", work["src"],
                   "--target", work["tgt"]) == 2

    def test_misaligned_parallel_files(self, work, tmp_path):
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", work["ae"], "--source", work["src"],
                   "--target", work["vtgt"]) == 2

    def test_runtime_failure_is_one(self, work, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise FloatingPointError("diverged")
        monkeypatch.setattr(cli, "train_supervised", boom)
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", work["ae"], "--source", work["src"],
                   "--target", work["tgt"]) == 1


class TestPretrain:
    def test_artifacts(self, work):
        d = work["dir"] / "ae"
        for name in ("autoencoder.ckpt", "vocab.txt", "pretrain_log.csv", "config.txt", "trainer_state.ckpt"):
            assert (d / name).is_file()
        assert "--text" in (d / "config.txt").read_text()
        assert cli.RunConfig(**cli.read_config(d / "config.txt")).dim == 16

    def test_same_seed_same_checkpoint(self, work, tmp_path):
        assert run(work, "pretrain", "--out", str(tmp_path), "--text", work["all"], "--text", work["lab"]) == 0
        assert Autoencoder.load(tmp_path / "autoencoder.ckpt").digest() == Autoencoder.load(work["ae"]).digest()

    def test_resume_replays_uninterrupted_run(self, work, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(work, "pretrain", "--out", str(a), "--text", work["all"], "--dae-epochs", "4") == 0
        assert run(work, "pretrain", "--out", str(b), "--text", work["all"], "--dae-epochs", "2") == 0
        assert run(work, "pretrain", "--out", str(b), "--text", work["all"], "--dae-epochs", "4", "--resume") == 0
        assert (Autoencoder.load(a / "autoencoder.ckpt").digest() == Autoencoder.load(b / "autoencoder.ckpt").digest())

    def test_resume_without_state(self, work, tmp_path):
        assert run(work, "pretrain", "--out", str(tmp_path), "--text", work["all"], "--resume") == 2


class TestTrain:
    def test_supervised_log_and_checkpoint(self, work, tmp_path):
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", work["ae"], "--source", work["src"],
                   "--target", work["tgt"], "--valid-source", work["vsrc"], "--valid-target", work["vtgt"],
                   "--lambda-adv", "0.032") == 0
        with open(tmp_path / "train_log.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 and all(0.0 <= float(r["valid_metric"]) <= 1.0 for r in rows)
        secs = checkpoint.load(tmp_path / "mapping.ckpt")
        assert set(secs) == {"mapping", "discriminator"}
        assert secs["mapping"].meta["autoencoder_digest"] == Autoencoder.load(work["ae"]).digest()

    def test_frozen_components_untouched(self, work, tmp_path):
        ae_before = Autoencoder.load(work["ae"]).digest()
        clf_before = checkpoint.load(work["clf"])["classifier"]
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", work["ae"], "--classifier", work["clf"],
                   "--labeled", work["lab"], "--mode", "unsupervised") == 0
        assert Autoencoder.load(work["ae"]).digest() == ae_before
        meta = checkpoint.load(tmp_path / "mapping.ckpt")["mapping"].meta
        assert meta["classifier_digest"] == LatentMLP.from_section(clf_before).digest()

    def test_mean_offset_needs_no_training(self, work, tmp_path):
        assert run(work, "train", "--out", str(tmp_path), "--autoencoder", work["ae"], "--labeled", work["lab"],
                   "--mapping-kind", "meanoffset", "--mode", "unsupervised", "--multiplier", "2") == 0
        assert checkpoint.load(tmp_path / "mapping.ckpt")["mapping"].meta["alpha"] == 2.0


def identity_mapping(work, path):
    ae = Autoencoder.load(work["ae"])
    cli.save_mapping(path, make_mapping("offsetnet", ae.dim, np.random.default_rng(0)), ae)
    return str(path)


def read_dump(path):
    return [line.rstrip("\n").split("\t") for line in open(path)]


class TestInfer:
    def test_identity_mapping_reproduces_reconstruction(self, work, tmp_path):
        m = identity_mapping(work, tmp_path / "m.ckpt")
        assert run(work, "infer", "--out", str(tmp_path), "--autoencoder", work["ae"], "--mapping", m,
                   "--input", work["vsrc"]) == 0
        ae = Autoencoder.load(work["ae"])
        texts = open(work["vsrc"]).read().splitlines()
        dump = read_dump(tmp_path / "outputs.tsv")
        assert [d[0] for d in dump] == texts
        assert [d[1] for d in dump] == ae.decode_codes(ae.encode_texts(texts), max_len=20)

    def test_empty_input(self, work, tmp_path):
        m = identity_mapping(work, tmp_path / "m.ckpt")
        empty = write(tmp_path / "empty.txt", [])
        assert run(work, "infer", "--out", str(tmp_path), "--autoencoder", work["ae"], "--mapping", m,
                   "--input", empty) == 0
        assert (tmp_path / "outputs.tsv").read_text() == ""

    def test_vocab_mismatch(self, work, tmp_path):
        other = tmp_path / "other"
        assert run(work, "pretrain", "--out", str(other), "--text", work["src"], "--dae-epochs", "1") == 0
        m = identity_mapping(work, tmp_path / "m.ckpt")
        assert run(work, "infer", "--out", str(tmp_path), "--autoencoder", str(other / "autoencoder.ckpt"),
                   "--mapping", m, "--input", work["vsrc"]) == 2

    def test_fgim_needs_classifier(self, work, tmp_path):
        m = identity_mapping(work, tmp_path / "m.ckpt")
        assert run(work, "infer", "--out", str(tmp_path), "--autoencoder", work["ae"], "--mapping", m,
                   "--input", work["vsrc"], "--fgim") == 2

    def test_fgim_only_touches_unconfident_lines(self, work, tmp_path):
        m = identity_mapping(work, tmp_path / "m.ckpt")
        texts = [line.split("\t", 1)[1] for line in open(work["lab"]).read().splitlines()]
        inp = write(tmp_path / "in.txt", texts)
        ae = Autoencoder.load(work["ae"])
        clf = LatentMLP.from_section(checkpoint.load(work["clf"])["classifier"])
        probs = clf.prob(ae.encode_texts(texts)).data
        threshold = float(np.median(probs))
        base = ["infer", "--autoencoder", work["ae"], "--mapping", m, "--input", inp, "--classifier", work["clf"],
                "--fgim-threshold", repr(threshold)]
        assert run(work, *base, "--out", str(tmp_path / "plain")) == 0
        assert run(work, *base, "--out", str(tmp_path / "fgim"), "--fgim") == 0
        plain = read_dump(tmp_path / "plain" / "outputs.tsv")
        refined = read_dump(tmp_path / "fgim" / "outputs.tsv")
        confident = probs > threshold
        assert 0 < confident.sum() < len(texts)
        assert all(p == r for p, r, c in zip(plain, refined, confident) if c)


class TestEvalAndSweep:
    def test_gold_targets_score_one(self, work, tmp_path):
        assert run(work, "eval", "--out", str(tmp_path), "--hyp", work["vtgt"], "--src", work["vsrc"],
                   "--ref", work["vtgt"]) == 0
        report = json.loads((tmp_path / "eval.json").read_text())
        assert report["bleu"]["value"] == 1.0
        assert set(report) == {"bleu", "sari", "self_bleu"}

    def test_multiple_references(self, work, tmp_path):
        assert run(work, "eval", "--out", str(tmp_path), "--hyp", work["vtgt"], "--ref", work["vsrc"],
                   "--ref", work["vtgt"]) == 0
        assert json.loads((tmp_path / "eval.json").read_text())["bleu"]["value"] == 1.0

    def test_ref_length_mismatch(self, work, tmp_path):
        assert run(work, "eval", "--out", str(tmp_path), "--hyp", work["vtgt"], "--ref", work["tgt"]) == 2

    def test_judge_accuracy(self, work, tmp_path):
        assert run(work, "eval", "--out", str(tmp_path), "--hyp", work["vtgt"], "--judge-autoencoder", work["ae"],
                   "--judge-classifier", work["clf"]) == 0
        assert 0.0 <= json.loads((tmp_path / "eval.json").read_text())["accuracy"] <= 1.0

    def test_sweep_rows_equal_grid(self, work, tmp_path):
        assert run(work, "sweep", "--out", str(tmp_path), "--autoencoder", work["ae"], "--source", work["src"],
                   "--target", work["tgt"], "--input", work["vsrc"], "--ref", work["vtgt"],
                   "--sweep-param", "lambda_adv", "--grid", "0,0.008,0.016") == 0
        with open(tmp_path / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["value"]) for r in rows] == [0.0, 0.008, 0.016]
        assert all(r["checkpoint_hash"] != "failed" for r in rows)

    def test_sweep_selects_lambda_adv(self, work, tmp_path):
        assert run(work, "sweep", "--out", str(tmp_path), "--autoencoder", work["ae"], "--classifier", work["clf"],
                   "--labeled", work["lab"], "--mode", "unsupervised", "--input", work["vsrc"],
                   "--grid", "0.1,0.9", "--adv-grid", "0,0.01") == 0
        sel = json.loads((tmp_path / "selection.json").read_text())
        assert sel["selected_lambda_adv"] in (0.0, 0.01) and set(sel["scores"]) == {"0", "0.01"}


class TestDeterminism:
    def test_pipeline_replay(self, work, tmp_path):
        reports = []
        for name in ("a", "b"):
            d = tmp_path / name
            assert run(work, "train", "--out", str(d), "--autoencoder", work["ae"], "--source", work["src"],
                       "--target", work["tgt"], "--lambda-adv", "0.016") == 0
            assert run(work, "infer", "--out", str(d), "--autoencoder", work["ae"], "--mapping",
                       str(d / "mapping.ckpt"), "--input", work["vsrc"]) == 0
            assert run(work, "eval", "--out", str(d), "--hyp", str(d / "outputs.tsv"), "--ref", work["vtgt"]) == 0
            report = json.loads((d / "eval.json").read_text())
            reports.append({k: v for k, v in report["bleu"].items() if k != "fingerprint"})
            assert (d / "mapping.ckpt").read_bytes() == (tmp_path / "a" / "mapping.ckpt").read_bytes()
        assert reports[0] == reports[1]
