"""Tests de la línea de comandos de extremo a extremo."""
import json

import pytest

from conftest import EVOSUITE, REPO
from core.checkpoint import read_manifest
from core.tokenizer import Vocabulary
from main import AssertForgeApp, build_parser, dispatch
from utils.errors import ConfigError
from utils.io import read_jsonl

SMALL_MODEL = "\n".join([
    "max_len=256",
    "enc_layers=1",
    "dec_layers=1",
    "d_model=16",
    "n_heads=2",
    "d_ff=32",
    "dropout=0.0",
    "accum_freq=1",
    "warmup_steps=2",
    "base_lr=0.001",
])


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_MODEL + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def mined(tmp_path):
    out = tmp_path / "taps"
    code = dispatch([
        "mine",
        "--src-dir", str(REPO / "src" / "test"),
        "--focal-dir", str(REPO / "src" / "main"),
        "--out-dir", str(out),
    ])
    assert code == 0
    return out


@pytest.fixture
def vocab_path(mined, tmp_path):
    out = tmp_path / "vocab"
    assert dispatch(["build-vocab", "--train", str(mined / "train.jsonl"), "--train", str(mined / "valid.jsonl"),
                     "--vocab-size", "300", "--out-dir", str(out)]) == 0
    return out / "vocab.txt"


class TestUsage:
    """Códigos de salida ante errores de uso y de dominio."""

    def test_unknown_flag(self):
        assert dispatch(["mine", "--src-dir", "x", "--out-dir", "y", "--bogus"]) == 2

    def test_missing_required_flag(self):
        assert dispatch(["finetune", "--valid", "v", "--vocab", "w", "--out-dir", "o"]) == 2

    def test_missing_subcommand(self):
        assert dispatch([]) == 2

    def test_help(self):
        assert dispatch(["--help"]) == 0

    def test_missing_config_file(self, tmp_path):
        assert dispatch(["mine", "--src-dir", str(REPO), "--out-dir", str(tmp_path), "--config", str(tmp_path / "no.cfg")]) == 1

    def test_subcommands(self):
        choices = build_parser()._subparsers._group_actions[0].choices
        assert set(choices) == {"mine", "build-vocab", "pretrain-prep", "pretrain", "finetune", "generate", "evaluate", "augment"}


class TestGenerationFlags:
    """Resolución de k y de la anchura del haz."""

    @staticmethod
    def _config(*flags):
        args = build_parser().parse_args(["generate", "--checkpoint", "c", "--vocab", "v", "--input", "i", "--out", "o", *flags])
        return AssertForgeApp(args)._generation_config()

    def test_beam_without_k(self):
        cfg = self._config("--beam", "10")
        assert (cfg.beam_width, cfg.k) == (10, 10)

    def test_defaults(self):
        cfg = self._config()
        assert (cfg.beam_width, cfg.k) == (50, 50)

    def test_explicit_k(self):
        cfg = self._config("--beam", "10", "--k", "3")
        assert (cfg.beam_width, cfg.k) == (10, 3)

    def test_explicit_k_above_beam(self):
        with pytest.raises(ConfigError):
            self._config("--beam", "10", "--k", "20")


class TestMineAndVocab:

    def test_mine_writes_splits_and_manifest(self, mined):
        counts = [len(list(read_jsonl(mined / f"{name}.jsonl"))) for name in ("train", "valid", "test")]
        assert counts == [2, 1, 0]
        manifest = json.loads((mined / "run_manifest.json").read_text(encoding="utf-8"))
        assert manifest["subcommand"] == "mine"
        assert manifest["seed"] == 0

    def test_no_focal_variant(self, tmp_path):
        out = tmp_path / "nofocal"
        assert dispatch(["mine", "--src-dir", str(REPO / "src" / "test"), "--focal-dir", str(REPO / "src" / "main"),
                         "--out-dir", str(out), "--no-focal"]) == 0
        records = [r for name in ("train", "valid", "test") for r in read_jsonl(out / f"{name}.jsonl")]
        assert len(records) == 3
        assert not any("return this.bitSet.length()" in r["source"] for r in records)
        assert all(r["source"].startswith("public void ") for r in records)

    def test_build_vocab(self, vocab_path):
        vocab = Vocabulary.load(vocab_path)
        assert 262 < len(vocab) <= 300


class TestTrainingPipeline:
    """Preentrenamiento, ajuste, generación y evaluación con un modelo diminuto."""

    def test_finetune_generate_evaluate(self, mined, vocab_path, small_config, tmp_path):
        model_dir = tmp_path / "model"
        assert dispatch(["finetune", "--config", small_config, "--train", str(mined / "train.jsonl"),
                         "--valid", str(mined / "valid.jsonl"), "--vocab", str(vocab_path),
                         "--out-dir", str(model_dir), "--max-epochs", "2", "--batch-size", "2"]) == 0
        best = model_dir / "checkpoint_best"
        assert read_manifest(str(best))["chain"] == "scratch>finetune"
        assert (model_dir / "loss_curve.csv").is_file()

        predictions = tmp_path / "pred" / "candidates.jsonl"
        assert dispatch(["generate", "--config", small_config, "--checkpoint", str(best), "--vocab", str(vocab_path),
                         "--input", str(mined / "valid.jsonl"), "--out", str(predictions),
                         "--k", "2", "--beam", "2"]) == 0
        records = list(read_jsonl(predictions))
        assert len(records) == 1
        assert len(records[0]["candidates"]) <= 2

        report_path = tmp_path / "eval" / "report.json"
        assert dispatch(["evaluate", "--candidates", str(predictions), "--out", str(report_path)]) == 0
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["n"] == 1
        assert set(report["syntax"]) == {"1", "25", "50"}

        direct = tmp_path / "eval" / "direct.json"
        assert dispatch(["evaluate", "--config", small_config, "--checkpoint", str(best), "--vocab", str(vocab_path),
                         "--input", str(mined / "valid.jsonl"), "--out", str(direct), "--beam", "2"]) == 0
        assert json.loads(direct.read_text(encoding="utf-8"))["valid_loss"] is not None

    def test_pretrain_then_finetune(self, mined, vocab_path, small_config, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        for name in ("A", "B", "C"):
            (corpus / f"{name}.java").write_text(
                f"public class {name} {{ private int v; public int get{name}() {{ return this.v; }} }}",
                encoding="utf-8",
            )
        prep = tmp_path / "prep"
        assert dispatch(["pretrain-prep", "--config", small_config, "--mode", "code", "--corpus", str(corpus),
                         "--vocab", str(vocab_path), "--out-dir", str(prep), "--valid-fraction", "0.34"]) == 0
        assert len(list(read_jsonl(prep / "train.jsonl"))) == 2
        assert len(list(read_jsonl(prep / "valid.jsonl"))) == 1

        pre = tmp_path / "pre"
        assert dispatch(["pretrain", "--config", small_config, "--mode", "code", "--train", str(prep / "train.jsonl"),
                         "--valid", str(prep / "valid.jsonl"), "--vocab", str(vocab_path),
                         "--out-dir", str(pre), "--max-epochs", "1"]) == 0
        assert read_manifest(str(pre / "checkpoint_best"))["chain"] == "code"

        fine = tmp_path / "fine"
        assert dispatch(["finetune", "--config", small_config, "--variant", "code",
                         "--init-checkpoint", str(pre / "checkpoint_best"),
                         "--train", str(mined / "train.jsonl"), "--valid", str(mined / "valid.jsonl"),
                         "--vocab", str(vocab_path), "--out-dir", str(fine), "--max-epochs", "1"]) == 0
        assert read_manifest(str(fine / "checkpoint_best"))["chain"] == "code>finetune"

    def test_variant_needs_initial_checkpoint(self, mined, vocab_path, small_config, tmp_path):
        assert dispatch(["finetune", "--config", small_config, "--variant", "english",
                         "--train", str(mined / "train.jsonl"), "--valid", str(mined / "valid.jsonl"),
                         "--vocab", str(vocab_path), "--out-dir", str(tmp_path / "x")]) == 1

    def test_evaluate_length_mismatch(self, tmp_path):
        candidates = tmp_path / "c.jsonl"
        targets = tmp_path / "t.jsonl"
        candidates.write_text(json.dumps({"candidates": ["assertTrue(a)"], "target": "assertTrue(a)"}) + "\n", encoding="utf-8")
        targets.write_text("\n".join(json.dumps({"target": t}) for t in ("a", "b")) + "\n", encoding="utf-8")
        assert dispatch(["evaluate", "--candidates", str(candidates), "--targets", str(targets),
                         "--out", str(tmp_path / "r.json")]) == 1


class TestAugment:

    def test_augment_with_candidates_file(self, evosuite_test_path, tmp_path):
        candidates = tmp_path / "candidates.jsonl"
        records = [
            {"file": "NumberUtils_ESTest.java", "method": "test13", "candidates": ["assertEquals(4, NumberUtils.min(4, 5, 7))"]},
            {"file": "NumberUtils_ESTest.java", "method": "test11", "candidates": ["assertNull(bigDecimal0"]},
        ]
        candidates.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
        out = tmp_path / "augmented"

        assert dispatch(["augment", "--tests-dir", str(evosuite_test_path.parent), "--candidates", str(candidates),
                         "--focal-dir", str(EVOSUITE / "focal"), "--out-dir", str(out)]) == 0

        rows = json.loads((out / "augment_report.json").read_text(encoding="utf-8"))
        assert [(r["test"], r["assert"]) for r in rows] == [
            ("test11", "-"),
            ("test13", "assertEquals(4, NumberUtils.min(4, 5, 7));"),
        ]
        text = (out / "NumberUtils_ESTest.java").read_text(encoding="utf-8")
        assert "assertEquals(4, NumberUtils.min(4, 5, 7));" in text
        assert (out / "run_manifest.json").is_file()

    def test_augment_needs_candidates_or_checkpoint(self, evosuite_test_path, tmp_path):
        assert dispatch(["augment", "--tests-dir", str(evosuite_test_path.parent), "--out-dir", str(tmp_path / "o")]) == 1
