"""Tests de la corrupción de documentos para el preentrenamiento."""
import numpy as np
import pytest

from core.noising import (
    CorruptionConfig,
    PERIOD_ID,
    delete_tokens,
    document_rng,
    load_documents,
    make_denoising_pair,
    mask_spans,
    permute_sentences,
    prepare_pretraining_corpus,
    rotate,
    rotate_document,
    sample_span_length,
    sentence_boundaries,
)
from core.tokenizer import MASK_ID


def _document(length, offset=10):
    """Documento de tokens distintos, ninguno especial."""
    return list(range(offset, offset + length))


class TestSpanMasking:
    """Enmascarado de spans con longitudes Poisson."""

    def test_masked_fraction(self):
        """Sobre 10^5 tokens la fracción enmascarada queda en [0.29, 0.31]."""
        cfg = CorruptionConfig(mode="english")
        masked = total = 0
        for i in range(100):
            doc = _document(1000)
            out = mask_spans(doc, cfg, document_rng(0, i))
            survivors = [t for t in out.ids if t != MASK_ID]
            masked += len(doc) - len(survivors)
            total += len(doc)
        assert 0.29 <= masked / total <= 0.31

    def test_survivors_keep_order(self):
        """Los tokens que sobreviven conservan su orden original."""
        doc = _document(200)
        out = mask_spans(doc, CorruptionConfig(), document_rng(1, 0))
        survivors = [t for t in out.ids if t != MASK_ID]
        assert survivors == sorted(survivors)
        assert MASK_ID in out.ids

    def test_poisson_span_mean(self):
        cfg = CorruptionConfig()
        rng = np.random.default_rng(0)
        lengths = [sample_span_length(cfg, rng) for _ in range(100_000)]
        assert 2.9 <= np.mean(lengths) <= 3.1

    def test_zero_rate_is_identity(self):
        doc = _document(30)
        out = mask_spans(doc, CorruptionConfig(mask_rate=0.0), document_rng(0, 0))
        assert list(out.ids) == doc

    def test_same_seed_same_noise(self):
        doc = _document(300)
        cfg = CorruptionConfig()
        assert mask_spans(doc, cfg, document_rng(5, 2)).ids == mask_spans(doc, cfg, document_rng(5, 2)).ids


class TestSentencePermutation:

    def test_permutation_keeps_sentences(self):
        """Las frases se reordenan pero cada una sigue intacta."""
        doc = [10, 11, PERIOD_ID, 20, 21, PERIOD_ID, 30, PERIOD_ID, 40]
        out = permute_sentences(doc, sentence_boundaries(doc, PERIOD_ID), np.random.default_rng(3))
        assert sorted(out.ids) == sorted(doc)
        text = " ".join(map(str, out.ids))
        for sentence in ("10 11", "20 21", "40"):
            assert sentence in text

    def test_single_sentence_unchanged(self):
        doc = [10, 11, 12]
        assert list(permute_sentences(doc, [], np.random.default_rng(0)).ids) == doc


class TestCodeNoise:
    """Borrado de tokens y rotación de documentos."""

    def test_survivor_fraction(self):
        """Con borrado del 20 % sobrevive entre el 79 % y el 81 % de los tokens."""
        cfg = CorruptionConfig(mode="code")
        doc = _document(100_000)
        out = delete_tokens(doc, cfg, np.random.default_rng(0))
        assert 0.79 <= len(out) / len(doc) <= 0.81

    def test_rotated_fraction(self):
        """Aproximadamente la mitad de los documentos se rota."""
        cfg = CorruptionConfig(mode="code")
        doc = _document(200)
        rotated = sum(rotate_document(doc, cfg, document_rng(0, i)).ids != tuple(doc) for i in range(20_000))
        assert 0.48 <= rotated / 20_000 <= 0.52

    def test_rotate_is_cyclic_shift(self):
        assert list(rotate([1, 2, 3, 4, 5], 2).ids) == [3, 4, 5, 1, 2]
        assert list(rotate([1, 2, 3], 0).ids) == [1, 2, 3]


class TestDenoisingPairs:

    def test_target_is_clean_document(self):
        doc = _document(50)
        source, target = make_denoising_pair(doc, CorruptionConfig(), document_rng(0, 0), max_len=40)
        assert list(target.ids) == doc[:40]
        assert len(source) <= 40
        assert source.ids != target.ids

    def test_code_mode_pair(self):
        doc = _document(50)
        source, target = make_denoising_pair(doc, CorruptionConfig(mode="code"), document_rng(0, 0), max_len=512)
        assert set(source.ids) <= set(target.ids)

    def test_prepare_corpus_records(self, byte_vocab):
        docs = ["Primera frase. Segunda frase.", "", "Otra cosa."]
        records = list(prepare_pretraining_corpus(docs, byte_vocab, CorruptionConfig(), max_len=64))
        assert len(records) == 2
        assert records[0]["target"] == list(byte_vocab.encode(docs[0]).ids)

    def test_epoch_renoising(self, byte_vocab):
        docs = ["una frase bastante larga para que el ruido cambie entre épocas. y otra más."]
        cfg = CorruptionConfig()
        first = list(prepare_pretraining_corpus(docs, byte_vocab, cfg, 128, epoch=1))
        again = list(prepare_pretraining_corpus(docs, byte_vocab, cfg, 128, epoch=1))
        other = list(prepare_pretraining_corpus(docs, byte_vocab, cfg, 128, epoch=2))
        assert first == again
        assert first[0]["source"] != other[0]["source"]


class TestLoadDocuments:

    def test_english_splits_on_blank_lines(self, tmp_path):
        (tmp_path / "a.txt").write_text("Uno dos.\ntres.\n\nCuatro.\n", encoding="utf-8")
        assert load_documents(str(tmp_path), "english") == ["Uno dos. tres.", "Cuatro."]

    def test_code_dedup_and_ascii_filter(self, tmp_path):
        (tmp_path / "A.java").write_text("class A {}", encoding="utf-8")
        (tmp_path / "B.java").write_text("class A {}", encoding="utf-8")
        (tmp_path / "C.java").write_text("class C { String s = \"ññññññññññ\"; }", encoding="utf-8")
        docs = load_documents(str(tmp_path), "code", max_non_ascii=0.1)
        assert docs == ["class A {}"]


@pytest.mark.parametrize("mode", ["english", "code"])
def test_config_modes(mode):
    assert CorruptionConfig(mode=mode).mode == mode
