"""Tests del minado de pares Test-Assert."""
import dataclasses

import pytest

from conftest import FIG2_SOURCE, FIG2_TARGET
from core.java_parser import PLACEHOLDER, count_asserts, parse_java
from core.miner import (
    CorpusMiner,
    FocalIndex,
    TestAssertPair,
    extract_candidates,
    make_tap,
    mine_directory,
    resolve_focal,
    split_corpus,
    split_counts,
)
from utils.errors import EmptyCorpus, ReplacementError
from utils.io import read_jsonl

LRU_SOURCE = (
    "public void simpleInsertTest() { LRU lru = new LRU(5, true); "
    "for (int i = 0; i < 5; i++) { addAndExpectNoEviction(lru, (100 + i)); } "
    "for (int i = 5; i < 10; i++) { <AssertPlaceHolder>; } } "
    "public boolean exists(long id) { return m_lruMap.containsKey(id); }"
)


@pytest.fixture
def mined(repo_dir):
    """TAPs y contadores del repositorio de ejemplo."""
    miner = CorpusMiner()
    taps = miner.mine(str(repo_dir / "src/test"), str(repo_dir / "src/main"))
    return taps, miner.stats


def _dummy_pairs(n):
    return [
        TestAssertPair(test_with_placeholder="t", focal_method="f", assert_stmt=f"a{i}",
                       source_text=f"s{i}", target_text=f"a{i}")
        for i in range(n)
    ]


class TestMining:
    """Minado del repositorio de ejemplo."""

    def test_reproduces_reference_pair(self, mined):
        """El par de testLength debe coincidir exactamente con el de referencia."""
        taps, _ = mined
        pair = next(t for t in taps if t.method == "testLength")
        assert pair.source_text == FIG2_SOURCE
        assert pair.target_text == FIG2_TARGET
        assert pair.focal_method == "public int length() { return this.bitSet.length(); }"

    def test_assert_inside_loop(self, mined):
        """El assert dentro de un bucle se sustituye en su sitio y resuelve ``exists``."""
        taps, _ = mined
        pair = next(t for t in taps if t.method == "simpleInsertTest")
        assert pair.source_text == LRU_SOURCE
        assert pair.target_text == "Assert.assertTrue(lru.exists(100 + i))"

    def test_prefers_class_matching_test_name(self, mined):
        """Con nombres ambiguos gana la clase cuyo nombre es el del test sin ``Test``."""
        taps, _ = mined
        pair = next(t for t in taps if t.method == "createBeginNwhinInvocation")
        assert pair.focal_method == (
            "public BeginNwhinInvocationEvent createBeginNwhinInvocation() { return new BeginNwhinInvocationEvent(); }"
        )
        assert pair.target_text == "Assert.assertTrue(event instanceof BeginNwhinInvocationEvent)"

    def test_stats_count_every_drop(self, mined):
        """Los ficheros rotos y los tests sin focal se cuentan, no abortan el minado."""
        taps, stats = mined
        assert len(taps) == 3
        assert stats["files_failed"] == 1
        assert stats["files_ok"] == 8
        assert stats["candidates"] == 4
        assert stats["no_focal"] == 1
        assert stats["pairs"] == 3

    def test_every_source_has_one_placeholder(self, mined):
        taps, _ = mined
        for tap in taps:
            assert tap.source_text.count("<AssertPlaceHolder>") == 1
            assert tap.target_text not in tap.source_text

    def test_no_focal_variant(self, repo_dir):
        """Sin método focal la fuente es sólo el test con el placeholder."""
        taps = CorpusMiner().mine(str(repo_dir / "src/test"), str(repo_dir / "src/main"), with_focal=False)
        pair = next(t for t in taps if t.method == "testLength")
        assert pair.source_text == pair.test_with_placeholder
        assert pair.source_text.endswith("<AssertPlaceHolder>; }")

    def test_parallel_parse_matches_sequential(self, repo_dir):
        """El resultado no depende del número de procesos."""
        sequential = CorpusMiner(jobs=1).mine(str(repo_dir / "src/test"), str(repo_dir / "src/main"))
        parallel = CorpusMiner(jobs=2).mine(str(repo_dir / "src/test"), str(repo_dir / "src/main"))
        assert [t.source_text for t in sequential] == [t.source_text for t in parallel]

    def test_mine_directory_writes_splits(self, repo_dir, tmp_path):
        result = mine_directory(str(repo_dir / "src/test"), str(tmp_path), focal_dir=str(repo_dir / "src/main"))
        counts = [len(list(read_jsonl(tmp_path / f"{name}.jsonl"))) for name in ("train", "valid", "test")]
        assert counts == list(result.split.counts())
        assert sum(counts) == 3


class TestCandidatesAndFocal:
    """Selección de candidatos y resolución del método focal."""

    SOURCE = """
    class ThingTest {
        @Test public void one() { Thing t = new Thing(); assertTrue(t.ready()); }
        @Test public void two() { assertTrue(a()); assertFalse(b()); }
        public void notATest() { assertTrue(c()); }
        @Test public void none() { run(); }
    }
    class Thing {
        public boolean ready() { return true; }
    }
    """

    def test_only_single_assert_tests(self):
        classes = parse_java(self.SOURCE)
        assert [m.name for m in extract_candidates(classes[0].methods)] == ["one"]

    def test_resolve_skips_assert_calls(self):
        """La llamada de aserción se salta y se toma la invocación anterior."""
        classes = parse_java(self.SOURCE)
        index = FocalIndex(m for c in classes for m in c.methods)
        focal = resolve_focal(classes[0].methods[0], index)
        assert focal is not None and focal.name == "ready"

    def test_unresolved_focal_returns_none(self):
        source = "class ATest { @Test public void t() { x.unknown(); assertTrue(true); } }"
        test = parse_java(source)[0].methods[0]
        assert resolve_focal(test, FocalIndex()) is None

    def test_focal_index_lookup(self):
        classes = parse_java("class A { void run() {} } class B { void run() {} }")
        index = FocalIndex(m for c in classes for m in c.methods)
        assert index.lookup("run", "BTest").class_name == "B"
        assert index.lookup("run", "TestB").class_name == "B"
        assert index.lookup("run", "Other").class_name == "A"
        assert index.lookup("missing") is None
        assert "run" in index and len(index) == 2

    def test_chained_call_resolves_to_outermost(self):
        """En ``a.b().c()`` el método focal es ``c``."""
        source = (
            "class ChainTest { @Test public void t() { Chain a = new Chain(); assertEquals(1, a.b().c()); } } "
            "class Chain { public Chain b() { return this; } public int c() { return 1; } }"
        )
        classes = parse_java(source)
        index = FocalIndex(m for c in classes for m in c.methods)
        focal = resolve_focal(classes[0].methods[0], index)
        assert focal is not None and focal.name == "c"

    def test_constructor_only_has_no_focal(self):
        classes = parse_java(self.SOURCE)
        index = FocalIndex(m for c in classes for m in c.methods)
        test = parse_java("class ThingTest { @Test public void t() { Thing t = new Thing(); assertNotNull(t); } }")[0].methods[0]
        assert resolve_focal(test, index) is None

    def test_make_tap_multiline_assert(self):
        """El placeholder sustituye la sentencia completa aunque ocupe varias líneas."""
        source = """
        class CalcTest {
            @Test
            public void t() {
                Calc c = new Calc();
                assertEquals(
                    4,
                    c.twice(2)
                );
            }
        }
        class Calc { public int twice(int x) { return 2 * x; } }
        """
        classes = parse_java(source)
        test, focal = classes[0].methods[0], classes[1].methods[0]
        tap = make_tap(test, focal)
        assert tap.target_text == "assertEquals( 4, c.twice(2) )"
        assert tap.test_with_placeholder == f"public void t() {{ Calc c = new Calc(); {PLACEHOLDER}; }}"
        assert count_asserts(tap.test_with_placeholder) == 0

    def test_make_tap_rejects_inconsistent_span(self):
        """Un span que no corresponde al texto produce ReplacementError."""
        classes = parse_java(self.SOURCE)
        test = classes[0].methods[0]
        broken = dataclasses.replace(test, body_text=test.body_text.replace("assertTrue", "assertXXXX"))
        with pytest.raises(ReplacementError):
            make_tap(broken, classes[1].methods[0])


class TestSplit:
    """Partición train/valid/test."""

    def test_reference_corpus_size(self):
        """188,154 pares se reparten como 150,523 / 18,816 / 18,815."""
        assert split_counts(188154) == (150523, 18816, 18815)

    def test_small_corpus(self):
        assert split_counts(10) == (8, 1, 1)

    def test_split_is_a_partition(self):
        split = split_corpus(_dummy_pairs(53), seed=3)
        targets = [t.target_text for part in (split.train, split.valid, split.test) for t in part]
        assert sorted(targets) == sorted(f"a{i}" for i in range(53))
        assert split.counts() == split_counts(53)

    def test_split_is_deterministic(self):
        first = split_corpus(_dummy_pairs(40), seed=7)
        second = split_corpus(_dummy_pairs(40), seed=7)
        assert [t.target_text for t in first.train] == [t.target_text for t in second.train]

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            split_corpus([])
