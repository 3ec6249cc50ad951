"""Tests de la resolución léxica de identificadores."""
import pytest

from conftest import EVOSUITE, NUMBER_UTILS_ASSERTS
from utils.java_scope import collect_scope, infer_focal_class, is_resolvable

TEST_SOURCE = (EVOSUITE / "tests" / "NumberUtils_ESTest.java").read_text(encoding="utf-8")


@pytest.mark.parametrize("suffix, expected", [
    ("NumberUtils_ESTest", "NumberUtils"),
    ("LRUTest", "LRU"),
    ("HelpersTests", "Helpers"),
    ("Test", "Test"),
    ("Plain", "Plain"),
])
def test_infer_focal_class(suffix, expected):
    assert infer_focal_class(suffix) == expected


class TestCollectScope:
    """Nombres visibles desde un método de test."""

    def test_imports_and_locals(self, number_utils_source):
        scope = collect_scope(TEST_SOURCE, "test12", number_utils_source)
        assert {"BigDecimal", "BigInteger", "NumberUtils", "longArray0", "long0"} <= scope.names
        assert "float0" not in scope.names
        assert scope.focal_class == "NumberUtils"

    def test_focal_statics(self, number_utils_source):
        scope = collect_scope(TEST_SOURCE, "test00", number_utils_source)
        assert {"toInt", "createBigDecimal", "isNumber", "LONG_ZERO"} <= scope.focal_statics

    def test_existing_asserts(self):
        scope = collect_scope(TEST_SOURCE, "test00")
        assert scope.existing_asserts == {"assertEquals(0, int0)"}
        assert scope.focal_statics is None

    def test_loose_method(self):
        scope = collect_scope("public void testA() { int a = 1; String s = f(a); }")
        assert {"a", "s", "testA"} <= scope.names


class TestIsResolvable:

    @pytest.mark.parametrize("index", [i for i, a in enumerate(NUMBER_UTILS_ASSERTS) if a is not None])
    def test_generated_asserts_resolve(self, index, number_utils_source):
        scope = collect_scope(TEST_SOURCE, f"test{index:02d}", number_utils_source)
        assert is_resolvable(NUMBER_UTILS_ASSERTS[index], scope) == (True, "")

    def test_unknown_identifier(self, number_utils_source):
        scope = collect_scope(TEST_SOURCE, "test00", number_utils_source)
        assert is_resolvable("assertNull(foo0)", scope) == (False, "Identificador no resoluble: foo0")

    def test_local_of_another_method(self, number_utils_source):
        scope = collect_scope(TEST_SOURCE, "test00", number_utils_source)
        ok, reason = is_resolvable("assertNotNull(bigDecimal0)", scope)
        assert not ok
        assert "bigDecimal0" in reason

    def test_unknown_static_member(self, number_utils_source):
        scope = collect_scope(TEST_SOURCE, "test00", number_utils_source)
        ok, reason = is_resolvable('assertNotNull(NumberUtils.parseWhatever("1"))', scope)
        assert not ok
        assert reason == "NumberUtils no declara el miembro estático parseWhatever"

    def test_unknown_unqualified_call(self):
        scope = collect_scope(TEST_SOURCE, "test00")
        assert is_resolvable("assertTrue(check(int0))", scope) == (False, "Método no resoluble: check")

    def test_members_of_other_receivers_are_not_checked(self):
        scope = collect_scope(TEST_SOURCE, "test10")
        assert is_resolvable("assertEquals(0, bigInteger0.signum())", scope)[0]

    def test_java_lang_and_class_literals(self):
        scope = collect_scope(TEST_SOURCE, "test00")
        assert is_resolvable("assertEquals(Integer.valueOf(0), Integer.valueOf(int0))", scope)[0]
        assert is_resolvable("assertNotNull(NumberUtils.class)", scope)[0]

    def test_lambda_parameters_are_local(self):
        scope = collect_scope(TEST_SOURCE, "test00")
        assert is_resolvable("assertEquals(0, ((Comparable<Integer>) v -> v - int0).compareTo(int0))", scope)[0]
        assert not is_resolvable("assertEquals(0, ((Comparable<Integer>) v -> w).compareTo(int0))", scope)[0]

    def test_syntax_error(self):
        scope = collect_scope(TEST_SOURCE, "test00")
        assert is_resolvable("assertEquals(int0", scope) == (False, "Error de sintaxis")

    @pytest.mark.parametrize("statement", [
        "assertEquals(0, int0); assertTrue(true)",
        "assertTrue(true); } public void injected() { assertTrue(true)",
        "int0 == 0",
    ])
    def test_not_a_single_statement(self, statement):
        scope = collect_scope(TEST_SOURCE, "test00")
        assert is_resolvable(statement, scope) == (False, "Error de sintaxis")
