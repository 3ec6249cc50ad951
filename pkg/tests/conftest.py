"""
Fixtures compartidas de la batería de tests.
"""
import os
import tempfile
from pathlib import Path

# Los loggers se crean al importar los módulos: sus ficheros no deben ir al repositorio
os.environ.setdefault("ASSERT_FORGE_LOG_DIR", str(Path(tempfile.gettempdir()) / "assert_forge_test_logs"))

import pytest  # noqa: E402

from core.model import ModelConfig, build_model  # noqa: E402
from core.tokenizer import Vocabulary  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
REPO = FIXTURES / "repo"
EVOSUITE = FIXTURES / "evosuite"

FIG2_SOURCE = (
    "public void testLength() { BitSet bset = new BitSet(); "
    "ImmutableBitSet ibset = new ImmutableBitSet(bset); <AssertPlaceHolder>; } "
    "public int length() { return this.bitSet.length(); }"
)
FIG2_TARGET = "Assert.assertEquals(bset.length(), ibset.length())"

# Asserts generados para los 18 métodos de NumberUtils, en orden de test00 a test17;
# None marca el método para el que no hay ningún candidato válido.
NUMBER_UTILS_ASSERTS = [
    'assertEquals(5, NumberUtils.toInt("5"))',
    'assertEquals(1, NumberUtils.toLong("1", 1))',
    'assertEquals(6, NumberUtils.toFloat("6", 6), 0);',
    'assertNotNull(NumberUtils.toDouble("foo", 1.0));',
    'assertEquals(1, NumberUtils.toByte("1",(( byte)(1))));',
    'assertEquals(15, NumberUtils.toShort("15",(( short)(15))));',
    'assertNotNull(NumberUtils.createFloat("1"))',
    'assertNotNull(NumberUtils.createDouble("1"));',
    'assertNotNull(NumberUtils.createInteger("1"));',
    'assertNotNull(NumberUtils.createLong("1"));',
    'assertEquals(BigInteger.valueOf(1), NumberUtils.createBigInteger("1"));',
    None,
    "assertNotNull(long0);",
    "assertEquals(4, NumberUtils.min(4, 5, 7));",
    "assertTrue(( float0 == 0.0F));",
    "assertTrue(( byte0 == 5));",
    'assertTrue(NumberUtils.isDigits("1"));',
    'assertTrue(NumberUtils.isNumber("1"))',
]


@pytest.fixture
def repo_dir() -> Path:
    """Repositorio Java de ejemplo con tests y clases de producción."""
    return REPO


@pytest.fixture
def evosuite_test_path(tmp_path) -> Path:
    """Copia escribible del fichero de tests estilo EvoSuite."""
    source = EVOSUITE / "tests" / "NumberUtils_ESTest.java"
    target = tmp_path / "tests" / source.name
    target.parent.mkdir(parents=True)
    target.write_text(source.read_text(encoding="utf-8"), encoding="utf-8")
    return target


@pytest.fixture
def number_utils_source() -> str:
    """Fuente de la clase focal NumberUtils."""
    return (EVOSUITE / "focal" / "NumberUtils.java").read_text(encoding="utf-8")


@pytest.fixture
def byte_vocab() -> Vocabulary:
    """Vocabulario sin fusiones: especiales más los 256 bytes."""
    return Vocabulary([])


def tiny_model_config(**overrides) -> ModelConfig:
    """Modelo diminuto para comprobaciones numéricas."""
    values = dict(vocab_size=11, max_len=8, enc_layers=1, dec_layers=1, d_model=8, n_heads=2, d_ff=16, dropout=0.0)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def tiny_model():
    """Modelo diminuto en 64 bits sin dropout."""
    return build_model(tiny_model_config(), seed=0, float64=True)


_FIELDS = [
    "size", "count", "width", "height", "depth", "total", "index", "offset",
    "limit", "weight", "score", "level", "price", "speed", "rank", "port",
    "year", "month", "day", "hour", "minute", "second", "volume", "margin",
    "balance", "capacity", "quota", "retries", "timeout", "version", "priority",
    "length2", "radius", "angle", "factor", "delay", "budget", "points", "votes",
]


def synthetic_taps(n: int, start: int = 0):
    """Pares (fuente, objetivo) sintéticos con la forma de un TAP; el primero es el de testLength."""
    pairs = [] if start else [(FIG2_SOURCE, FIG2_TARGET)]
    i = start
    while len(pairs) < n:
        name = _FIELDS[i % len(_FIELDS)] + ("" if i < len(_FIELDS) else str(i // len(_FIELDS)))
        source = (
            f"public void test{name.capitalize()}() {{ Box box = new Box({i}); <AssertPlaceHolder>; }} "
            f"public int {name}() {{ return this.{name}; }}"
        )
        pairs.append((source, f"assertEquals({i}, box.{name}())"))
        i += 1
    return pairs
