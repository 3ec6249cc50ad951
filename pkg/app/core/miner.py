"""
Minado de pares Test-Assert (TAP) a partir de código Java.
"""
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from core.java_parser import (
    PLACEHOLDER,
    JavaClass,
    JavaMethod,
    is_assert_call,
    normalize_whitespace,
    parse_java,
)
from utils.errors import AssertForgeError, EmptyCorpus, ReplacementError
from utils.io import list_files, write_jsonl
from utils.logging_config import setup_logger

logger = setup_logger("miner", "miner.log")

SOURCE_SEPARATOR = " "
SPLIT_RATIOS = (0.80, 0.10, 0.10)


class TestAssertPair(BaseModel):
    """Un par Test-Assert: test con placeholder, método focal y assert."""
    __test__ = False  # no es una clase de tests para pytest

    test_with_placeholder: str
    focal_method: str
    assert_stmt: str
    source_text: str
    target_text: str
    file: str = ""
    method: str = ""

    def to_record(self) -> Dict[str, str]:
        return {"source": self.source_text, "target": self.target_text, "file": self.file, "method": self.method}


class CorpusSplit(BaseModel):
    train: List[TestAssertPair]
    valid: List[TestAssertPair]
    test: List[TestAssertPair]
    ratios: Tuple[float, float, float] = SPLIT_RATIOS
    seed: int = 0

    def counts(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.valid), len(self.test)


class MiningResult(BaseModel):
    split: CorpusSplit
    stats: Dict[str, int] = Field(default_factory=dict)


def extract_candidates(methods: Iterable[JavaMethod]) -> List[JavaMethod]:
    """Métodos con anotación ``@Test`` y exactamente una sentencia assert."""
    return [m for m in methods if m.is_test and len(m.asserts) == 1]


def _class_stem(class_name: str) -> str:
    if class_name.endswith("Test") and len(class_name) > 4:
        return class_name[:-4]
    if class_name.startswith("Test") and len(class_name) > 4:
        return class_name[4:]
    return class_name


class FocalIndex:
    """
    Índice nombre simple de método -> métodos minados, en orden de ruta.

    La ambigüedad se resuelve a favor de la clase cuyo nombre es el de la clase
    de test sin el prefijo/sufijo ``Test``; si no existe, gana el primero.
    """

    def __init__(self, methods: Iterable[JavaMethod] = ()):
        self._by_name: Dict[str, List[JavaMethod]] = {}
        for method in methods:
            self.add(method)

    def add(self, method: JavaMethod) -> None:
        self._by_name.setdefault(method.name, []).append(method)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_name.values())

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def lookup(self, name: str, test_class: str = "") -> Optional[JavaMethod]:
        candidates = self._by_name.get(name)
        if not candidates:
            return None
        stem = _class_stem(test_class)
        for candidate in candidates:
            if candidate.class_name == stem:
                return candidate
        return candidates[0]


def resolve_focal(test: JavaMethod, class_index: FocalIndex) -> Optional[JavaMethod]:
    """
    Método focal según la última invocación anterior a (o dentro de) el assert.

    Las llamadas de aserción se saltan y se toma la invocación anterior.

    Args:
        test (JavaMethod): Método de test con un único assert.
        class_index (FocalIndex): Índice de todos los métodos minados.

    Returns:
        Optional[JavaMethod]: Método focal, o None si ninguna invocación se resuelve.
    """
    if not test.asserts:
        return None
    assert_end = test.asserts[0].end
    for invocation in reversed(test.invocations):
        if invocation.start >= assert_end:
            continue
        if is_assert_call(invocation.name, invocation.receiver):
            continue
        return class_index.lookup(invocation.name, test.class_name)
    return None


def make_tap(test: JavaMethod, focal: JavaMethod, with_focal: bool = True) -> TestAssertPair:
    """
    Construye el TAP sustituyendo el assert por ``<AssertPlaceHolder>;``.

    Args:
        test (JavaMethod): Método de test con un único assert.
        focal (JavaMethod): Método focal resuelto.
        with_focal (bool): Si es False la fuente es sólo el test (variante de autocompletado).

    Raises:
        ReplacementError: Si el span del assert no corresponde al texto del método.
    """
    statement = test.asserts[0]
    text = test.body_text
    located = text[statement.start:statement.end]
    if not located.endswith(";") or normalize_whitespace(located[:-1]) != statement.text:
        raise ReplacementError(f"No se pudo localizar el assert en {test.class_name}.{test.name}")

    test_with_placeholder = normalize_whitespace(text[:statement.start] + PLACEHOLDER + ";" + text[statement.end:])
    focal_text = focal.body_text
    source = test_with_placeholder + SOURCE_SEPARATOR + focal_text if with_focal else test_with_placeholder
    return TestAssertPair(
        test_with_placeholder=test_with_placeholder,
        focal_method=focal_text,
        assert_stmt=statement.text,
        source_text=source,
        target_text=statement.text,
        file=test.path,
        method=test.name,
    )


def split_counts(total: int, ratios: Sequence[float] = SPLIT_RATIOS) -> Tuple[int, int, int]:
    """train y test por suelo; valid se queda con el resto."""
    train = math.floor(total * ratios[0])
    test = math.floor(total * ratios[2])
    return train, total - train - test, test


def split_corpus(taps: Sequence[TestAssertPair], ratios: Sequence[float] = SPLIT_RATIOS, seed: int = 0) -> CorpusSplit:
    """
    Partición determinista train/valid/test (80/10/10).

    Raises:
        EmptyCorpus: Si no hay pares.
    """
    if not taps:
        raise EmptyCorpus("No hay pares Test-Assert que particionar")
    order = np.random.default_rng(seed).permutation(len(taps))
    shuffled = [taps[i] for i in order]
    n_train, n_valid, _ = split_counts(len(shuffled), ratios)
    return CorpusSplit(
        train=shuffled[:n_train],
        valid=shuffled[n_train:n_train + n_valid],
        test=shuffled[n_train + n_valid:],
        ratios=tuple(ratios),
        seed=seed,
    )


def _parse_file(path: str) -> Tuple[str, Optional[List[JavaClass]], str]:
    try:
        return path, parse_java(Path(path).read_bytes(), path=path), ""
    except AssertForgeError as e:
        return path, None, str(e)


class CorpusMiner:
    """
    Recorre árboles de código Java y genera el corpus paralelo de TAPs.
    """

    def __init__(self, jobs: int = 1):
        self.jobs = max(1, jobs)
        self.stats: Counter = Counter()

    def parse_tree(self, root: Optional[str]) -> List[JavaClass]:
        """
        Analiza todos los ``.java`` de un directorio.

        Los ficheros se procesan en paralelo y se combinan en orden lexicográfico
        de ruta; los que fallan se registran y se cuentan.
        """
        if not root:
            return []
        paths = [str(p) for p in list_files(root, ".java")]
        if self.jobs > 1 and len(paths) > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                results = list(pool.map(_parse_file, paths, chunksize=8))
        else:
            results = [_parse_file(p) for p in paths]

        classes: List[JavaClass] = []
        for path, parsed, error in results:
            if parsed is None:
                self.stats["files_failed"] += 1
                logger.warning(f"Fichero descartado {path}: {error}")
                continue
            self.stats["files_ok"] += 1
            classes.extend(parsed)
        return classes

    def mine(self, src_dir: str, focal_dir: Optional[str] = None, with_focal: bool = True) -> List[TestAssertPair]:
        """
        Extrae los TAPs de ``src_dir`` buscando métodos focales también en ``focal_dir``.

        Returns:
            List[TestAssertPair]: Pares en orden de ruta y de aparición.
        """
        test_classes = self.parse_tree(src_dir)
        focal_classes = self.parse_tree(focal_dir) if focal_dir and Path(focal_dir) != Path(src_dir) else []

        index = FocalIndex(m for c in test_classes + focal_classes for m in c.methods)
        logger.info(f"Índice focal con {len(index)} métodos")

        taps = []
        for java_class in test_classes:
            candidates = extract_candidates(java_class.methods)
            self.stats["candidates"] += len(candidates)
            for test in candidates:
                focal = resolve_focal(test, index)
                if focal is None:
                    self.stats["no_focal"] += 1
                    continue
                try:
                    taps.append(make_tap(test, focal, with_focal=with_focal))
                except ReplacementError as e:
                    self.stats["replacement_failed"] += 1
                    logger.warning(str(e))
        self.stats["pairs"] = len(taps)
        logger.info(f"Minado terminado: {dict(self.stats)}")
        return taps


def mine_directory(
    src_dir: str,
    out_dir: Optional[str] = None,
    focal_dir: Optional[str] = None,
    seed: int = 0,
    jobs: int = 1,
    with_focal: bool = True,
) -> MiningResult:
    """
    Minado completo: análisis, TAPs, partición y (opcionalmente) escritura JSONL.

    Args:
        src_dir (str): Directorio con los tests Java.
        out_dir (str, optional): Si se indica, se escriben ``train/valid/test.jsonl``.
        focal_dir (str, optional): Directorio de clases de producción.
        seed (int): Semilla de la partición.
        jobs (int): Procesos para el análisis de ficheros.
        with_focal (bool): False genera la variante sin método focal.

    Returns:
        MiningResult: Partición y contadores.
    """
    miner = CorpusMiner(jobs=jobs)
    taps = miner.mine(src_dir, focal_dir, with_focal=with_focal)
    split = split_corpus(taps, seed=seed)

    if out_dir:
        for name, part in (("train", split.train), ("valid", split.valid), ("test", split.test)):
            write_jsonl(Path(out_dir) / f"{name}.jsonl", (tap.to_record() for tap in part))
        logger.info(f"Corpus escrito en {out_dir}: {split.counts()}")

    return MiningResult(split=split, stats=dict(miner.stats))
