"""
Métricas de evaluación: precisión top-k, BLEU4 y corrección sintáctica.
"""
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field
from sacrebleu.metrics import BLEU

from core.java_parser import normalize_assert, parse_statement
from utils.errors import EmptyReference, LengthMismatch
from utils.logging_config import setup_logger

logger = setup_logger("evaluator", "evaluator.log")

MAX_K = 50
SYNTAX_DEPTHS = (1, 25, 50)

_corpus_bleu = BLEU(tokenize="none", smooth_method="none")
_sentence_bleu = BLEU(tokenize="none", smooth_method="none")
_smoothed_bleu = BLEU(tokenize="none", smooth_method="add-k", smooth_value=1)

Tokens = Union[str, Sequence[str]]


class EvalReport(BaseModel):
    """Informe de evaluación con la forma de las tablas de resultados."""
    n: int
    topk: Dict[int, Tuple[int, float]] = Field(default_factory=dict)
    bleu4: float = 0.0
    syntax: Dict[int, float] = Field(default_factory=dict)
    valid_loss: Optional[float] = None

    def save(self, path: str) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(self.model_dump(), indent=2), encoding="utf-8")
        return out


def _check_lengths(candidates: Sequence, targets: Sequence) -> None:
    if len(candidates) != len(targets):
        raise LengthMismatch(f"{len(candidates)} listas de candidatos para {len(targets)} objetivos")


def top_k_accuracy(candidates: Sequence[Sequence[str]], targets: Sequence[str], k: int) -> Tuple[int, float]:
    """
    Número y fracción de ejemplos cuyo objetivo aparece entre los ``k`` primeros candidatos.

    La comparación es exacta tras ``normalize_assert``.

    Raises:
        LengthMismatch: Si hay distinto número de listas y objetivos.
    """
    _check_lengths(candidates, targets)
    if not targets:
        return 0, 0.0
    hits = 0
    for ranked, target in zip(candidates, targets):
        wanted = normalize_assert(target)
        if any(normalize_assert(c) == wanted for c in ranked[:k]):
            hits += 1
    return hits, hits / len(targets)


def _joined(tokens: Tokens) -> str:
    return tokens if isinstance(tokens, str) else " ".join(tokens)


def bleu4(candidate: Tokens, reference: Tokens, smooth: bool = False) -> float:
    """
    BLEU4 de una frase (0-100).

    Sin suavizado por defecto; ``smooth=True`` aplica add-one a las precisiones
    de 2 a 4-gramas, útil como diagnóstico por ejemplo.

    Raises:
        EmptyReference: Si la referencia no tiene tokens.
    """
    ref = normalize_assert(_joined(reference))
    if not ref:
        raise EmptyReference("Referencia vacía")
    metric = _smoothed_bleu if smooth else _sentence_bleu
    return metric.sentence_score(normalize_assert(_joined(candidate)), [ref]).score


def corpus_bleu4(pairs: Sequence[Tuple[Tokens, Tokens]]) -> float:
    """BLEU4 de corpus: los recuentos de n-gramas se suman sobre todos los pares."""
    if not pairs:
        return 0.0
    hyps, refs = [], []
    for candidate, reference in pairs:
        ref = normalize_assert(_joined(reference))
        if not ref:
            raise EmptyReference("Referencia vacía en el corpus")
        hyps.append(normalize_assert(_joined(candidate)))
        refs.append(ref)
    return _corpus_bleu.corpus_score(hyps, [refs]).score


def syntax_check(assert_string: str) -> bool:
    """
    True si el assert es exactamente una sentencia válida en ``class C { void m() { <assert>; } }``.

    Varias sentencias, texto que cierra el método o expresiones que no son
    sentencia (``a == b``) se rechazan.
    """
    statement = normalize_assert(assert_string)
    if not statement:
        return False
    return parse_statement(statement) is not None


def build_report(
    candidates: Sequence[Sequence[str]],
    targets: Sequence[str],
    valid_loss: Optional[float] = None,
) -> EvalReport:
    """
    Calcula todas las métricas sobre candidatos ya generados.

    La sintaxis a profundidad ``d`` es la fracción de candidatos válidos entre
    todos los candidatos de rango <= ``d``. El BLEU4 se calcula con el candidato
    de rango 1 (cadena vacía si no hay ninguno).
    """
    _check_lengths(candidates, targets)
    report = EvalReport(n=len(targets), valid_loss=valid_loss)
    for k in range(1, MAX_K + 1):
        report.topk[k] = top_k_accuracy(candidates, targets, k)

    if targets:
        report.bleu4 = corpus_bleu4([(ranked[0] if ranked else "", target) for ranked, target in zip(candidates, targets)])

    cache: Dict[str, bool] = {}
    for depth in SYNTAX_DEPTHS:
        valid = total = 0
        for ranked in candidates:
            for candidate in ranked[:depth]:
                if candidate not in cache:
                    cache[candidate] = syntax_check(candidate)
                valid += cache[candidate]
                total += 1
        report.syntax[depth] = valid / total if total else 0.0

    logger.info(f"Evaluación: n={report.n} top1={report.topk[1][1]:.4f} bleu4={report.bleu4:.2f}")
    return report


def evaluate(generator, records: Sequence[Dict], valid_loss: Optional[float] = None, jobs: int = 1) -> EvalReport:
    """
    Genera candidatos para los registros ``{"source", "target"}`` y evalúa.

    Args:
        generator (AssertGenerator): Generador ya cargado.
        records (Sequence[Dict]): Corpus de test.
        valid_loss (float, optional): Pérdida de validación a incluir en el informe.
        jobs (int): Hilos de decodificación.
    """
    records = list(records)
    candidates = generator.generate_many((r["source"] for r in records), jobs=jobs)
    return build_report(candidates, [r["target"] for r in records], valid_loss)


def render_report(report: EvalReport, ks: Sequence[int] = (1, 5, 10, 25, 50)) -> str:
    """Texto con el formato de las tablas: ``11,754 (62.47%)``."""
    lines = [f"Ejemplos: {report.n:,}", "", "Predicciones correctas"]
    for k in ks:
        count, fraction = report.topk.get(k, (0, 0.0))
        lines.append(f"  top-{k:<3} {count:,} ({fraction * 100:.2f}%)")
    lines.append("")
    lines.append("Métricas intrínsecas")
    if report.valid_loss is not None:
        lines.append(f"  pérdida de validación  {report.valid_loss:.4f}")
    lines.append(f"  BLEU4                  {report.bleu4:.2f}")
    for depth in sorted(report.syntax):
        lines.append(f"  sintaxis top-{depth:<8} {report.syntax[depth] * 100:.2f}%")
    return "\n".join(lines)
