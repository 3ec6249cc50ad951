"""
Aumento de tests existentes (p. ej. generados por EvoSuite) con asserts generados.
"""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from core.evaluator import syntax_check
from core.java_parser import (
    PLACEHOLDER,
    analyze_method_text,
    is_assert_call,
    normalize_assert,
    normalize_whitespace,
    parse_java,
    parse_method_fragment,
    parse_tree,
)
from core.miner import FocalIndex, SOURCE_SEPARATOR
from utils.errors import ParseError
from utils.java_scope import TestScope, collect_scope, is_resolvable
from utils.logging_config import setup_logger

logger = setup_logger("augmenter", "augmenter.log")

NONE_MARK = "-"
_PLACEHOLDER_CALL = "__assert_placeholder__()"


class AugmentationResult(BaseModel):
    """Resultado de aumentar un método; ``chosen_assert`` es None si ningún candidato sirve."""
    method: str
    original_test: str
    chosen_assert: Optional[str] = None
    augmented_test: Optional[str] = None
    rejected: List[Tuple[str, str]] = Field(default_factory=list)
    focal_method: str = ""
    file: str = ""

    def report_row(self) -> Dict[str, str]:
        """Fila del informe: método focal, test y assert elegido (o ``-``)."""
        return {
            "file": self.file,
            "focal_method": self.focal_method,
            "test": self.method,
            "assert": self.chosen_assert + ";" if self.chosen_assert else NONE_MARK,
        }


def select_assert(
    candidates: Sequence[str],
    test_source: str,
    focal_source: Optional[str] = None,
    method_name: Optional[str] = None,
    scope: Optional[TestScope] = None,
) -> Tuple[Optional[str], List[Tuple[str, str]]]:
    """
    Elige el primer candidato utilizable.

    Un candidato sirve si pasa ``syntax_check``, todos sus identificadores se
    resuelven en el ámbito del test y no repite un assert ya presente.

    Args:
        candidates (Sequence[str]): Predicciones ordenadas por rango.
        test_source (str): Fichero de test o método suelto.
        focal_source (str, optional): Fuente de la clase focal.
        method_name (str, optional): Método de test dentro del fichero.
        scope (TestScope, optional): Ámbito ya calculado.

    Returns:
        Tuple[Optional[str], List[Tuple[str, str]]]: Assert elegido (o None) y candidatos descartados con el motivo.
    """
    scope = scope or collect_scope(test_source, method_name, focal_source)
    rejected: List[Tuple[str, str]] = []
    for candidate in candidates:
        statement = normalize_assert(candidate)
        if not syntax_check(statement):
            rejected.append((candidate, "sintaxis"))
            continue
        ok, reason = is_resolvable(statement, scope)
        if not ok:
            rejected.append((candidate, reason))
            continue
        if statement in scope.existing_asserts:
            rejected.append((candidate, "duplicado"))
            continue
        return statement, rejected
    return None, rejected


def _statements(block) -> List:
    return [c for c in block.named_children if c.type not in ("line_comment", "block_comment")]


def _line_indent(text: str, position: int) -> Optional[str]:
    """Sangría de la línea si ``position`` es el primer carácter no blanco; si no, None."""
    line_start = text.rfind("\n", 0, position) + 1
    prefix = text[line_start:position]
    return prefix if line_start > 0 and not prefix.strip() else None


def insert_assert(test_source: str, assert_stmt: str) -> str:
    """
    Inserta ``assert_stmt`` como última sentencia del método de test.

    Si el cuerpo es un único ``try``, el assert va al final del bloque ``try``;
    si la última sentencia es un ``return``, justo antes de él; en otro caso al
    final del cuerpo. Se respeta la sangría de la sentencia vecina.

    Args:
        test_source (str): Texto de un método de test.
        assert_stmt (str): Assert a insertar (con o sin ``;`` final).

    Returns:
        str: Método aumentado.

    Raises:
        ParseError: Si el método de entrada o el resultado no son Java válido.
    """
    wrapped, method = parse_method_fragment(test_source)
    prefix = len(wrapped) - len((test_source + " }").encode("utf-8"))
    source = test_source.encode("utf-8")
    statement = (normalize_assert(assert_stmt) + ";").encode("utf-8")

    block = method.child_by_field_name("body")
    if block is None:
        raise ParseError("El método no tiene cuerpo")
    body = _statements(block)
    if len(body) == 1 and body[0].type == "try_statement":
        block = body[0].child_by_field_name("body")
        body = _statements(block)

    text = test_source
    if body and body[-1].type == "return_statement":
        start = body[-1].start_byte - prefix
        indent = _line_indent(text, len(source[:start].decode("utf-8")))
        glue = b"\n" + indent.encode("utf-8") if indent is not None else b" "
        result = source[:start] + statement + glue + source[start:]
    elif body:
        end = body[-1].end_byte - prefix
        indent = _line_indent(text, len(source[:body[-1].start_byte - prefix].decode("utf-8")))
        glue = b"\n" + indent.encode("utf-8") if indent is not None else b" "
        result = source[:end] + glue + statement + source[end:]
    else:
        open_brace = block.start_byte - prefix + 1
        brace_indent = _line_indent(text, len(source[:block.start_byte - prefix].decode("utf-8")))
        glue = b"\n" + (brace_indent or "").encode("utf-8") + b"    " if brace_indent is not None else b" "
        result = source[:open_brace] + glue + statement + source[open_brace:]

    augmented = result.decode("utf-8")
    parse_method_fragment(augmented)
    return augmented


def focal_method_name(test_text: str) -> str:
    """Nombre de la última invocación que no es un assert (heurística del método focal)."""
    _, invocations, _ = analyze_method_text(normalize_whitespace(test_text))
    for invocation in reversed(invocations):
        if not is_assert_call(invocation.name, invocation.receiver):
            return invocation.name
    return ""


def augmentation_source(test_text: str, focal_index: Optional[FocalIndex] = None, test_class: str = "") -> str:
    """
    Fuente del modelo para un test sin assert: el placeholder como última
    sentencia y, si se resuelve, el método focal a continuación.
    """
    with_placeholder = insert_assert(test_text, _PLACEHOLDER_CALL)
    methods = parse_java("class _Wrapper { " + with_placeholder + " }")[0].methods
    body = methods[0].body_text.replace(_PLACEHOLDER_CALL + ";", PLACEHOLDER + ";")
    if focal_index is not None:
        focal = focal_index.lookup(focal_method_name(test_text), test_class)
        if focal is not None:
            return body + SOURCE_SEPARATOR + focal.body_text
    return body


def augment_test_file(
    path: str,
    candidates_by_method: Dict[str, Sequence[str]],
    focal_source: Optional[str] = None,
    out_path: Optional[str] = None,
) -> List[AugmentationResult]:
    """
    Aumenta los métodos de un fichero de test y reescribe el fichero.

    Los métodos sin candidatos se dejan intactos. Cada método aumentado se
    vuelve a insertar en su posición original del fichero.

    Args:
        path (str): Fichero de test.
        candidates_by_method (Dict[str, Sequence[str]]): Predicciones por nombre de método.
        focal_source (str, optional): Fuente de la clase focal.
        out_path (str, optional): Destino; por defecto se sobrescribe ``path``.

    Returns:
        List[AugmentationResult]: Un resultado por método con candidatos, en orden del fichero.
    """
    source_text = Path(path).read_text(encoding="utf-8")
    source = source_text.encode("utf-8")
    classes = parse_java(source, path=path)

    results: List[AugmentationResult] = []
    edits: List[Tuple[int, int, bytes]] = []
    for java_class in classes:
        for method in java_class.methods:
            candidates = candidates_by_method.get(method.name)
            if candidates is None:
                continue
            start, end = method.span
            original = source[start:end].decode("utf-8")
            scope = collect_scope(source_text, method.name, focal_source)
            chosen, rejected = select_assert(candidates, source_text, scope=scope)
            result = AugmentationResult(
                method=method.name,
                original_test=original,
                chosen_assert=chosen,
                rejected=rejected,
                focal_method=focal_method_name(method.body_text),
                file=path,
            )
            if chosen is not None:
                result.augmented_test = insert_assert(original, chosen)
                edits.append((start, end, result.augmented_test.encode("utf-8")))
                logger.info(f"{java_class.name}.{method.name}: {chosen}")
            else:
                logger.info(f"{java_class.name}.{method.name}: ningún candidato válido ({len(rejected)} descartados)")
            results.append(result)

    augmented = source
    for start, end, replacement in sorted(edits, reverse=True):
        augmented = augmented[:start] + replacement + augmented[end:]
    output = augmented.decode("utf-8")
    if parse_tree(output).root_node.has_error:
        raise ParseError(f"El fichero aumentado no es Java válido: {path}")

    target = Path(out_path or path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(output, encoding="utf-8")
    return results
