"""
Resolución léxica de identificadores para asserts generados.

Un assert sólo se acepta si cada identificador libre que menciona se puede
resolver en el ámbito del test: imports, nombres declarados en el fichero de
test, parámetros y locales del método, la clase focal y sus miembros estáticos,
y los tipos de ``java.lang``. No se hace comprobación de tipos.
"""
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Set, Tuple

from tree_sitter import Node

from core.java_parser import (
    ASSERT_NAMES,
    ASSERT_RECEIVERS,
    CLASS_NODES,
    node_text,
    normalize_assert,
    parse_statement,
    parse_tree,
    walk,
)

JAVA_LANG_TYPES = frozenset({
    "Object", "String", "StringBuilder", "StringBuffer", "CharSequence", "Number",
    "Integer", "Long", "Short", "Byte", "Float", "Double", "Boolean", "Character",
    "Math", "StrictMath", "System", "Class", "Enum", "Iterable", "Comparable",
    "Runnable", "Thread", "Void", "Exception", "RuntimeException", "Error",
    "Throwable", "IllegalArgumentException", "IllegalStateException",
    "NullPointerException", "NumberFormatException", "ArithmeticException",
    "IndexOutOfBoundsException", "ArrayIndexOutOfBoundsException",
    "UnsupportedOperationException", "ClassCastException",
})

# Sufijos con los que se nombran las clases de test generadas o escritas a mano
_TEST_CLASS_SUFFIXES = ("_ESTest", "Test", "Tests")

_DECLARATION_NODES = ("variable_declarator", "formal_parameter", "catch_formal_parameter", "enhanced_for_statement")


@dataclass
class TestScope:
    """Nombres visibles desde un método de test."""
    __test__ = False  # no es una clase de tests para pytest

    names: Set[str] = field(default_factory=set)
    focal_class: str = ""
    focal_statics: Optional[Set[str]] = None
    existing_asserts: Set[str] = field(default_factory=set)

    def resolves(self, name: str) -> bool:
        return (
            name in self.names
            or name in JAVA_LANG_TYPES
            or name in ASSERT_RECEIVERS
            or name == self.focal_class
        )


def infer_focal_class(test_class: str) -> str:
    for suffix in _TEST_CLASS_SUFFIXES:
        if test_class.endswith(suffix) and len(test_class) > len(suffix):
            return test_class[:-len(suffix)]
    return test_class


def _wrap(source: str) -> str:
    """Envuelve un método suelto en una clase para poder analizarlo."""
    if re.search(r"\b(class|interface|enum)\s+\w+", source):
        return source
    return "class _Wrapper { " + source + " }"


def _declared_names(source: bytes, node: Node) -> Iterable[str]:
    for child in walk(node):
        if child.type in _DECLARATION_NODES:
            name = child.child_by_field_name("name")
            if name is not None:
                yield node_text(source, name)


def _import_names(source: bytes, root: Node) -> Iterable[str]:
    for node in root.named_children:
        if node.type != "import_declaration":
            continue
        text = node_text(source, node)
        if text.rstrip(";").rstrip().endswith("*"):
            continue
        path = [node_text(source, n) for n in walk(node) if n.type == "identifier"]
        if path:
            yield path[-1]


def _static_members(source: str, class_name: str) -> Set[str]:
    encoded = source.encode("utf-8")
    statics: Set[str] = set()
    for node in walk(parse_tree(source).root_node):
        if node.type not in CLASS_NODES or node_text(encoded, node.child_by_field_name("name")) != class_name:
            continue
        body = node.child_by_field_name("body")
        for member in body.named_children if body is not None else ():
            modifiers = next((c for c in member.children if c.type == "modifiers"), None)
            if modifiers is None or "static" not in node_text(encoded, modifiers).split():
                continue
            if member.type == "method_declaration":
                statics.add(node_text(encoded, member.child_by_field_name("name")))
            elif member.type == "field_declaration":
                statics.update(_declared_names(encoded, member))
            elif member.type in CLASS_NODES:
                statics.add(node_text(encoded, member.child_by_field_name("name")))
    return statics


def collect_scope(test_source: str, method_name: Optional[str] = None, focal_source: Optional[str] = None) -> TestScope:
    """
    Construye el ámbito léxico de un método de test.

    Args:
        test_source (str): Fichero de test completo o un método suelto.
        method_name (str, optional): Método cuyo ámbito se calcula; por defecto el último del fichero.
        focal_source (str, optional): Fuente de la clase focal, para sus miembros estáticos.

    Returns:
        TestScope: Nombres resolubles, clase focal y asserts ya presentes en el método.
    """
    text = _wrap(test_source)
    encoded = text.encode("utf-8")
    root = parse_tree(text).root_node
    scope = TestScope()
    scope.names.update(_import_names(encoded, root))

    methods = []
    test_class = ""
    for node in walk(root):
        if node.type in CLASS_NODES:
            name = node_text(encoded, node.child_by_field_name("name"))
            scope.names.add(name)
            if not test_class and name != "_Wrapper":
                test_class = name
        elif node.type == "field_declaration":
            scope.names.update(_declared_names(encoded, node))
        elif node.type == "method_declaration":
            scope.names.add(node_text(encoded, node.child_by_field_name("name")))
            methods.append(node)

    if methods:
        method = next(
            (m for m in methods if node_text(encoded, m.child_by_field_name("name")) == method_name),
            methods[-1],
        )
        scope.names.update(_declared_names(encoded, method))
        for node in walk(method):
            if node.type == "expression_statement":
                call = node.named_children[0] if node.named_children else None
                if call is not None and call.type == "method_invocation":
                    if node_text(encoded, call.child_by_field_name("name")) in ASSERT_NAMES:
                        scope.existing_asserts.add(normalize_assert(node_text(encoded, call)))

    scope.focal_class = infer_focal_class(test_class) if test_class else ""
    if focal_source:
        focal_classes = [
            node_text(focal_source.encode("utf-8"), n.child_by_field_name("name"))
            for n in walk(parse_tree(focal_source).root_node) if n.type in CLASS_NODES
        ]
        if focal_classes and scope.focal_class not in focal_classes:
            scope.focal_class = focal_classes[0]
        scope.focal_statics = _static_members(focal_source, scope.focal_class)
    return scope


def _member_role(node: Node) -> Tuple[str, Optional[Node]]:
    """
    Papel de ``node`` como nombre de miembro.

    Devuelve ``("call", None)`` para una llamada sin receptor, ``("member", objeto)``
    para un miembro con receptor y ``("", None)`` en cualquier otro caso.
    """
    parent = node.parent
    if parent is None:
        return "", None
    if parent.type == "method_invocation" and parent.child_by_field_name("name") == node:
        receiver = parent.child_by_field_name("object")
        return ("member", receiver) if receiver is not None else ("call", None)
    if parent.type == "field_access" and parent.child_by_field_name("field") == node:
        return "member", parent.child_by_field_name("object")
    return "", None


def is_resolvable(assert_string: str, scope: TestScope) -> Tuple[bool, str]:
    """
    Verifica que todos los identificadores libres del assert se resuelven en ``scope``.

    Args:
        assert_string (str): Assert candidato.
        scope (TestScope): Ámbito del método de test.

    Returns:
        Tuple[bool, str]: (es_resoluble, mensaje_error)
    """
    statement = normalize_assert(assert_string)
    if not statement:
        return False, "Assert vacío"
    parsed = parse_statement(statement)
    if parsed is None:
        return False, "Error de sintaxis"
    encoded, block = parsed

    local: Set[str] = set(_declared_names(encoded, block))
    for node in walk(block):
        if node.type == "lambda_expression":
            params = node.child_by_field_name("parameters")
            if params is not None:
                local.update(node_text(encoded, n) for n in walk(params) if n.type == "identifier")

    for node in walk(block):
        if node.type not in ("identifier", "type_identifier"):
            continue
        name = node_text(encoded, node)
        parent = node.parent
        if parent is not None and parent.type in ("scoped_identifier", "scoped_type_identifier") \
                and parent.named_children and parent.named_children[0] != node:
            continue

        role, owner = _member_role(node)
        if role == "call":
            # Llamada sin receptor: assert, método del test o import estático
            if name in ASSERT_NAMES or scope.resolves(name):
                continue
            return False, f"Método no resoluble: {name}"
        if role == "member":
            owner_name = node_text(encoded, owner)
            if owner_name == scope.focal_class and scope.focal_statics is not None \
                    and name not in scope.focal_statics and name != "class":
                return False, f"{scope.focal_class} no declara el miembro estático {name}"
            continue

        if name in local or scope.resolves(name):
            continue
        return False, f"Identificador no resoluble: {name}"

    return True, ""
