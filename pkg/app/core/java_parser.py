"""
Análisis de código Java con tree-sitter.

Extrae clases, métodos, anotaciones, invocaciones y sentencias assert. Todos
los textos emitidos se normalizan: sin anotaciones, sin comentarios y con los
espacios en blanco colapsados a un único espacio.
"""
import re
import threading
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple, Union

import tree_sitter_java as tsjava
from tree_sitter import Language, Node, Parser, Tree

from utils.errors import EncodingError, ParseError

JAVA_LANGUAGE = Language(tsjava.language())

PLACEHOLDER = "<AssertPlaceHolder>"

ASSERT_NAMES = frozenset({
    "assertEquals", "assertTrue", "assertFalse", "assertNull", "assertNotNull",
    "assertSame", "assertNotSame", "assertThat", "assertArrayEquals", "fail",
})
ASSERT_RECEIVERS = frozenset({"Assert", "Assertions"})

CLASS_NODES = ("class_declaration", "interface_declaration", "enum_declaration", "record_declaration")
COMMENT_NODES = ("line_comment", "block_comment", "comment")
ANNOTATION_NODES = ("marker_annotation", "annotation")

_WRAPPER_PREFIX = "class _Wrapper { "
_WRAPPER_SUFFIX = " }"

_whitespace_re = re.compile(r"\s+")
_local = threading.local()


def _parser() -> Parser:
    # Un Parser de tree-sitter no se comparte entre hilos
    parser = getattr(_local, "parser", None)
    if parser is None:
        parser = Parser(JAVA_LANGUAGE)
        _local.parser = parser
    return parser


def normalize_whitespace(text: str) -> str:
    return _whitespace_re.sub(" ", text).strip()


def is_assert_call(name: str, receiver: str = "") -> bool:
    """True si ``receiver.name`` es una llamada de aserción reconocida."""
    if name not in ASSERT_NAMES:
        return False
    return receiver == "" or receiver.split(".")[-1] in ASSERT_RECEIVERS


@dataclass(frozen=True)
class Invocation:
    """Llamada a método. Las posiciones son índices de carácter en el texto del método."""
    receiver: str
    name: str
    arg_count: int
    start: int
    end: int


@dataclass(frozen=True)
class AssertStatement:
    """Sentencia assert; ``start``/``end`` cubren el punto y coma final."""
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class JavaMethod:
    name: str
    annotations: Tuple[str, ...]
    body_text: str
    invocations: Tuple[Invocation, ...]
    asserts: Tuple[AssertStatement, ...]
    span: Tuple[int, int]
    class_name: str = ""
    path: str = ""
    is_static: bool = False

    @property
    def is_test(self) -> bool:
        return "Test" in self.annotations


@dataclass(frozen=True)
class JavaClass:
    name: str
    methods: Tuple[JavaMethod, ...] = field(default_factory=tuple)
    span: Tuple[int, int] = (0, 0)


def decode_source(source: Union[str, bytes], path: str = "") -> str:
    if isinstance(source, str):
        return source
    try:
        return source.decode("utf-8")
    except UnicodeDecodeError as e:
        raise EncodingError(f"Bytes no decodificables en {path or '<entrada>'}: {e}") from e


def parse_tree(source: str) -> Tree:
    return _parser().parse(source.encode("utf-8"))


def has_syntax_error(tree: Tree) -> bool:
    return tree.root_node.has_error


def is_valid_java(source: str) -> bool:
    """True si el texto es una unidad de compilación Java sin errores."""
    return not has_syntax_error(parse_tree(source))


STATEMENT_EXPRESSIONS = frozenset({
    "method_invocation", "assignment_expression", "update_expression", "object_creation_expression",
})


def _code_children(node: Node) -> List[Node]:
    return [c for c in node.named_children if c.type not in COMMENT_NODES]


def parse_statement(statement: str) -> Optional[Tuple[bytes, Node]]:
    """
    Analiza ``statement`` dentro de ``class C { void m() { <statement>; } }``.

    Returns:
        Optional[Tuple[bytes, Node]]: Fuente envolvente y bloque de ``m`` si el texto
        es exactamente una sentencia de expresión Java válida; None en otro caso.
    """
    source = f"class C {{ void m() {{ {statement}; }} }}"
    tree = parse_tree(source)
    if has_syntax_error(tree):
        return None
    classes = _code_children(tree.root_node)
    if len(classes) != 1 or classes[0].type != "class_declaration":
        return None
    body = classes[0].child_by_field_name("body")
    members = _code_children(body) if body is not None else []
    if len(members) != 1 or members[0].type != "method_declaration":
        return None
    block = members[0].child_by_field_name("body")
    statements = _code_children(block) if block is not None else []
    if len(statements) != 1 or statements[0].type != "expression_statement":
        return None
    expression = _code_children(statements[0])
    if len(expression) != 1 or expression[0].type not in STATEMENT_EXPRESSIONS:
        return None
    return source.encode("utf-8"), block


def _first_error_line(node: Node) -> int:
    if node.type == "ERROR" or node.is_missing:
        return node.start_point[0] + 1
    for child in node.children:
        if child.has_error:
            return _first_error_line(child)
    return node.start_point[0] + 1


def walk(node: Node) -> Iterator[Node]:
    """Recorrido en preorden del árbol."""
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(current.children))


def node_text(source: bytes, node: Optional[Node]) -> str:
    if node is None:
        return ""
    return source[node.start_byte:node.end_byte].decode("utf-8")


def _char_offset(source: bytes, byte_offset: int) -> int:
    return len(source[:byte_offset].decode("utf-8"))


def parse_java(source: Union[str, bytes], path: str = "") -> List[JavaClass]:
    """
    Analiza una unidad de compilación Java.

    Args:
        source (str | bytes): Texto del fichero.
        path (str, optional): Ruta del fichero, usada en los mensajes y en el origen de los métodos.

    Returns:
        List[JavaClass]: Clases (incluidas las anidadas) con sus métodos en orden de aparición.

    Raises:
        EncodingError: Si los bytes no son UTF-8 válido.
        ParseError: Si el fichero tiene errores de sintaxis; nunca se devuelve un resultado parcial.
    """
    text = decode_source(source, path)
    encoded = text.encode("utf-8")
    tree = _parser().parse(encoded)
    if tree.root_node.has_error:
        line = _first_error_line(tree.root_node)
        raise ParseError(f"Java mal formado en {path or '<entrada>'} (línea {line})")

    classes = []
    for node in walk(tree.root_node):
        if node.type not in CLASS_NODES:
            continue
        class_name = node_text(encoded, node.child_by_field_name("name"))
        body = node.child_by_field_name("body")
        methods = []
        if body is not None:
            for member in body.named_children:
                if member.type == "method_declaration":
                    methods.append(_build_method(encoded, member, class_name, path))
        classes.append(JavaClass(name=class_name, methods=tuple(methods), span=(node.start_byte, node.end_byte)))
    return classes


def _modifier_info(source: bytes, method: Node) -> Tuple[Tuple[str, ...], bool, int]:
    """Anotaciones, si es estático y el byte donde empieza la declaración sin anotaciones."""
    annotations: List[str] = []
    is_static = False
    start = None
    for child in method.children:
        if child.type == "modifiers":
            for mod in child.children:
                if mod.type in ANNOTATION_NODES:
                    name = node_text(source, mod.child_by_field_name("name"))
                    annotations.append(name.split(".")[-1])
                elif mod.type in COMMENT_NODES:
                    continue
                else:
                    if mod.type == "static":
                        is_static = True
                    if start is None:
                        start = mod.start_byte
        elif child.type not in COMMENT_NODES and start is None:
            start = child.start_byte
    return tuple(annotations), is_static, start if start is not None else method.start_byte


def _strip_comments(source: bytes, node: Node, start: int) -> str:
    pieces = []
    cursor = start
    for child in walk(node):
        if child.type in COMMENT_NODES and child.start_byte >= cursor:
            pieces.append(source[cursor:child.start_byte])
            pieces.append(b" ")
            cursor = child.end_byte
    pieces.append(source[cursor:node.end_byte])
    return b"".join(pieces).decode("utf-8")


def _build_method(source: bytes, node: Node, class_name: str, path: str) -> JavaMethod:
    annotations, is_static, start = _modifier_info(source, node)
    text = normalize_whitespace(_strip_comments(source, node, start))
    name, invocations, asserts = analyze_method_text(text)
    return JavaMethod(
        name=name,
        annotations=annotations,
        body_text=text,
        invocations=invocations,
        asserts=asserts,
        span=(node.start_byte, node.end_byte),
        class_name=class_name,
        path=path,
        is_static=is_static,
    )


def parse_method_fragment(method_text: str) -> Tuple[bytes, Node]:
    """
    Analiza el texto de un método envolviéndolo en una clase mínima.

    Returns:
        Tuple[bytes, Node]: Fuente envuelta codificada y nodo ``method_declaration``.
    """
    wrapped = (_WRAPPER_PREFIX + method_text + _WRAPPER_SUFFIX).encode("utf-8")
    tree = _parser().parse(wrapped)
    if tree.root_node.has_error:
        raise ParseError(f"Método mal formado: {method_text[:80]}")
    for node in walk(tree.root_node):
        if node.type == "method_declaration":
            return wrapped, node
    raise ParseError(f"No se encontró ninguna declaración de método: {method_text[:80]}")


def analyze_method_text(method_text: str) -> Tuple[str, Tuple[Invocation, ...], Tuple[AssertStatement, ...]]:
    """
    Nombre, invocaciones y asserts de un método ya normalizado.

    Las posiciones devueltas son índices de carácter dentro de ``method_text``.
    """
    wrapped, method = parse_method_fragment(method_text)
    prefix = len(_WRAPPER_PREFIX)
    name = node_text(wrapped, method.child_by_field_name("name"))

    invocations = []
    asserts = []
    for node in walk(method):
        if node.type == "method_invocation":
            call_name = node.child_by_field_name("name")
            arguments = node.child_by_field_name("arguments")
            arg_count = 0
            if arguments is not None:
                arg_count = sum(1 for a in arguments.named_children if a.type not in COMMENT_NODES)
            invocations.append(Invocation(
                receiver=normalize_whitespace(node_text(wrapped, node.child_by_field_name("object"))),
                name=node_text(wrapped, call_name),
                arg_count=arg_count,
                start=_char_offset(wrapped, call_name.start_byte) - prefix,
                end=_char_offset(wrapped, node.end_byte) - prefix,
            ))
        elif node.type == "expression_statement":
            expression = node.named_children[0] if node.named_children else None
            if expression is not None and expression.type == "method_invocation":
                receiver = node_text(wrapped, expression.child_by_field_name("object"))
                call = node_text(wrapped, expression.child_by_field_name("name"))
                if is_assert_call(call, normalize_whitespace(receiver)):
                    asserts.append(AssertStatement(
                        text=normalize_whitespace(node_text(wrapped, expression)),
                        start=_char_offset(wrapped, node.start_byte) - prefix,
                        end=_char_offset(wrapped, node.end_byte) - prefix,
                    ))

    invocations.sort(key=lambda inv: inv.start)
    return name, tuple(invocations), tuple(asserts)


def count_asserts(method_text: str) -> int:
    """Número de sentencias assert reconocidas; el placeholder cuenta como llamada neutra."""
    _, _, asserts = analyze_method_text(method_text.replace(PLACEHOLDER, "placeholder()"))
    return len(asserts)


def normalize_assert(text: str) -> str:
    """Forma canónica para comparar asserts: espacios colapsados y sin ``;`` final."""
    text = normalize_whitespace(text)
    while text.endswith(";"):
        text = text[:-1].rstrip()
    return text
