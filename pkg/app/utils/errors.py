"""
Jerarquía de errores del dominio.

Cualquier ``AssertForgeError`` que llega a la CLI termina con código de salida 1.
"""


class AssertForgeError(Exception):
    """Error base de la aplicación."""


class ConfigError(AssertForgeError):
    """Valor de configuración inválido o incompatible."""


class ParseError(AssertForgeError):
    """Código Java mal formado."""


class EncodingError(AssertForgeError):
    """Bytes que no se pueden decodificar como UTF-8."""


class ReplacementError(AssertForgeError):
    """No se encontró el texto del assert dentro del método de test."""


class EmptyCorpus(AssertForgeError):
    """Corpus vacío donde se necesita al menos un elemento."""


class ShapeError(AssertForgeError):
    """Longitudes o identificadores de token fuera de rango para el modelo."""


class EmptyTargetError(AssertForgeError):
    """Lote objetivo compuesto únicamente por PAD."""


class NonFiniteGradient(AssertForgeError):
    """Gradiente con valores NaN o infinitos."""


class NonFiniteUpdate(AssertForgeError):
    """La actualización del optimizador produjo parámetros no finitos."""


class NoFinishedHypothesis(AssertForgeError):
    """Ninguna hipótesis del beam emitió EOS dentro de la longitud máxima."""

    def __init__(self, message: str, hypotheses=None):
        super().__init__(message)
        self.hypotheses = hypotheses or []


class LengthMismatch(AssertForgeError):
    """Listas de candidatos y objetivos de distinta longitud."""


class EmptyReference(AssertForgeError):
    """Referencia vacía al calcular BLEU."""


class CheckpointError(AssertForgeError):
    """Checkpoint incompleto, corrupto o incompatible."""
