"""
Corrupción de documentos para el preentrenamiento de eliminación de ruido.

Modo ``english``: enmascarado de spans con longitudes Poisson y permutación de
frases. Modo ``code``: borrado independiente de tokens y rotación de documentos.
"""
import hashlib
from typing import Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from core.tokenizer import BYTE_OFFSET, MASK_ID, TokenSequence, Vocabulary
from utils.io import list_files
from utils.logging_config import setup_logger

logger = setup_logger("noising", "noising.log")

PERIOD_ID = BYTE_OFFSET + ord(".")


class CorruptionConfig(BaseModel):
    """Parámetros de ruido; los valores por defecto son los del preentrenamiento original."""
    mode: Literal["english", "code"] = "english"
    mask_rate: float = Field(default=0.30, ge=0.0, le=1.0)
    poisson_lambda: float = Field(default=3.0, gt=0.0)
    delete_rate: float = Field(default=0.20, ge=0.0, le=1.0)
    rotate_fraction: float = Field(default=0.50, ge=0.0, le=1.0)
    permute_sentences: bool = True
    max_non_ascii: float = Field(default=0.10, ge=0.0, le=1.0)
    seed: int = 0


def document_rng(seed: int, doc_index: int) -> np.random.Generator:
    """Generador por documento; no depende del orden en que se procesen."""
    return np.random.default_rng([seed, doc_index])


def _ids(seq) -> List[int]:
    return list(seq.ids) if isinstance(seq, TokenSequence) else list(seq)


def sample_span_length(cfg: CorruptionConfig, rng: np.random.Generator) -> int:
    return int(rng.poisson(cfg.poisson_lambda))


def mask_spans(seq, cfg: CorruptionConfig, rng: np.random.Generator) -> TokenSequence:
    """
    Enmascara spans hasta cubrir ``mask_rate`` de los tokens.

    Cada span de longitud L >= 1 se sustituye por un único MASK; L = 0 inserta
    un MASK entre dos tokens. Los spans no se solapan.

    Args:
        seq: Secuencia original.
        cfg (CorruptionConfig): Parámetros de ruido.
        rng (np.random.Generator): Flujo aleatorio del documento.

    Returns:
        TokenSequence: Secuencia corrupta.
    """
    ids = _ids(seq)
    n = len(ids)
    if n < 2 or cfg.mask_rate <= 0.0:
        return TokenSequence(ids=tuple(ids))

    budget = cfg.mask_rate * n
    covered = np.zeros(n, dtype=bool)
    span_start = np.zeros(n, dtype=bool)
    inserts = np.zeros(n + 1, dtype=np.int64)
    masked = 0

    while masked < budget:
        length = sample_span_length(cfg, rng)
        if length == 0:
            # Inserción entre tokens, nunca dentro de un span ya cubierto
            position = int(rng.integers(1, n))
            if covered[position - 1] and covered[position] and not span_start[position]:
                continue
            inserts[position] += 1
            continue
        if length > n:
            continue
        for _ in range(32):
            start = int(rng.integers(0, n - length + 1))
            if not covered[start:start + length].any() and not inserts[start + 1:start + length].any():
                break
        else:
            # Sin hueco para este tamaño; se muestrea otra longitud
            if covered.all():
                break
            continue
        covered[start:start + length] = True
        span_start[start] = True
        masked += length

    out: List[int] = []
    for i, token in enumerate(ids):
        out.extend([MASK_ID] * int(inserts[i]))
        if not covered[i]:
            out.append(token)
        elif span_start[i]:
            out.append(MASK_ID)
    out.extend([MASK_ID] * int(inserts[n]))
    return TokenSequence(ids=tuple(out))


def sentence_boundaries(seq, period_id: int) -> List[int]:
    return [i for i, token in enumerate(_ids(seq)) if token == period_id]


def permute_sentences(seq, boundaries: Sequence[int], rng: np.random.Generator) -> TokenSequence:
    """Reordena las frases (terminadas en las posiciones de ``boundaries``) con una permutación uniforme."""
    ids = _ids(seq)
    sentences: List[List[int]] = []
    start = 0
    for end in sorted(boundaries):
        sentences.append(ids[start:end + 1])
        start = end + 1
    if start < len(ids):
        sentences.append(ids[start:])
    if len(sentences) < 2:
        return TokenSequence(ids=tuple(ids))
    order = rng.permutation(len(sentences))
    return TokenSequence(ids=tuple(token for i in order for token in sentences[i]))


def delete_tokens(seq, cfg: CorruptionConfig, rng: np.random.Generator) -> TokenSequence:
    """Elimina cada token de forma independiente con probabilidad ``delete_rate``."""
    ids = _ids(seq)
    keep = rng.random(len(ids)) >= cfg.delete_rate
    return TokenSequence(ids=tuple(token for token, k in zip(ids, keep) if k))


def rotate(seq, pivot: int) -> TokenSequence:
    ids = _ids(seq)
    return TokenSequence(ids=tuple(ids[pivot:] + ids[:pivot]))


def rotate_document(seq, cfg: CorruptionConfig, rng: np.random.Generator) -> TokenSequence:
    """Con probabilidad ``rotate_fraction`` rota el documento alrededor de un pivote uniforme."""
    ids = _ids(seq)
    if not ids or rng.random() >= cfg.rotate_fraction:
        return TokenSequence(ids=tuple(ids))
    return rotate(ids, int(rng.integers(0, len(ids))))


def make_denoising_pair(
    doc,
    cfg: CorruptionConfig,
    rng: np.random.Generator,
    max_len: int,
    period_id: int = PERIOD_ID,
) -> Tuple[TokenSequence, TokenSequence]:
    """
    Par (fuente corrupta, objetivo limpio) para un documento.

    english: mask_spans y después permute_sentences. code: delete_tokens y
    después rotate_document. El objetivo es el documento truncado a ``max_len``.
    """
    target = TokenSequence(ids=tuple(_ids(doc)[:max_len]))
    if cfg.mode == "english":
        source = mask_spans(target, cfg, rng)
        if cfg.permute_sentences:
            source = permute_sentences(source, sentence_boundaries(source, period_id), rng)
    else:
        source = rotate_document(delete_tokens(target, cfg, rng), cfg, rng)
    return TokenSequence(ids=source.ids[:max_len]), target


def _non_ascii_fraction(text: str) -> float:
    if not text:
        return 0.0
    return sum(1 for ch in text if ord(ch) > 127) / len(text)


def load_documents(path: str, mode: str, max_non_ascii: float = 0.10) -> List[str]:
    """
    Carga el corpus de preentrenamiento.

    english: ficheros de texto; los documentos se separan con líneas en blanco.
    code: ficheros ``.java`` deduplicados por hash y filtrados por fracción de
    caracteres no ASCII.
    """
    docs: List[str] = []
    if mode == "english":
        for file in list_files(path, ".txt"):
            text = file.read_text(encoding="utf-8", errors="replace")
            docs.extend(" ".join(block.split()) for block in text.split("\n\n") if block.strip())
        return docs

    seen = set()
    duplicates = filtered = 0
    for file in list_files(path, ".java"):
        raw = file.read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        if digest in seen:
            duplicates += 1
            continue
        seen.add(digest)
        text = raw.decode("utf-8", errors="replace")
        if _non_ascii_fraction(text) > max_non_ascii:
            filtered += 1
            continue
        docs.append(text)
    logger.info(f"Corpus de código: {len(docs)} documentos, {duplicates} duplicados, {filtered} filtrados")
    return docs


def prepare_pretraining_corpus(
    docs: Sequence[str],
    vocab: Vocabulary,
    cfg: CorruptionConfig,
    max_len: int,
    epoch: Optional[int] = None,
) -> Iterator[dict]:
    """
    Genera registros ``{"source": [...], "target": [...]}`` para el preentrenamiento.

    Con ``epoch`` se vuelve a aplicar ruido usando la época como semilla.
    """
    seed = cfg.seed if epoch is None else epoch
    for index, doc in enumerate(docs):
        encoded = vocab.encode(doc)
        if not encoded.ids:
            continue
        source, target = make_denoising_pair(encoded, cfg, document_rng(seed, index), max_len, vocab.period_id)
        yield {"source": list(source.ids), "target": list(target.ids)}
