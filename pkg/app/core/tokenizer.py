"""
Vocabulario BPE a nivel de byte compartido por codificador y decodificador.

Los ids 0-5 están reservados para los tokens especiales; después vienen los 256
bytes y, a continuación, un token por cada regla de fusión aprendida.
"""
import hashlib
import heapq
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from core.java_parser import PLACEHOLDER
from utils.errors import ConfigError, EmptyCorpus
from utils.logging_config import setup_logger

logger = setup_logger("tokenizer", "tokenizer.log")

PAD_ID, BOS_ID, EOS_ID, UNK_ID, MASK_ID, PLACEHOLDER_ID = range(6)
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>", "<mask>", PLACEHOLDER)
BYTE_OFFSET = len(SPECIAL_TOKENS)
MIN_VOCAB_SIZE = 256 + BYTE_OFFSET

# Fragmentos: placeholder | un carácter de espacio | palabra | racha de puntuación
_chunk_re = re.compile(re.escape(PLACEHOLDER) + r"|\s|\w+|[^\w\s]+")


@dataclass(frozen=True)
class TokenSequence:
    ids: Tuple[int, ...]
    text_hash: str = ""

    def __len__(self) -> int:
        return len(self.ids)


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _chunks(text: str) -> List[str]:
    return _chunk_re.findall(text)


class Vocabulary:
    """
    Vocabulario inmutable: tabla id -> bytes y reglas de fusión ordenadas por rango.
    """

    def __init__(self, merges: Sequence[Tuple[int, int]]):
        self.merges: Tuple[Tuple[int, int], ...] = tuple(merges)
        tokens: List[bytes] = [s.encode("utf-8") for s in SPECIAL_TOKENS]
        tokens.extend(bytes([b]) for b in range(256))
        self.ranks: Dict[Tuple[int, int], int] = {}
        for rank, (left, right) in enumerate(self.merges):
            self.ranks[(left, right)] = len(tokens)
            tokens.append(tokens[left] + tokens[right])
        self.id_to_token: Tuple[bytes, ...] = tuple(tokens)
        self._cache: Dict[str, Tuple[int, ...]] = {}

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def period_id(self) -> int:
        return BYTE_OFFSET + ord(".")

    def to_text(self) -> str:
        """Formato en texto: cabecera con las fusiones y después un token por línea (hex)."""
        lines = [f"#merges {len(self.merges)}"]
        lines.extend(f"{left} {right}" for left, right in self.merges)
        lines.append(f"#tokens {len(self.id_to_token)}")
        for token_id, token in enumerate(self.id_to_token):
            lines.append(SPECIAL_TOKENS[token_id] if token_id < BYTE_OFFSET else token.hex())
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("#merges "):
            raise ConfigError(f"Fichero de vocabulario inválido: {path}")
        n_merges = int(lines[0].split()[1])
        merges = [tuple(int(x) for x in line.split()) for line in lines[1:1 + n_merges]]
        vocab = cls(merges)
        header = lines[1 + n_merges]
        if header != f"#tokens {len(vocab)}":
            raise ConfigError(f"Vocabulario inconsistente en {path}: {header}")
        return vocab

    def _encode_chunk(self, chunk: str) -> Tuple[int, ...]:
        cached = self._cache.get(chunk)
        if cached is not None:
            return cached
        ids = [BYTE_OFFSET + b for b in chunk.encode("utf-8")]
        while len(ids) > 1:
            best = None
            for i in range(len(ids) - 1):
                merged = self.ranks.get((ids[i], ids[i + 1]))
                if merged is not None and (best is None or merged < best[0]):
                    best = (merged, i)
            if best is None:
                break
            merged, i = best
            ids[i:i + 2] = [merged]
        result = tuple(ids)
        self._cache[chunk] = result
        return result

    def encode(self, text: str) -> TokenSequence:
        ids: List[int] = []
        for chunk in _chunks(text):
            if chunk == PLACEHOLDER:
                ids.append(PLACEHOLDER_ID)
            else:
                ids.extend(self._encode_chunk(chunk))
        return TokenSequence(ids=tuple(ids), text_hash=text_digest(text))

    def decode(self, ids: Union[TokenSequence, Iterable[int]], skip_special: bool = False) -> str:
        """
        Reconstruye el texto.

        PAD/BOS/EOS se omiten siempre; el resto de especiales se escriben con su
        forma textual salvo que ``skip_special`` sea True.
        """
        if isinstance(ids, TokenSequence):
            ids = ids.ids
        out = bytearray()
        for token_id in ids:
            if token_id in (PAD_ID, BOS_ID, EOS_ID):
                continue
            if token_id < BYTE_OFFSET and skip_special:
                continue
            if 0 <= token_id < len(self.id_to_token):
                out.extend(self.id_to_token[token_id])
            else:
                out.extend(SPECIAL_TOKENS[UNK_ID].encode("utf-8"))
        return out.decode("utf-8", errors="replace")


def encode(text: str, vocab: Vocabulary) -> TokenSequence:
    return vocab.encode(text)


def decode(seq: Union[TokenSequence, Iterable[int]], vocab: Vocabulary) -> str:
    return vocab.decode(seq)


def train_vocab(corpus: Iterable[str], vocab_size: int) -> Vocabulary:
    """
    Entrena las fusiones BPE de forma determinista.

    En cada paso se fusiona el par más frecuente; los empates se deciden por el
    orden lexicográfico de los bytes del par. Se para al llegar a ``vocab_size``
    o cuando ningún par aparece al menos dos veces.

    Args:
        corpus (Iterable[str]): Textos de entrenamiento.
        vocab_size (int): Tamaño máximo del vocabulario, especiales incluidos.

    Returns:
        Vocabulary: Vocabulario entrenado.

    Raises:
        ConfigError: Si ``vocab_size`` es menor que 256 + especiales.
        EmptyCorpus: Si el corpus no contiene texto.
    """
    if vocab_size < MIN_VOCAB_SIZE:
        raise ConfigError(f"vocab_size debe ser al menos {MIN_VOCAB_SIZE} (recibido {vocab_size})")

    chunk_counts: Counter = Counter()
    for text in corpus:
        for chunk in _chunks(text):
            if chunk != PLACEHOLDER:
                chunk_counts[chunk] += 1
    if not chunk_counts:
        raise EmptyCorpus("El corpus de entrenamiento del vocabulario está vacío")

    tokens: List[bytes] = [s.encode("utf-8") for s in SPECIAL_TOKENS] + [bytes([b]) for b in range(256)]
    words: List[List[int]] = []
    freqs: List[int] = []
    for chunk, count in sorted(chunk_counts.items()):
        words.append([BYTE_OFFSET + b for b in chunk.encode("utf-8")])
        freqs.append(count)

    pair_counts: Dict[Tuple[int, int], int] = defaultdict(int)
    pair_words: Dict[Tuple[int, int], set] = defaultdict(set)
    for w, word in enumerate(words):
        for pair in zip(word, word[1:]):
            pair_counts[pair] += freqs[w]
            pair_words[pair].add(w)

    def entry(pair: Tuple[int, int]) -> tuple:
        return (-pair_counts[pair], tokens[pair[0]], tokens[pair[1]], pair)

    heap = [entry(pair) for pair in pair_counts]
    heapq.heapify(heap)

    merges: List[Tuple[int, int]] = []
    while len(tokens) < vocab_size and heap:
        neg_count, _, _, pair = heapq.heappop(heap)
        current = pair_counts.get(pair, 0)
        if current != -neg_count:
            # Entrada obsoleta; la actual ya está en el montículo
            continue
        if current < 2:
            break

        new_id = len(tokens)
        tokens.append(tokens[pair[0]] + tokens[pair[1]])
        merges.append(pair)

        touched = set()
        for w in sorted(pair_words.pop(pair, ())):
            word = words[w]
            freq = freqs[w]
            for old in zip(word, word[1:]):
                pair_counts[old] -= freq
                touched.add(old)
            merged_word = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and (word[i], word[i + 1]) == pair:
                    merged_word.append(new_id)
                    i += 2
                else:
                    merged_word.append(word[i])
                    i += 1
            words[w] = merged_word
            for new in zip(merged_word, merged_word[1:]):
                pair_counts[new] += freq
                pair_words[new].add(w)
                touched.add(new)

        for changed in touched:
            if pair_counts.get(changed, 0) <= 0:
                pair_counts.pop(changed, None)
                pair_words.pop(changed, None)
            elif changed != pair:
                heapq.heappush(heap, entry(changed))
        pair_counts.pop(pair, None)

    logger.info(f"Vocabulario entrenado: {len(tokens)} tokens, {len(merges)} fusiones")
    return Vocabulary(merges)
