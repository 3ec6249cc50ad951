"""
Generación de asserts por beam search.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from core.checkpoint import load_checkpoint
from core.java_parser import normalize_assert
from core.model import AssertTransformer, source_ids
from core.tokenizer import BOS_ID, EOS_ID, PAD_ID, PLACEHOLDER_ID, Vocabulary
from utils.errors import ConfigError, NoFinishedHypothesis
from utils.logging_config import setup_logger

logger = setup_logger("generator", "generator.log")

BANNED_IDS = (PAD_ID, BOS_ID, PLACEHOLDER_ID)


class GenerationConfig(BaseModel):
    beam_width: int = Field(default=50, ge=1)
    k: int = Field(default=50, ge=1)
    max_decode_len: int = Field(default=64, ge=1)
    length_penalty: float = Field(default=0.6, ge=0.0)
    banned_ids: Tuple[int, ...] = BANNED_IDS

    @model_validator(mode="after")
    def _check_k(self) -> "GenerationConfig":
        if self.k > self.beam_width:
            raise ConfigError(f"k ({self.k}) no puede superar beam_width ({self.beam_width})")
        return self


@dataclass(frozen=True)
class BeamHypothesis:
    """Hipótesis del beam; ``ids`` empieza por BOS y, si está terminada, acaba en EOS."""
    ids: Tuple[int, ...]
    logprob: float
    normalized_score: float
    finished: bool = True

    @property
    def generated(self) -> Tuple[int, ...]:
        return self.ids[1:]


def _normalize(logprob: float, length: int, alpha: float) -> float:
    return logprob / (max(length, 1) ** alpha)


def _rank_key(h: BeamHypothesis):
    return (-h.normalized_score, h.ids)


def _beam_settled(alive, finished: List[BeamHypothesis], max_steps: int, cfg: GenerationConfig) -> bool:
    """
    True si ninguna hipótesis viva puede superar ya a las ``beam_width`` mejores terminadas.

    La log-probabilidad sólo decrece al alargar una hipótesis, así que su mejor
    puntuación normalizada posible es la actual dividida por la longitud máxima.
    """
    if len(finished) < cfg.beam_width:
        return False
    threshold = sorted(h.normalized_score for h in finished)[-cfg.beam_width]
    best_alive = max(_normalize(score, max_steps, cfg.length_penalty) for _, score in alive)
    return best_alive < threshold


def beam_search(
    model: AssertTransformer,
    src: Sequence[int],
    cfg: GenerationConfig,
    strict: bool = False,
) -> List[BeamHypothesis]:
    """
    Beam search sobre una fuente.

    En cada paso se expanden todas las hipótesis vivas, se conservan las
    ``beam_width`` mejores por log-probabilidad (empates por orden lexicográfico
    de tokens) y las que emiten EOS pasan a terminadas. La longitud cuenta los
    tokens generados, EOS incluido.

    Args:
        model (AssertTransformer): Modelo entrenado.
        src (Sequence[int]): Ids de la fuente, ya terminados en EOS.
        cfg (GenerationConfig): Parámetros de decodificación.
        strict (bool): Si es True, la ausencia de hipótesis terminadas es un error.

    Returns:
        List[BeamHypothesis]: Hasta ``beam_width`` hipótesis ordenadas por ``normalized_score``.
        Si ninguna termina, las mejores vivas marcadas con ``finished=False``.

    Raises:
        NoFinishedHypothesis: Sólo con ``strict``.
    """
    max_steps = min(cfg.max_decode_len, model.config.max_len - 1)
    model.eval()
    with torch.no_grad():
        memory, src_pad = model.encode(torch.tensor([list(src)], dtype=torch.long))
        alive: List[Tuple[Tuple[int, ...], float]] = [((BOS_ID,), 0.0)]
        finished: List[BeamHypothesis] = []

        for _ in range(max_steps):
            if not alive or _beam_settled(alive, finished, max_steps, cfg):
                break
            prefixes = torch.tensor([ids for ids, _ in alive], dtype=torch.long)
            n = prefixes.size(0)
            logits = model.decode(prefixes, memory.expand(n, -1, -1), src_pad.expand(n, -1))
            logp = F.log_softmax(logits[:, -1, :].double(), dim=-1)
            logp[:, list(cfg.banned_ids)] = float("-inf")

            width = min(cfg.beam_width, logp.size(-1))
            top_logp, top_ids = logp.topk(width, dim=-1)
            candidates = []
            for row, (ids, score) in enumerate(alive):
                for value, token in zip(top_logp[row].tolist(), top_ids[row].tolist()):
                    if value == float("-inf"):
                        continue
                    candidates.append((score + value, ids + (token,)))
            candidates.sort(key=lambda c: (-c[0], c[1]))

            alive = []
            for score, ids in candidates[:cfg.beam_width]:
                if ids[-1] == EOS_ID:
                    finished.append(BeamHypothesis(ids, score, _normalize(score, len(ids) - 1, cfg.length_penalty)))
                else:
                    alive.append((ids, score))

    if finished:
        return sorted(finished, key=_rank_key)[:cfg.beam_width]

    unfinished = sorted(
        (BeamHypothesis(ids, score, _normalize(score, len(ids) - 1, cfg.length_penalty), finished=False)
         for ids, score in alive),
        key=_rank_key,
    )
    if strict:
        raise NoFinishedHypothesis(f"Ninguna hipótesis terminó en {max_steps} tokens", unfinished)
    logger.warning(f"Ninguna hipótesis terminó en {max_steps} tokens; se devuelven {len(unfinished)} sin terminar")
    return unfinished


def generate_top_k(
    model: AssertTransformer,
    source_text: str,
    vocab: Vocabulary,
    cfg: GenerationConfig,
) -> List[str]:
    """
    Las ``k`` mejores predicciones como texto normalizado, sin duplicados.

    Cuando dos hipótesis se detokenizan al mismo texto se conserva la de mejor
    puntuación; puede devolver menos de ``k`` cadenas.
    """
    src = source_ids(vocab.encode(source_text).ids, model.config.max_len)
    seen = set()
    out: List[str] = []
    for hypothesis in beam_search(model, src, cfg):
        text = normalize_assert(vocab.decode(hypothesis.generated, skip_special=True))
        if text in seen:
            continue
        seen.add(text)
        out.append(text)
        if len(out) == cfg.k:
            break
    return out


class AssertGenerator:
    """
    Sirve predicciones de asserts a partir de un modelo y su vocabulario.
    """

    def __init__(self, model: AssertTransformer, vocab: Vocabulary, cfg: Optional[GenerationConfig] = None):
        self.model = model.eval()
        self.vocab = vocab
        self.cfg = cfg or GenerationConfig()

    @classmethod
    def from_checkpoint(cls, checkpoint_dir: str, vocab: Vocabulary, cfg: Optional[GenerationConfig] = None) -> "AssertGenerator":
        checkpoint = load_checkpoint(checkpoint_dir, vocab.digest)
        return cls(checkpoint.model, vocab, cfg)

    def generate(self, source_text: str) -> List[str]:
        return generate_top_k(self.model, source_text, self.vocab, self.cfg)

    def generate_many(self, sources: Iterable[str], jobs: int = 1) -> List[List[str]]:
        """Predicciones para varias fuentes en el orden de entrada."""
        sources = list(sources)
        logger.info(f"Generando top-{self.cfg.k} para {len(sources)} fuentes (beam {self.cfg.beam_width})")
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(self.generate, sources))
        return [self.generate(source) for source in sources]

    def generate_records(self, records: Iterable[Dict], jobs: int = 1) -> List[Dict]:
        """Añade ``candidates`` a cada registro con clave ``source``."""
        records = list(records)
        candidates = self.generate_many((r["source"] for r in records), jobs=jobs)
        return [{**record, "candidates": c} for record, c in zip(records, candidates)]
