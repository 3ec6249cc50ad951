"""
Transformer codificador-decodificador para la traducción test -> assert.

Capas post-norm de ``torch.nn`` con GeLU exacta, embeddings posicionales
aprendidos y embedding de vocabulario compartido entre codificador,
decodificador y proyección de salida.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator
from torch import nn

from core.tokenizer import BOS_ID, EOS_ID, PAD_ID
from utils.errors import ConfigError, EmptyTargetError, NonFiniteGradient, ShapeError
from utils.logging_config import setup_logger

logger = setup_logger("model", "model.log")


class ModelConfig(BaseModel):
    """Dimensiones del modelo; los valores por defecto son de escritorio."""
    vocab_size: int = Field(gt=0)
    max_len: int = Field(default=512, gt=1)
    enc_layers: int = Field(default=2, ge=1)
    dec_layers: int = Field(default=2, ge=1)
    d_model: int = Field(default=64, gt=0)
    n_heads: int = Field(default=4, gt=0)
    d_ff: int = Field(default=256, gt=0)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    tie_embeddings: bool = True

    @model_validator(mode="after")
    def _check_heads(self) -> "ModelConfig":
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model ({self.d_model}) debe ser divisible por n_heads ({self.n_heads})")
        return self


@dataclass
class Batch:
    """Lote ya rellenado con PAD: fuente, entrada del decodificador y etiquetas."""
    src: torch.Tensor
    tgt_in: torch.Tensor
    labels: torch.Tensor

    @property
    def n_tokens(self) -> int:
        return int((self.labels != PAD_ID).sum())

    def __len__(self) -> int:
        return self.src.size(0)


def source_ids(ids: Sequence[int], max_len: int) -> List[int]:
    """Fuente truncada a ``max_len - 1`` más EOS."""
    return list(ids[:max_len - 1]) + [EOS_ID]


def target_ids(ids: Sequence[int], max_len: int) -> Tuple[List[int], List[int]]:
    """Entrada del decodificador ``[BOS] + tgt`` y etiquetas ``tgt + [EOS]``."""
    body = list(ids[:max_len - 1])
    return [BOS_ID] + body, body + [EOS_ID]


def _pad(rows: Sequence[Sequence[int]]) -> torch.Tensor:
    width = max(len(r) for r in rows)
    out = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    for i, row in enumerate(rows):
        out[i, :len(row)] = torch.tensor(row, dtype=torch.long)
    return out


def collate(pairs: Sequence[Tuple[Sequence[int], Sequence[int]]], max_len: int) -> Batch:
    """Convierte pares (ids fuente, ids objetivo) en un ``Batch``."""
    srcs, tgt_ins, labels = [], [], []
    for src, tgt in pairs:
        srcs.append(source_ids(src, max_len))
        tgt_in, label = target_ids(tgt, max_len)
        tgt_ins.append(tgt_in)
        labels.append(label)
    return Batch(src=_pad(srcs), tgt_in=_pad(tgt_ins), labels=_pad(labels))


def causal_mask(length: int, device=None) -> torch.Tensor:
    """True donde la atención está prohibida (posiciones futuras)."""
    return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)


class AssertTransformer(nn.Module):
    """
    Modelo seq2seq. ``forward(src, tgt_in)`` devuelve logits ``batch x tgt_len x vocab``.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model

        self.shared = nn.Embedding(config.vocab_size, d, padding_idx=PAD_ID)
        if not config.tie_embeddings:
            self.dec_embed = nn.Embedding(config.vocab_size, d, padding_idx=PAD_ID)
            self.out_proj = nn.Linear(d, config.vocab_size, bias=False)
        self.enc_pos = nn.Embedding(config.max_len, d)
        self.dec_pos = nn.Embedding(config.max_len, d)
        self.enc_norm = nn.LayerNorm(d)
        self.dec_norm = nn.LayerNorm(d)
        self.dropout = nn.Dropout(config.dropout)

        enc_layer = nn.TransformerEncoderLayer(
            d, config.n_heads, config.d_ff, config.dropout,
            activation="gelu", batch_first=True, norm_first=False,
        )
        dec_layer = nn.TransformerDecoderLayer(
            d, config.n_heads, config.d_ff, config.dropout,
            activation="gelu", batch_first=True, norm_first=False,
        )
        self.encoder = nn.TransformerEncoder(enc_layer, config.enc_layers, enable_nested_tensor=False)
        self.decoder = nn.TransformerDecoder(dec_layer, config.dec_layers)

        self._reset_parameters()

    def _reset_parameters(self) -> None:
        for p in self.parameters():
            if p.dim() > 1:
                nn.init.normal_(p, mean=0.0, std=0.02)
        with torch.no_grad():
            self.shared.weight[PAD_ID].zero_()
            if not self.config.tie_embeddings:
                self.dec_embed.weight[PAD_ID].zero_()

    def untie_from(self, tied: "AssertTransformer") -> None:
        """Copia los pesos de un modelo atado repitiendo el embedding en los tres puntos de uso."""
        state = tied.state_dict()
        state["dec_embed.weight"] = state["shared.weight"].clone()
        state["out_proj.weight"] = state["shared.weight"].clone()
        self.load_state_dict(state)

    def _check_ids(self, ids: torch.Tensor, what: str) -> None:
        if ids.dim() != 2:
            raise ShapeError(f"{what}: se esperaba un tensor batch x longitud, recibido {tuple(ids.shape)}")
        if ids.size(1) > self.config.max_len:
            raise ShapeError(f"{what}: longitud {ids.size(1)} > max_len {self.config.max_len}")
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.config.vocab_size):
            raise ShapeError(f"{what}: id de token fuera del vocabulario ({self.config.vocab_size})")

    def _embed(self, ids: torch.Tensor, table: nn.Embedding, pos: nn.Embedding, norm: nn.LayerNorm) -> torch.Tensor:
        positions = torch.arange(ids.size(1), device=ids.device)
        return self.dropout(norm(table(ids) + pos(positions)))

    def encode(self, src: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Memoria del codificador y máscara de PAD de la fuente."""
        self._check_ids(src, "src")
        src_pad = src == PAD_ID
        memory = self.encoder(self._embed(src, self.shared, self.enc_pos, self.enc_norm), src_key_padding_mask=src_pad)
        return memory, src_pad

    def decode(self, tgt_in: torch.Tensor, memory: torch.Tensor, src_pad: torch.Tensor) -> torch.Tensor:
        self._check_ids(tgt_in, "tgt")
        if tgt_in.size(0) != memory.size(0):
            raise ShapeError(f"Lotes incompatibles: tgt {tgt_in.size(0)} vs src {memory.size(0)}")
        table = self.shared if self.config.tie_embeddings else self.dec_embed
        hidden = self.decoder(
            self._embed(tgt_in, table, self.dec_pos, self.dec_norm),
            memory,
            tgt_mask=causal_mask(tgt_in.size(1), tgt_in.device),
            tgt_key_padding_mask=tgt_in == PAD_ID,
            memory_key_padding_mask=src_pad,
        )
        if self.config.tie_embeddings:
            return F.linear(hidden, self.shared.weight)
        return self.out_proj(hidden)

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        memory, src_pad = self.encode(src)
        return self.decode(tgt_in, memory, src_pad)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig, seed: int = 0, float64: bool = False) -> AssertTransformer:
    """Instancia el modelo con inicialización reproducible."""
    generator_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    model = AssertTransformer(config)
    torch.random.set_rng_state(generator_state)
    if float64:
        model = model.double()
    logger.info(f"Modelo creado: {model.num_parameters():,} parámetros ({'float64' if float64 else 'float32'})")
    return model


def token_loss(logits: torch.Tensor, labels: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """
    Entropía cruzada por token sobre las posiciones que no son PAD.

    Args:
        logits (torch.Tensor): ``batch x len x vocab``.
        labels (torch.Tensor): ``batch x len``.
        reduction (str): ``mean`` o ``sum``.

    Raises:
        ShapeError: Si las formas no concuerdan.
        EmptyTargetError: Si todas las etiquetas son PAD.
    """
    if logits.shape[:2] != labels.shape:
        raise ShapeError(f"Logits {tuple(logits.shape)} y etiquetas {tuple(labels.shape)} incompatibles")
    if not bool((labels != PAD_ID).any()):
        raise EmptyTargetError("El objetivo sólo contiene PAD")
    return F.cross_entropy(
        logits.reshape(-1, logits.size(-1)),
        labels.reshape(-1),
        ignore_index=PAD_ID,
        reduction=reduction,
    )


def check_finite_gradients(model: nn.Module) -> None:
    for name, p in model.named_parameters():
        if p.grad is not None and not bool(torch.isfinite(p.grad).all()):
            raise NonFiniteGradient(f"Gradiente no finito en {name}")


def compute_gradients(model: AssertTransformer, batch: Batch) -> Dict[str, torch.Tensor]:
    """
    Gradientes exactos (modo inverso) de la pérdida media de un lote.

    Returns:
        Dict[str, torch.Tensor]: Gradiente por nombre de parámetro; cero si el parámetro no interviene.
    """
    model.zero_grad(set_to_none=True)
    loss = token_loss(model(batch.src, batch.tgt_in), batch.labels)
    loss.backward()
    check_finite_gradients(model)
    return {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }


def sequence_logprob(model: AssertTransformer, src: Sequence[int], generated: Sequence[int]) -> float:
    """Log-probabilidad exacta de ``generated`` (sin BOS) dada la fuente, con el objetivo como entrada del decodificador."""
    model.eval()
    with torch.no_grad():
        src_t = torch.tensor([list(src)], dtype=torch.long)
        tgt_in = torch.tensor([[BOS_ID] + list(generated[:-1])], dtype=torch.long)
        logp = F.log_softmax(model(src_t, tgt_in)[0].double(), dim=-1)
        return float(sum(logp[i, token] for i, token in enumerate(generated)))


def perplexity(loss: float) -> float:
    return math.exp(min(loss, 50.0))
