"""
Entrenamiento del transformer: Adam con calendario de raíz cuadrada inversa,
acumulación de gradientes, parada temprana por pérdida de validación y
checkpoints.
"""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field
from torch import optim
from tqdm import tqdm

from config.settings import settings
from core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from core.model import AssertTransformer, Batch, check_finite_gradients, collate, token_loss
from utils.errors import EmptyCorpus, NonFiniteUpdate
from utils.logging_config import setup_logger

logger = setup_logger("trainer", "trainer.log")

Pair = Tuple[Sequence[int], Sequence[int]]

BEST_DIR = "checkpoint_best"
LAST_DIR = "checkpoint_last"
LOSS_CURVE = "loss_curve.csv"


class OptimizerConfig(BaseModel):
    """Hiperparámetros de Adam y del calendario de aprendizaje."""
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.98, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-6, gt=0.0)
    base_lr: float = Field(default=1e-4, gt=0.0)
    warmup_steps: int = Field(default=100, ge=1)
    accum_freq: int = Field(default=4, ge=1)
    patience: int = Field(default=5, ge=0)


class TrainingConfig(BaseModel):
    batch_size: int = Field(default=16, ge=1)
    max_epochs: int = Field(default=50, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1)
    max_len: int = Field(default=512, gt=1)
    seed: int = 0
    float64: bool = False
    progress: bool = False


def lr_at(step: int, cfg: OptimizerConfig) -> float:
    """Calentamiento lineal hasta ``warmup_steps`` y decaimiento ``base_lr * sqrt(warmup / step)`` después."""
    step = max(1, step)
    if step <= cfg.warmup_steps:
        return cfg.base_lr * step / cfg.warmup_steps
    return cfg.base_lr * math.sqrt(cfg.warmup_steps / step)


class AdamInverseSqrtWithWarmup(optim.Adam):
    """
    Adam cuyo learning rate sigue ``lr_at``.

    El lr se fija antes de cada actualización, de modo que el paso ``n`` usa
    ``lr_at(n)``.
    """

    def __init__(self, params, cfg: OptimizerConfig):
        super().__init__(
            params,
            lr=lr_at(1, cfg),
            betas=(cfg.beta1, cfg.beta2),
            eps=cfg.epsilon,
            weight_decay=0,
        )
        self.cfg = cfg
        self.num_updates = 0

    def step(self, closure=None):
        new_lr = lr_at(self.num_updates + 1, self.cfg)
        for param_group in self.param_groups:
            param_group["lr"] = new_lr
        loss = super().step(closure)
        self.num_updates += 1
        return loss

    def restore(self, named_params: Iterable[Tuple[str, torch.nn.Parameter]], moments, step: int) -> None:
        """Restaura los momentos guardados en un checkpoint y el contador de pasos."""
        for name, param in named_params:
            saved = moments.get(name)
            if saved is None:
                continue
            self.state[param] = {
                "step": torch.tensor(float(step)),
                "exp_avg": saved["exp_avg"].to(param.dtype).clone(),
                "exp_avg_sq": saved["exp_avg_sq"].to(param.dtype).clone(),
            }
        self.num_updates = step


def adam_step(
    params: Sequence[torch.nn.Parameter],
    grads: Sequence[Optional[torch.Tensor]],
    optimizer: AdamInverseSqrtWithWarmup,
) -> int:
    """
    Una actualización de Adam con corrección de sesgo y ``lr_at(paso)``.

    Returns:
        int: Número de pasos tras la actualización.

    Raises:
        NonFiniteUpdate: Si algún parámetro deja de ser finito.
    """
    for param, grad in zip(params, grads):
        param.grad = grad
    optimizer.step()
    for param in params:
        if not bool(torch.isfinite(param).all()):
            raise NonFiniteUpdate(f"Parámetro no finito tras el paso {optimizer.num_updates}")
    return optimizer.num_updates


def make_batches(pairs: Sequence[Pair], batch_size: int, max_len: int, seed: int, epoch: int) -> List[Batch]:
    """
    Lotes agrupados por longitud con barajado determinista por (semilla, época).

    Los pares se barajan, se ordenan de forma estable por longitud de fuente y
    objetivo, se cortan en lotes y se baraja el orden de los lotes.
    """
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(pairs))
    order = sorted(order, key=lambda i: (len(pairs[i][0]), len(pairs[i][1])))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    return [collate([pairs[i] for i in chunks[j]], max_len) for j in rng.permutation(len(chunks))]


def _grouped(items: Sequence, size: int) -> Iterator[Sequence]:
    for i in range(0, len(items), size):
        yield items[i:i + size]


@dataclass
class TrainResult:
    best_valid_loss: float
    best_epoch: int
    epochs_run: int
    steps: int
    train_losses: List[float] = field(default_factory=list)
    valid_losses: List[float] = field(default_factory=list)
    checkpoint_dir: Optional[str] = None


class Trainer:
    """
    Propietario único del modelo y del optimizador durante el entrenamiento.
    """

    def __init__(
        self,
        model: AssertTransformer,
        opt_cfg: OptimizerConfig,
        train_cfg: TrainingConfig,
        vocab_digest: str = "",
        chain: str = "",
    ):
        self.model = model.double() if train_cfg.float64 else model
        self.opt_cfg = opt_cfg
        self.train_cfg = train_cfg
        self.vocab_digest = vocab_digest
        self.chain = chain
        self.optimizer = AdamInverseSqrtWithWarmup(self.model.parameters(), opt_cfg)
        self.curve: List[Tuple[int, str, float]] = []

    @property
    def step(self) -> int:
        return self.optimizer.num_updates

    def optimizer_step(self, micro_batches: Sequence[Batch]) -> float:
        """
        Un paso del optimizador acumulando gradientes sobre ``micro_batches``.

        La pérdida se normaliza por el total de tokens no PAD del grupo, así que
        acumular equivale a un único lote grande.

        Returns:
            float: Pérdida media por token del grupo.
        """
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        total_tokens = sum(b.n_tokens for b in micro_batches)
        if total_tokens == 0:
            raise EmptyCorpus("Grupo de lotes sin tokens objetivo")
        total_loss = 0.0
        for batch in micro_batches:
            loss_sum = token_loss(self.model(batch.src, batch.tgt_in), batch.labels, reduction="sum")
            (loss_sum / total_tokens).backward()
            total_loss += float(loss_sum.detach())
        check_finite_gradients(self.model)
        params = [p for p in self.model.parameters()]
        adam_step(params, [p.grad for p in params], self.optimizer)
        return total_loss / total_tokens

    def evaluate_loss(self, pairs: Sequence[Pair]) -> float:
        """Pérdida media por token (sin dropout) sobre ``pairs``."""
        if not pairs:
            raise EmptyCorpus("Conjunto de validación vacío")
        self.model.eval()
        total, tokens = 0.0, 0
        with torch.no_grad():
            for batch in _grouped(list(pairs), self.train_cfg.batch_size):
                b = collate(batch, self.train_cfg.max_len)
                total += float(token_loss(self.model(b.src, b.tgt_in), b.labels, reduction="sum"))
                tokens += b.n_tokens
        return total / tokens

    def save(self, directory: str, extra: Optional[dict] = None) -> Path:
        info = {"chain": self.chain}
        info.update(extra or {})
        return save_checkpoint(directory, self.model, self.vocab_digest, self.optimizer, self.step, info)

    def resume(self, checkpoint: Checkpoint) -> None:
        """Continúa desde un checkpoint: parámetros, momentos de Adam y paso."""
        dtype = next(self.model.parameters()).dtype
        self.model.load_state_dict({k: v.to(dtype) for k, v in checkpoint.model.state_dict().items()})
        self.optimizer.restore(self.model.named_parameters(), checkpoint.moments, checkpoint.step)
        logger.info(f"Entrenamiento reanudado en el paso {checkpoint.step}")

    def write_curve(self, out_dir: str) -> Path:
        path = Path(out_dir) / LOSS_CURVE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "split", "loss"])
            writer.writerows((step, split, f"{loss:.6f}") for step, split, loss in self.curve)
        return path

    def train(self, train_pairs: Sequence[Pair], valid_pairs: Sequence[Pair], out_dir: Optional[str] = None) -> TrainResult:
        """
        Bucle de épocas con parada temprana.

        Se detiene tras ``patience`` épocas seguidas sin mejorar la pérdida de
        validación (con ``patience`` 0, tras la primera época), al llegar a
        ``max_epochs`` o a ``max_steps``. El mejor checkpoint se guarda en
        ``out_dir/checkpoint_best``.

        Args:
            train_pairs (Sequence[Pair]): Pares (ids fuente, ids objetivo) de entrenamiento.
            valid_pairs (Sequence[Pair]): Pares de validación.
            out_dir (str, optional): Directorio de salida de checkpoints y curva de pérdidas.

        Returns:
            TrainResult: Resumen del entrenamiento.
        """
        if not train_pairs:
            raise EmptyCorpus("Conjunto de entrenamiento vacío")
        cfg = self.train_cfg
        best_loss, best_epoch, stale = math.inf, 0, 0
        result = TrainResult(best_valid_loss=math.inf, best_epoch=0, epochs_run=0, steps=self.step)
        best_dir = str(Path(out_dir) / BEST_DIR) if out_dir else None

        for epoch in range(1, cfg.max_epochs + 1):
            batches = make_batches(train_pairs, cfg.batch_size, cfg.max_len, cfg.seed, epoch)
            groups = list(_grouped(batches, self.opt_cfg.accum_freq))
            progress = tqdm(groups, desc=f"Época {epoch}", disable=not (cfg.progress or settings.progress))
            epoch_losses = []
            for group in progress:
                loss = self.optimizer_step(group)
                epoch_losses.append(loss)
                self.curve.append((self.step, "train", loss))
                progress.set_postfix(loss=f"{loss:.4f}")
                if cfg.max_steps and self.step >= cfg.max_steps:
                    break

            train_loss = float(np.mean(epoch_losses))
            valid_loss = self.evaluate_loss(valid_pairs)
            self.curve.append((self.step, "valid", valid_loss))
            result.train_losses.append(train_loss)
            result.valid_losses.append(valid_loss)
            result.epochs_run = epoch
            logger.info(f"Época {epoch}: train={train_loss:.4f} valid={valid_loss:.4f} paso={self.step}")

            if valid_loss < best_loss:
                best_loss, best_epoch, stale = valid_loss, epoch, 0
                if best_dir:
                    self.save(best_dir, {"epoch": epoch, "valid_loss": f"{valid_loss:.6f}"})
            else:
                stale += 1

            if stale >= self.opt_cfg.patience:
                logger.info(f"Parada temprana tras {stale} épocas sin mejora (mejor época {best_epoch})")
                break
            if cfg.max_steps and self.step >= cfg.max_steps:
                break

        result.best_valid_loss = best_loss
        result.best_epoch = best_epoch
        result.steps = self.step
        if out_dir:
            self.save(str(Path(out_dir) / LAST_DIR), {"epoch": result.epochs_run})
            self.write_curve(out_dir)
            result.checkpoint_dir = best_dir
        return result


def resume_trainer(
    checkpoint_dir: str,
    opt_cfg: OptimizerConfig,
    train_cfg: TrainingConfig,
    vocab_digest: Optional[str] = None,
) -> Trainer:
    """Crea un ``Trainer`` a partir de un checkpoint guardado."""
    checkpoint = load_checkpoint(checkpoint_dir, vocab_digest)
    trainer = Trainer(
        checkpoint.model,
        opt_cfg,
        train_cfg,
        vocab_digest=checkpoint.vocab_digest,
        chain=checkpoint.chain,
    )
    trainer.resume(checkpoint)
    return trainer
