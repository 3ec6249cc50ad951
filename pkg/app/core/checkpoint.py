"""
Lectura y escritura de checkpoints.

Un checkpoint es un directorio con:

- ``manifest.txt``: pares ``clave=valor`` (configuración del modelo, huella del
  vocabulario, paso del optimizador, cadena de preentrenamiento, ...).
- ``index.json``: nombre de tensor -> forma, tipo y fichero.
- Un ``.bin`` por tensor, IEEE-754 little-endian en orden row-major (float32, o
  float64 si el modelo está en modo 64 bits). Los momentos de Adam se guardan
  como tensores adicionales con prefijo ``adam.exp_avg.`` / ``adam.exp_avg_sq.``.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch
from dotenv import dotenv_values

from config.settings import TOOL_VERSION
from core.model import AssertTransformer, ModelConfig
from utils.errors import CheckpointError
from utils.logging_config import setup_logger

logger = setup_logger("checkpoint", "checkpoint.log")

MANIFEST_FILE = "manifest.txt"
INDEX_FILE = "index.json"
EXP_AVG = "adam.exp_avg."
EXP_AVG_SQ = "adam.exp_avg_sq."

_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}


@dataclass
class Checkpoint:
    model: AssertTransformer
    manifest: Dict[str, str]
    step: int = 0
    moments: Dict[str, Dict[str, torch.Tensor]] = field(default_factory=dict)

    @property
    def chain(self) -> str:
        return self.manifest.get("chain", "")

    @property
    def vocab_digest(self) -> str:
        return self.manifest.get("vocab_digest", "")


def _write_tensor(directory: Path, name: str, tensor: torch.Tensor, index: Dict[str, Any]) -> None:
    array = tensor.detach().cpu().contiguous().numpy()
    dtype = _DTYPES.get(tensor.dtype)
    if dtype is None:
        raise CheckpointError(f"Tipo de tensor no soportado en {name}: {tensor.dtype}")
    file_name = f"{name}.bin"
    array.astype(dtype).tofile(directory / file_name)
    index[name] = {"shape": list(array.shape), "dtype": dtype, "file": file_name}


def _read_tensor(directory: Path, name: str, entry: Dict[str, Any]) -> torch.Tensor:
    path = directory / entry["file"]
    if not path.is_file():
        raise CheckpointError(f"Falta el blob {entry['file']} en {directory}")
    array = np.fromfile(path, dtype=entry["dtype"])
    expected = int(np.prod(entry["shape"])) if entry["shape"] else 1
    if array.size != expected:
        raise CheckpointError(f"Blob truncado para {name}: {array.size} valores, se esperaban {expected}")
    return torch.from_numpy(array.reshape(entry["shape"]).astype(entry["dtype"][1:]))


def save_checkpoint(
    directory: str,
    model: AssertTransformer,
    vocab_digest: str,
    optimizer: Optional[torch.optim.Optimizer] = None,
    step: int = 0,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Guarda parámetros, estado de Adam y manifiesto.

    Args:
        directory (str): Directorio destino; se sobrescriben los ficheros existentes.
        model (AssertTransformer): Modelo a guardar.
        vocab_digest (str): Huella del vocabulario con el que se entrenó.
        optimizer (torch.optim.Optimizer, optional): Optimizador cuyos momentos se guardan.
        step (int): Paso actual del optimizador.
        extra (Dict[str, Any], optional): Claves adicionales del manifiesto (cadena, época, pérdida).

    Returns:
        Path: Directorio del checkpoint.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    index: Dict[str, Any] = {}

    names = {}
    for name, param in model.named_parameters():
        _write_tensor(out, name, param, index)
        names[param] = name

    if optimizer is not None:
        for param, state in optimizer.state.items():
            name = names.get(param)
            if name is None or "exp_avg" not in state:
                continue
            _write_tensor(out, EXP_AVG + name, state["exp_avg"], index)
            _write_tensor(out, EXP_AVG_SQ + name, state["exp_avg_sq"], index)

    (out / INDEX_FILE).write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")

    manifest: Dict[str, Any] = {f"model_{k}": v for k, v in model.config.model_dump().items()}
    manifest.update({
        "vocab_digest": vocab_digest,
        "step": step,
        "dtype": "float64" if next(model.parameters()).dtype == torch.float64 else "float32",
        "tool_version": TOOL_VERSION,
    })
    manifest.update(extra or {})
    lines = [f"{key}={value}" for key, value in sorted(manifest.items())]
    (out / MANIFEST_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Checkpoint guardado en {out} (paso {step})")
    return out


def read_manifest(directory: str) -> Dict[str, str]:
    path = Path(directory) / MANIFEST_FILE
    if not path.is_file():
        raise CheckpointError(f"No es un checkpoint (falta {MANIFEST_FILE}): {directory}")
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


def load_checkpoint(directory: str, vocab_digest: Optional[str] = None) -> Checkpoint:
    """
    Carga un checkpoint completo.

    Args:
        directory (str): Directorio del checkpoint.
        vocab_digest (str, optional): Si se indica, debe coincidir con la huella guardada.

    Returns:
        Checkpoint: Modelo reconstruido, manifiesto, paso y momentos de Adam por parámetro.

    Raises:
        CheckpointError: Ficheros ausentes, blobs truncados, formas distintas o vocabulario incompatible.
    """
    source = Path(directory)
    manifest = read_manifest(directory)
    if vocab_digest is not None and manifest.get("vocab_digest") != vocab_digest:
        raise CheckpointError(f"El checkpoint {directory} se entrenó con otro vocabulario")

    index_path = source / INDEX_FILE
    if not index_path.is_file():
        raise CheckpointError(f"Falta {INDEX_FILE} en {directory}")
    index = json.loads(index_path.read_text(encoding="utf-8"))

    config_values = {k[len("model_"):]: v for k, v in manifest.items() if k.startswith("model_")}
    try:
        config = ModelConfig(**config_values)
    except Exception as e:
        raise CheckpointError(f"Configuración de modelo inválida en {directory}: {e}") from e

    model = AssertTransformer(config)
    if manifest.get("dtype") == "float64":
        model = model.double()

    state = {}
    for name, param in model.named_parameters():
        if name not in index:
            raise CheckpointError(f"Falta el tensor {name} en {directory}")
        tensor = _read_tensor(source, name, index[name])
        if tuple(tensor.shape) != tuple(param.shape):
            raise CheckpointError(f"Forma distinta para {name}: {tuple(tensor.shape)} vs {tuple(param.shape)}")
        state[name] = tensor
    model.load_state_dict(state)

    moments = {}
    for name, _ in model.named_parameters():
        if EXP_AVG + name in index:
            moments[name] = {
                "exp_avg": _read_tensor(source, EXP_AVG + name, index[EXP_AVG + name]),
                "exp_avg_sq": _read_tensor(source, EXP_AVG_SQ + name, index[EXP_AVG_SQ + name]),
            }

    step = int(manifest.get("step", 0))
    logger.info(f"Checkpoint cargado de {directory} (paso {step}, cadena '{manifest.get('chain', '')}')")
    return Checkpoint(model=model, manifest=manifest, step=step, moments=moments)
