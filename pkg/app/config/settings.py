"""
Configuración de la aplicación.
Carga variables de entorno y ficheros de configuración planos (clave=valor).
"""
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from utils.errors import ConfigError

load_dotenv()

TOOL_VERSION = "0.1.0"


class Settings(BaseSettings):
    """Configuración centralizada de la aplicación usando Pydantic."""
    model_config = SettingsConfigDict(
        env_prefix="ASSERT_FORGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field(default="INFO")
    log_dir: str = Field(default="./logs")
    progress: bool = Field(default=False)

    seed: int = Field(default=0)
    jobs: int = Field(default=1)
    float64: bool = Field(default=False)

    # Vocabulario
    vocab_size: int = Field(default=8192)
    max_len: int = Field(default=512)

    # Modelo de escritorio
    enc_layers: int = Field(default=2)
    dec_layers: int = Field(default=2)
    d_model: int = Field(default=64)
    n_heads: int = Field(default=4)
    d_ff: int = Field(default=256)
    dropout: float = Field(default=0.1)

    # Optimizador
    base_lr: float = Field(default=1e-4)
    warmup_steps: int = Field(default=100)
    accum_freq: int = Field(default=4)
    batch_size: int = Field(default=16)
    max_epochs: int = Field(default=50)
    patience: int = Field(default=5)

    # Generación
    beam_width: int = Field(default=50)
    top_k: int = Field(default=50)
    max_decode_len: int = Field(default=64)
    length_penalty: float = Field(default=0.6)


settings = Settings()


def load_run_config(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Combina la configuración de una ejecución.

    Prioridad: flags de la CLI > fichero clave=valor > ``settings``.

    Args:
        path (str, optional): Fichero de configuración plano.
        overrides (Dict[str, Any], optional): Valores de la línea de comandos (``None`` se ignora).

    Returns:
        Dict[str, Any]: Configuración plana resuelta.
    """
    resolved: Dict[str, Any] = settings.model_dump()

    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"No existe el fichero de configuración: {path}")
        for key, value in dotenv_values(config_path).items():
            if value is None:
                raise ConfigError(f"Clave sin valor en {path}: {key}")
            resolved[key.strip().lower().replace("-", "_")] = value

    for key, value in (overrides or {}).items():
        if value is not None:
            resolved[key] = value

    return resolved


def typed_config(model_cls, values: Dict[str, Any]):
    """
    Construye un modelo pydantic de configuración a partir de un diccionario plano.

    Sólo se usan las claves que el modelo declara; los errores de validación se
    convierten en ``ConfigError``.
    """
    fields = {k: v for k, v in values.items() if k in model_cls.model_fields}
    try:
        return model_cls(**fields)
    except ValidationError as e:
        raise ConfigError(f"Configuración inválida para {model_cls.__name__}: {e}") from e
