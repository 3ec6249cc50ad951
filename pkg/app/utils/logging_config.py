"""
Configuración del sistema de logging.
"""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from config.settings import settings


def setup_logger(name: str, log_file: Optional[str] = None) -> logging.Logger:
    """
    Configura y devuelve un logger con handlers para consola y archivo.

    Args:
        name (str): Nombre del logger.
        log_file (str, optional): Nombre del archivo de log dentro de ``settings.log_dir``.

    Returns:
        logging.Logger: Logger configurado.
    """
    logger = logging.getLogger(name)

    log_level = getattr(logging, settings.log_level.upper(), logging.INFO)
    logger.setLevel(log_level)

    # Evitar duplicación de logs
    if logger.handlers:
        return logger

    log_format = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(log_format)
    logger.addHandler(console_handler)

    if log_file:
        log_dir = Path(settings.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_dir / log_file,
            maxBytes=10485760,  # 10MB
            backupCount=5
        )
        file_handler.setFormatter(log_format)
        logger.addHandler(file_handler)

    return logger


def set_log_level(level: str) -> None:
    """Cambia el nivel de todos los loggers ya creados por ``setup_logger``."""
    log_level = getattr(logging, level.upper(), logging.INFO)
    settings.log_level = level.upper()
    for existing in logging.Logger.manager.loggerDict.values():
        if isinstance(existing, logging.Logger) and existing.handlers:
            existing.setLevel(log_level)


# Logger principal de la aplicación
logger = setup_logger("assert_forge", "app.log")
