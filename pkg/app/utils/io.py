"""
Utilidades de lectura/escritura de corpus JSONL y huellas de ficheros.
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Union

PathLike = Union[str, Path]


def read_jsonl(path: PathLike) -> Iterator[Dict[str, Any]]:
    """Itera los objetos de un fichero JSONL, ignorando líneas vacías."""
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> int:
    """
    Escribe registros en formato JSONL (uno por línea).

    Args:
        path: Fichero de salida; se crean los directorios padre.
        records: Objetos serializables a JSON.

    Returns:
        int: Número de registros escritos.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            json.dump(record, f, ensure_ascii=False)
            f.write("\n")
            count += 1
    return count


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def sha256_path(path: PathLike) -> str:
    """
    Huella de un fichero o de un árbol de directorios.

    Para directorios se combinan las rutas relativas y contenidos de todos los
    ficheros en orden lexicográfico, así que la huella no depende del sistema de
    ficheros.
    """
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    digest = hashlib.sha256()
    for file in sorted(p for p in path.rglob("*") if p.is_file()):
        digest.update(file.relative_to(path).as_posix().encode("utf-8"))
        digest.update(sha256_file(file).encode("ascii"))
    return digest.hexdigest()


def list_files(root: PathLike, suffix: str) -> List[Path]:
    """Ficheros con la extensión dada, en orden lexicográfico de ruta."""
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(p for p in root.rglob(f"*{suffix}") if p.is_file())
