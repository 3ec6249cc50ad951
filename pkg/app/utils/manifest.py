"""
Manifiesto de ejecución para reproducibilidad.
"""
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from config.settings import TOOL_VERSION
from utils.io import sha256_path

MANIFEST_NAME = "run_manifest.json"


class RunManifest(BaseModel):
    """Registro de una ejecución de un subcomando."""
    subcommand: str
    config: Dict[str, Any] = Field(default_factory=dict)
    input_digests: Dict[str, str] = Field(default_factory=dict)
    seed: int = 0
    tool_version: str = TOOL_VERSION
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None

    @classmethod
    def start(cls, subcommand: str, config: Dict[str, Any], inputs: List[str], seed: int) -> "RunManifest":
        digests = {str(p): sha256_path(p) for p in inputs if p and Path(p).exists()}
        return cls(subcommand=subcommand, config=_jsonable(config), input_digests=digests, seed=seed)

    def finish(self, out_dir: str) -> Path:
        """Marca el final y escribe el único manifiesto del directorio de salida."""
        self.finished_at = datetime.now(timezone.utc).isoformat()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        target = out / MANIFEST_NAME
        target.write_text(json.dumps(self.model_dump(), indent=2, sort_keys=True), encoding="utf-8")
        return target


def _jsonable(config: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v if isinstance(v, (str, int, float, bool)) or v is None else str(v) for k, v in sorted(config.items())}
