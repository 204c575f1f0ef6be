"""Run manifests and deterministic JSON/CSV writers.

Reports carry the manifest hash but no timestamps, so a rerun with the
same command, configuration and seed reproduces them byte for byte. The
wall-clock time goes into the separate manifest file only.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .data import format_real


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; NaN and infinities become strings so output stays valid JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, Path):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    seed: int | None
    version: str = __version__
    outputs: list[str] = field(default_factory=list)
    precedence: str = "cli flags > config file > defaults"

    @property
    def hash(self) -> str:
        payload = dumps_json({"command": self.command, "config": self.config,
                              "seed": self.seed, "version": self.version})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_dict(self, timestamp: bool = True) -> dict:
        out = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "manifest_hash": self.hash,
            "outputs": sorted(self.outputs),
            "precedence": self.precedence,
        }
        if timestamp:
            out["created_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return out


class OutputDir:
    """Collects every file a command writes and stamps it with the manifest hash."""

    def __init__(self, root: str | Path, manifest: RunManifest, prefix: str = ""):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest
        self.prefix = prefix

    def path(self, name: str) -> Path:
        p = self.root / f"{self.prefix}{name}"
        self.manifest.outputs.append(p.name)
        return p

    def json(self, name: str, report: dict) -> Path:
        p = self.path(name)
        p.write_text(dumps_json({"manifest_hash": self.manifest.hash, **report}))
        return p

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        p = self.path(name)
        p.write_text(dumps_csv(header, rows, self.manifest.hash))
        return p

    def finish(self) -> Path:
        p = self.root / f"{self.prefix}manifest.json"
        p.write_text(dumps_json(self.manifest.to_dict()))
        return p


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    return str(v)


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], manifest_hash: str | None = None) -> str:
    lines = [] if manifest_hash is None else [f"# manifest {manifest_hash}"]
    lines.append(",".join(header))
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"
