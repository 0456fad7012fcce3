"""
Run manifest: what a command produced and the configuration that produced it.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

from ..config.loader import config_hash
from ..config.models import ApproxTrainConfig
from .metrics import atomic_write

MANIFEST_FILE = "manifest.json"


@dataclass
class RunManifest:
    """Config snapshot, its content hash, and artifact paths.

    Artifact paths are stored relative to ``output_dir`` and sorted, and the
    manifest carries no timestamps, so identical runs write identical files.
    """

    config: Dict[str, Any]
    config_hash: str
    output_dir: str
    artifacts: List[str] = field(default_factory=list)

    @classmethod
    def for_config(
        cls, config: ApproxTrainConfig, output_dir: Union[str, Path]
    ) -> "RunManifest":
        return cls(
            config=config.model_dump(mode="json"),
            config_hash=config_hash(config),
            output_dir=str(output_dir),
        )

    def add(self, path: Union[str, Path]) -> None:
        path = Path(path)
        root = Path(self.output_dir)
        try:
            entry = path.relative_to(root).as_posix()
        except ValueError:
            entry = path.as_posix()
        if entry not in self.artifacts:
            self.artifacts.append(entry)
            self.artifacts.sort()

    def collect(self) -> None:
        """Record every file currently under the output directory."""
        root = Path(self.output_dir)
        for path in root.rglob("*"):
            if path.is_file() and path.name != MANIFEST_FILE:
                self.add(path)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "output_dir": self.output_dir,
            "artifacts": list(self.artifacts),
        }

    def write(self) -> Path:
        path = Path(self.output_dir) / MANIFEST_FILE
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
        atomic_write(path, text.encode("utf-8"))
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            config=data["config"],
            config_hash=data["config_hash"],
            output_dir=data["output_dir"],
            artifacts=list(data.get("artifacts", [])),
        )
