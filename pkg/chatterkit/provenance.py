"""Run provenance: which artifacts a run wrote and under which configuration."""
import logging
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import yaml

from .errors import IoError

logger = logging.getLogger(__name__)

PROVENANCE_FILE = "provenance.yaml"
PARTIAL_MARKER = "PARTIAL"
TRACKED_PACKAGES = (
    "chatterkit", "numpy", "scipy", "PyWavelets", "scikit-learn", "gudhi", "numba",
    "joblib", "pandas", "PyYAML",
)


@dataclass
class ProvenanceEntry:
    """One artifact written during a run."""
    path: Path
    kind: str  # series, features, distances, diagrams, report


def package_versions() -> dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


class RunProvenance:
    """Collects artifacts for the current run."""

    _instance: "RunProvenance | None" = None

    def __init__(self):
        self._entries: list[ProvenanceEntry] = []

    @classmethod
    def get_instance(cls) -> "RunProvenance":
        """Get the singleton instance."""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    def add(self, path: str | Path, kind: str) -> None:
        self._entries.append(ProvenanceEntry(Path(path), kind))

    def extend(self, paths, kind: str) -> None:
        for path in paths:
            self.add(path, kind)

    def get_entries(self) -> list[ProvenanceEntry]:
        return self._entries.copy()

    def clear(self) -> None:
        self._entries.clear()

    def write(self, out_dir: str | Path, config_hash: str, seeds) -> Path:
        """Write provenance.yaml listing artifacts relative to ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = []
        for entry in self._entries:
            try:
                rel = entry.path.resolve().relative_to(out.resolve())
            except ValueError:
                rel = entry.path
            artifacts.append({"path": rel.as_posix(), "kind": entry.kind})
        doc = {
            "config_hash": config_hash,
            "seeds": [int(s) for s in seeds],
            "versions": package_versions(),
            "artifacts": sorted(artifacts, key=lambda a: a["path"]),
        }
        path = out / PROVENANCE_FILE
        try:
            with open(path, "w") as f:
                f.write(f"# config_hash: {config_hash}\n")
                yaml.safe_dump(doc, f, default_flow_style=False, sort_keys=False)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
        return path


def get_provenance() -> RunProvenance:
    """Get the global provenance instance."""
    return RunProvenance.get_instance()


def mark_partial(out_dir: str | Path, reason: str) -> Path | None:
    """Drop a PARTIAL marker into ``out_dir`` if anything was written there."""
    out = Path(out_dir)
    if not out.is_dir() or not any(out.iterdir()):
        return None
    marker = out / PARTIAL_MARKER
    marker.write_text(f"{reason}\n")
    logger.error("Outputs in %s are incomplete: %s", out, reason)
    return marker


def clear_partial(out_dir: str | Path) -> None:
    (Path(out_dir) / PARTIAL_MARKER).unlink(missing_ok=True)
