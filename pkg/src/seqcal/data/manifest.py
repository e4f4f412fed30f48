"""Run manifests: written before a run starts and finalized when it ends."""

from datetime import datetime
from pathlib import Path
from typing import Any

import structlog
from pydantic import ValidationError

from seqcal import __version__
from seqcal.core.errors import ConfigError
from seqcal.core.models import RunManifest, SeedTriple
from seqcal.data.traces import dump_json

logger = structlog.get_logger()

MANIFEST_FILE = "manifest.json"


def start_manifest(
    out_dir: Path,
    command: str,
    config: dict[str, Any],
    seeds: list[SeedTriple] | None = None,
) -> RunManifest:
    manifest = RunManifest(
        command=command,
        config=config,
        seeds=seeds or [],
        version=__version__,
    )
    save_manifest(manifest, out_dir)
    return manifest


def finish_manifest(
    manifest: RunManifest, out_dir: Path, artifacts: list[Path], status: str = "complete"
) -> RunManifest:
    done = manifest.model_copy(
        update={
            "artifacts": sorted(str(p.relative_to(out_dir)) for p in artifacts),
            "status": status,
            "finished_at": datetime.now(),
        }
    )
    save_manifest(done, out_dir)
    logger.info("manifest_finalized", path=str(out_dir / MANIFEST_FILE), status=status)
    return done


def save_manifest(manifest: RunManifest, out_dir: Path) -> Path:
    path = out_dir / MANIFEST_FILE
    dump_json(path, manifest.model_dump(mode="json"))
    return path


def load_manifest(path: Path) -> RunManifest:
    """Read a manifest file (or the manifest inside a run directory)."""
    if path.is_dir():
        path = path / MANIFEST_FILE
    if not path.exists():
        raise ConfigError(f"no manifest at {path}")
    try:
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"invalid manifest {path}: {e}") from e
