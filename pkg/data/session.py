"""
Run Session Management

Organizes pipeline artifacts into run directories keyed by config hash,
with an append-only run manifest and a lock against concurrent writers.
"""

import json
import os
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

RUNS_ROOT_ENV = "CSG_RUNS_ROOT"
TOOL_VERSION = "1.0.0"


class MissingArtifactError(FileNotFoundError):
    """An upstream stage output required by this stage does not exist."""


class ConfigHashMismatchError(ValueError):
    """An artifact was produced under a different configuration."""


class RunLockedError(RuntimeError):
    """Another process holds the run directory lock."""


def default_runs_root() -> Path:
    """Run-directory root from the environment (default ./runs)."""
    return Path(os.environ.get(RUNS_ROOT_ENV, "runs"))


class RunSession:
    """A pipeline run directory with its manifest."""

    def __init__(self, run_id: str, config_hash: str, base_dir: Optional[Path] = None):
        """
        Initialize session.

        Args:
            run_id: Unique run identifier (the config hash for content addressing)
            config_hash: Hash of the resolved pipeline configuration
            base_dir: Base directory for runs
        """
        self.run_id = run_id
        self.config_hash = config_hash
        self.base_dir = Path(base_dir) if base_dir is not None else default_runs_root()
        self.run_dir = self.base_dir / run_id
        self.logs_dir = self.run_dir / 'logs'
        self.manifest_file = self.run_dir / 'run.json'
        self.lock_file = self.run_dir / '.lock'
        self._lock_fd: Optional[int] = None

        self.metadata = {
            'run_id': run_id,
            'config_hash': config_hash,
            'tool_version': TOOL_VERSION,
            'python': platform.python_version(),
            'created': datetime.now(timezone.utc).isoformat(),
            'stages': [],
        }

    def create(self, config: Dict):
        """
        Create the run directory structure and record the resolved config.

        Args:
            config: Resolved configuration dict
        """
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.logs_dir.mkdir(exist_ok=True)

        if self.manifest_file.exists():
            self.load_metadata()
            if self.metadata.get('config_hash') != self.config_hash:
                raise ConfigHashMismatchError(
                    f"Run {self.run_id} was created with config "
                    f"{self.metadata.get('config_hash')}, current config is {self.config_hash}")
        else:
            self.save_metadata()

        config_path = self.run_dir / 'config.json'
        if not config_path.exists():
            with open(config_path, 'w') as f:
                json.dump(config, f, indent=2, sort_keys=True)

    def acquire_lock(self):
        """Take the exclusive run lock (fails if another writer holds it)."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        try:
            self._lock_fd = os.open(self.lock_file, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise RunLockedError(
                f"Run directory {self.run_dir} is locked by another process "
                f"(remove {self.lock_file} if it is stale)") from e
        os.write(self._lock_fd, str(os.getpid()).encode('ascii'))

    def release_lock(self):
        """Release the run lock if held."""
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
            try:
                self.lock_file.unlink()
            except FileNotFoundError:
                pass

    def __enter__(self):
        self.acquire_lock()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.release_lock()
        return False

    def stage_dir(self, stage: str) -> Path:
        """Directory for a stage's outputs (created on demand)."""
        path = self.run_dir / stage
        path.mkdir(parents=True, exist_ok=True)
        return path

    def artifact(self, stage: str, name: str) -> Path:
        """Path of an artifact under a stage directory (not created)."""
        return self.run_dir / stage / name

    def require(self, path: Path, produced_by: str) -> Path:
        """
        Ensure an upstream artifact exists.

        Args:
            path: Artifact path
            produced_by: Subcommand that produces it (for the error message)

        Returns:
            The same path
        """
        if not Path(path).exists():
            raise MissingArtifactError(
                f"Missing artifact {path}; run the '{produced_by}' subcommand first")
        return Path(path)

    def add_stage(self, stage: str, inputs: List[Path], outputs: List[Path],
                  duration_s: float, summary: Optional[Dict] = None) -> dict:
        """
        Append a stage record to the run manifest.

        Args:
            stage: Stage name
            inputs: Artifact paths read
            outputs: Artifact paths written
            duration_s: Wall-clock duration
            summary: Optional small result summary

        Returns:
            Stage record dict
        """
        record = {
            'stage': stage,
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'duration_s': round(duration_s, 3),
            'inputs': [self._relative(p) for p in inputs],
            'outputs': [self._relative(p) for p in outputs],
            'summary': summary or {},
        }
        self.metadata['stages'].append(record)
        self.save_metadata()
        return record

    def _relative(self, path: Path) -> str:
        path = Path(path)
        try:
            return str(path.relative_to(self.run_dir))
        except ValueError:
            return str(path)

    def list_outputs(self) -> List[str]:
        """All output paths recorded by any stage."""
        outputs = []
        for stage in self.metadata['stages']:
            outputs.extend(stage['outputs'])
        return outputs

    def save_metadata(self):
        """Save run manifest to JSON file."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        with open(self.manifest_file, 'w') as f:
            json.dump(self.metadata, f, indent=2)

    def load_metadata(self):
        """Load run manifest from JSON file."""
        if self.manifest_file.exists():
            with open(self.manifest_file, 'r') as f:
                self.metadata = json.load(f)

    def exists(self) -> bool:
        """Check if run directory exists."""
        return self.run_dir.exists()
