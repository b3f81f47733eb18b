"""
Base Stage Class

Abstract base class for pipeline stages and the context they run in.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from data.config_manager import PipelineConfig
from data.logger import StageTimer
from data.session import ConfigHashMismatchError, RunSession
from diffusion.checkpoint import load_checkpoint
from phantom.dataset import DatasetManifest
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

# (stage directory, file name) of the artifacts stages hand to each other
DATASET_MANIFEST = ('dataset', 'manifest.jsonl')
PAIRED_MANIFEST = ('pairs', 'paired.jsonl')
DESCRIPTORS = ('pairs', 'descriptors.bin')
DENOISER_CKPT = ('models', 'denoiser.ckpt')
DENOISER_LOG = ('models', 'denoiser_log.csv')
MASKGEN_CKPT = ('models', 'maskgen.ckpt')
MASKGEN_LOG = ('models', 'maskgen_log.csv')
GENMASK_MANIFEST = ('genmask', 'manifest.jsonl')
GENMASK_REPORT = ('genmask', 'report.json')
SYNTHETIC_MANIFEST = ('generate', 'manifest.jsonl')


@dataclass
class StageContext:
    """Resolved config, run session and per-invocation options."""

    config: PipelineConfig
    session: RunSession
    dry_run: bool = False
    options: Dict[str, Any] = field(default_factory=dict)
    current_stage: Optional[str] = None

    @property
    def config_hash(self) -> str:
        return self.session.config_hash

    def seed(self, stream: str) -> int:
        """Stage seed derived from the root seed."""
        return derive_seed(int(self.config.get('seed')), stream)

    def path(self, artifact: Tuple[str, str]) -> Path:
        return self.session.artifact(*artifact)

    def canvas_hw(self) -> Tuple[int, int]:
        width, height = self.config.get('phantom', 'canvas')
        return int(height), int(width)

    def read_manifest(self, artifact: Tuple[str, str], produced_by: str,
                      root: Optional[Tuple[str, str]] = None) -> DatasetManifest:
        """
        Read an upstream manifest and check its config hash.

        Args:
            artifact: Manifest location
            produced_by: Subcommand that writes it
            root: Artifact whose directory relative paths resolve against
        """
        path = self.session.require(self.path(artifact), produced_by)
        base = self.path(root).parent if root is not None else None
        manifest = DatasetManifest.read(path, root=base)
        self._check_hash(path, manifest.config_hash)
        return manifest

    def load_model(self, artifact: Tuple[str, str], produced_by: str):
        """Load an upstream checkpoint written under this config."""
        path = self.session.require(self.path(artifact), produced_by)
        return load_checkpoint(path, expected_hash=self.config_hash)

    def _check_hash(self, path: Path, found: str):
        if found != self.config_hash:
            raise ConfigHashMismatchError(
                f"{path} was written under config {found or '<none>'}, "
                f"current config is {self.config_hash}")


@dataclass
class StageResult:
    """Files a stage wrote plus a small summary for the run manifest."""

    outputs: List[Path]
    summary: Dict = field(default_factory=dict)
    inputs: List[Path] = field(default_factory=list)


class BaseStage(ABC):
    """
    Abstract base class for pipeline stages.

    Every stage reads its inputs from the run directory, writes its outputs
    there and appends one record to the run manifest.
    """

    stage_id: str = ''
    section: Optional[str] = None

    @abstractmethod
    def get_name(self) -> str:
        """Human-readable stage name."""

    @abstractmethod
    def get_description(self) -> str:
        """One-line description of what the stage produces."""

    def get_parameters(self) -> Dict[str, Dict]:
        """
        Configurable parameters of the stage's config section.

        Returns:
            {'key': {'type': type name, 'default': default value}}
        """
        if self.section is None:
            return {}
        defaults = PipelineConfig().section(self.section)
        return {key: {'type': type(value).__name__, 'default': value}
                for key, value in defaults.items()}

    @abstractmethod
    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        """
        Validate configuration before running the stage.

        Returns:
            (is_valid, error_message) tuple
        """

    def estimate_duration(self, config: PipelineConfig) -> float:
        """Rough wall-clock estimate in seconds."""
        return 1.0

    @abstractmethod
    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        """Required upstream artifacts as (path, producing subcommand)."""

    @abstractmethod
    def outputs(self, ctx: StageContext) -> List[Path]:
        """Primary artifacts the stage writes."""

    @abstractmethod
    def run(self, ctx: StageContext,
            progress_callback: Optional[Callable] = None) -> StageResult:
        """
        Execute the stage.

        Args:
            ctx: Stage context
            progress_callback: Function called as callback(percent, message)
        """

    def plan(self, ctx: StageContext) -> Dict:
        """What the stage would read and write."""
        return {
            'stage': self.stage_id,
            'inputs': [str(p) for p, _ in self.inputs(ctx)],
            'outputs': [str(p) for p in self.outputs(ctx)],
            'estimated_duration': self.format_duration(self.estimate_duration(ctx.config)),
        }

    def execute(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> Dict:
        """
        Check inputs, run, and record the stage in the run manifest.

        Returns:
            The run-manifest stage record
        """
        ctx.current_stage = self.stage_id
        inputs = [ctx.session.require(path, producer) for path, producer in self.inputs(ctx)]
        logger.info("stage %s started", self.stage_id, extra={'stage': self.stage_id})
        timer = StageTimer()
        result = self.run(ctx, progress_callback)
        record = ctx.session.add_stage(self.stage_id, inputs + result.inputs, result.outputs,
                                       timer.elapsed(), result.summary)
        logger.info("stage %s finished in %.1fs", self.stage_id, record['duration_s'],
                    extra={'stage': self.stage_id, 'duration_s': record['duration_s']})
        return record

    def _update_progress(self, progress_callback: Optional[Callable],
                         percent: float, message: str = ""):
        """
        Update progress if callback provided.

        Args:
            progress_callback: Progress callback function
            percent: Progress percentage (0-100)
            message: Status message
        """
        if progress_callback:
            try:
                progress_callback(percent, message)
            except Exception as e:
                logger.warning("Progress callback error: %s", e)

    def format_duration(self, seconds: float) -> str:
        """
        Format duration in human-readable form.

        Args:
            seconds: Duration in seconds

        Returns:
            Formatted string (e.g., "5.2 minutes", "1.5 hours")
        """
        if seconds < 60:
            return f"{seconds:.1f} seconds"
        elif seconds < 3600:
            return f"{seconds/60:.1f} minutes"
        else:
            return f"{seconds/3600:.1f} hours"
