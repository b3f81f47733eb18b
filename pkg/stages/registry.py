"""
Stage Registry

Central registry of all pipeline stages.
"""

from typing import Callable, Dict, List, Optional

from data.config_manager import ConfigError
from .base_stage import BaseStage, StageContext
from .dataset_stage import DatasetStage
from .edit_stage import EditStage
from .evaluate_stage import EvaluateStage
from .generate_stage import GenerateStage
from .genmask_stage import GenmaskStage
from .pair_stage import PairStage
from .segval_stage import SegvalStage
from .train_stage import TrainMaskgenStage, TrainStage

# Mask generation, context selection and image generation, then the two evaluations.
PIPELINE_ORDER = ('dataset', 'pair', 'train', 'train-maskgen', 'genmask', 'generate',
                  'evaluate', 'segval')
ALL = 'all'


class StageRegistry:
    """Registry of all available pipeline stages."""

    def __init__(self):
        self.stages: Dict[str, BaseStage] = {}
        for stage in (DatasetStage(), PairStage(), TrainStage(), TrainMaskgenStage(),
                      GenmaskStage(), GenerateStage(), EditStage(), EvaluateStage(),
                      SegvalStage()):
            self.stages[stage.stage_id] = stage

    def get_stage(self, stage_id: str) -> Optional[BaseStage]:
        """
        Get stage by ID.

        Args:
            stage_id: Subcommand name

        Returns:
            Stage instance or None
        """
        return self.stages.get(stage_id)

    def get_all_stages(self) -> Dict[str, BaseStage]:
        return self.stages

    def get_stage_list(self) -> List[tuple]:
        """
        Get list of stages for help output.

        Returns:
            List of (stage_id, name, description) tuples
        """
        return [(stage_id, stage.get_name(), stage.get_description())
                for stage_id, stage in self.stages.items()]

    def resolve(self, stage_id: str) -> List[BaseStage]:
        """Stages a subcommand runs, in order."""
        if stage_id == ALL:
            return [self.stages[s] for s in PIPELINE_ORDER]
        stage = self.get_stage(stage_id)
        if not stage:
            raise ValueError(f"Unknown stage: {stage_id}")
        return [stage]

    def validate(self, stage_id: str, ctx: StageContext):
        """Validate the configuration of every stage a subcommand runs."""
        for stage in self.resolve(stage_id):
            valid, error = stage.validate_config(ctx.config)
            if not valid:
                ctx.current_stage = stage.stage_id
                raise ConfigError(f"Invalid configuration: {error}")

    def plan(self, stage_id: str, ctx: StageContext) -> Dict:
        """Execution plan of a subcommand without touching the run directory."""
        self.validate(stage_id, ctx)
        steps = [stage.plan(ctx) for stage in self.resolve(stage_id)]
        return {
            'run_dir': str(ctx.session.run_dir),
            'config_hash': ctx.config_hash,
            'stages': steps,
        }

    def run_stage(self, stage_id: str, ctx: StageContext,
                  progress_callback: Optional[Callable] = None) -> List[Dict]:
        """
        Run a subcommand ('all' runs the full pipeline).

        Args:
            stage_id: Subcommand name
            ctx: Stage context
            progress_callback: Progress update callback

        Returns:
            Run-manifest records of the executed stages
        """
        self.validate(stage_id, ctx)
        return [stage.execute(ctx, progress_callback) for stage in self.resolve(stage_id)]
