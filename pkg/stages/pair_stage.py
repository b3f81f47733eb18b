"""
Pair Stage

Computes style descriptors and attaches a same-split context image to
every dataset record.
"""

from pathlib import Path
from typing import Callable, List, Optional, Tuple

from data.config_manager import PipelineConfig
from style.context import build_pairs, ids_path
from style.conv_stack import ConvStack
from .base_stage import (DATASET_MANIFEST, DESCRIPTORS, PAIRED_MANIFEST, BaseStage,
                         StageContext, StageResult)


class PairStage(BaseStage):
    """Context selection by nearest style descriptor."""

    stage_id = 'pair'
    section = 'style'

    def get_name(self) -> str:
        return "Context Pairing"

    def get_description(self) -> str:
        return "Pair each image with its most similar same-split image by Gram descriptor"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        section = config.section('style')
        try:
            stack = ConvStack.from_config(section)
            layer_ids = stack.check_layers(section['layer_ids'])
        except (TypeError, ValueError) as e:
            return False, str(e)
        side = min(config.get('phantom', 'canvas'))
        if side < stack.min_size(layer_ids):
            return False, (f"Canvas side {side}px too small for style layer {max(layer_ids)} "
                           f"(needs >= {stack.min_size(layer_ids)}px)")
        return True, ""

    def estimate_duration(self, config: PipelineConfig) -> float:
        return 0.005 * int(config.get('dataset', 'n'))

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return [(ctx.path(DATASET_MANIFEST), 'dataset')]

    def outputs(self, ctx: StageContext) -> List[Path]:
        return [ctx.path(PAIRED_MANIFEST), ctx.path(DESCRIPTORS), ids_path(ctx.path(DESCRIPTORS))]

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        section = ctx.config.section('style')
        manifest = ctx.read_manifest(DATASET_MANIFEST, 'dataset')
        stack = ConvStack.from_config(section)

        paired, index = build_pairs(manifest, stack, section['layer_ids'])
        ctx.session.stage_dir('pairs')
        paired.write(ctx.path(PAIRED_MANIFEST))
        index.save(ctx.path(DESCRIPTORS))
        self._update_progress(progress_callback, 100, f"paired {len(paired)} records")

        mutual = sum(1 for r in paired if paired.by_id(r.context_id).context_id == r.id)
        return StageResult(self.outputs(ctx), {'pairs': len(paired), 'mutual_pairs': mutual})
