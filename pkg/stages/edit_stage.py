"""
Edit Stage

Applies an edit program to a mask (and optionally its image) given on the
command line. Not part of the 'all' pipeline.
"""

from pathlib import Path
from typing import Callable, List, Optional, Tuple

from data.config_manager import PipelineConfig
from data.images import load_image, load_mask, save_image, save_mask
from editing.dsl import format_program, parse_edit
from editing.image_edit import edit_image
from editing.mask_ops import apply_program
from .base_stage import BaseStage, StageContext, StageResult


class EditStage(BaseStage):
    """Text-driven mask editing with seamless texture cloning."""

    stage_id = 'edit'
    section = 'edit'

    def get_name(self) -> str:
        return "Mask Editing"

    def get_description(self) -> str:
        return "Apply a scale/translate/rotate program to a mask and blend the image to match"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        if float(config.get('edit', 'tol')) <= 0:
            return False, "edit.tol must be > 0"
        return True, ""

    def _program_text(self, ctx: StageContext) -> str:
        if ctx.options.get('program') is not None:
            return ctx.options['program']
        if ctx.options.get('program_file') is not None:
            return Path(ctx.options['program_file']).read_text()
        raise ValueError("edit needs --program or --program-file")

    def _user_path(self, ctx: StageContext, key: str) -> Optional[Path]:
        value = ctx.options.get(key)
        if value is None:
            return None
        path = Path(value)
        if not path.exists():
            raise FileNotFoundError(f"--{key} file not found: {path}")
        return path

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return []

    def outputs(self, ctx: StageContext) -> List[Path]:
        out = ctx.session.run_dir / 'edit'
        stem = Path(ctx.options.get('mask') or 'mask').stem
        paths = [out / 'program.txt', out / f"{stem}_edited_mask.png"]
        if ctx.options.get('image'):
            paths.append(out / f"{stem}_edited.png")
        return paths

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        program = parse_edit(self._program_text(ctx))
        mask_path = self._user_path(ctx, 'mask')
        if mask_path is None:
            raise ValueError("edit needs --mask")
        image_path = self._user_path(ctx, 'image')
        source_path = self._user_path(ctx, 'source')
        if source_path is not None and image_path is None:
            raise ValueError("--source requires --image")
        tol = float(ctx.options.get('tol') or ctx.config.get('edit', 'tol'))

        mask = load_mask(mask_path)
        if image_path is None:
            edited_mask, edited_image = apply_program(mask, program), None
        else:
            source = load_image(source_path) if source_path is not None else None
            edited_mask, edited_image = edit_image(mask, load_image(image_path), program,
                                                   source=source, tol=tol)

        outputs = self.outputs(ctx)
        ctx.session.stage_dir('edit')
        outputs[0].write_text(format_program(program) + "\n")
        save_mask(outputs[1], edited_mask)
        if edited_image is not None:
            save_image(outputs[2], edited_image)
        self._update_progress(progress_callback, 100, "edited")

        changed = int((edited_mask != mask).sum())
        used = [p for p in (mask_path, image_path, source_path) if p is not None]
        return StageResult(outputs, {'commands': len(program), 'changed_pixels': changed,
                                     'tol': tol}, inputs=used)
