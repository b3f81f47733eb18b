"""Unit tests for mask editing and Poisson blending."""
import numpy as np
import pytest
import torch
from scipy import sparse

from diffusion.conditioning import ConditionPair, GuidanceConfig
from diffusion.sampler import sample
from diffusion.schedule import NoiseSchedule
from editing.dsl import EditSyntaxError, Rotate, Scale, Translate, format_program, parse_edit
from editing.image_edit import edit_image
from editing.mask_ops import EditError, apply_command, apply_program, bounding_box
from editing.poisson import (BlendProblem, NotPositiveDefiniteError, PoissonConvergenceError,
                             assemble, blend_texture, conjugate_gradient, solve_poisson)
from phantom.classes import ClassId


def _scene():
    """32x32 muscle field with a 4x8 tendon bar at rows 10-13, cols 8-15."""
    mask = np.full((32, 32), ClassId.MUSCLE, dtype=np.uint8)
    mask[10:14, 8:16] = ClassId.TENDON
    return mask


def _box(mask, cls):
    b = bounding_box(mask == cls)
    return b.top, b.left, b.bottom, b.right


def _random_region(rng, h, w, size=None):
    """4-connected blob grown from a random seed pixel, clear of the border."""
    size = int(rng.integers(1, 25)) if size is None else size
    omega = np.zeros((h, w), dtype=bool)
    omega[rng.integers(1, h - 1), rng.integers(1, w - 1)] = True
    steps = ((-1, 0), (1, 0), (0, -1), (0, 1))
    while omega.sum() < size:
        ys, xs = np.nonzero(omega)
        i = rng.integers(ys.size)
        dy, dx = steps[rng.integers(4)]
        y, x = ys[i] + dy, xs[i] + dx
        if 1 <= y < h - 1 and 1 <= x < w - 1:
            omega[y, x] = True
    return omega


def _dense_system(omega, boundary, guidance):
    """Dense Poisson system written pixel by pixel from the discrete equation."""
    pixels = list(zip(*np.nonzero(omega)))
    index = {p: i for i, p in enumerate(pixels)}
    A = np.zeros((len(pixels), len(pixels)))
    b = np.zeros(len(pixels))
    for i, (y, x) in enumerate(pixels):
        A[i, i] = 4.0
        for k, (dy, dx) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
            q = (y + dy, x + dx)
            if q in index:
                A[i, index[q]] -= 1.0
            else:
                b[i] += boundary[q]
            b[i] += guidance[k, y, x]
    return A, b


def _seam_jump(image, region):
    """Mean absolute step across 4-neighbour pairs that straddle the region edge."""
    jumps = []
    for axis in (0, 1):
        a = np.diff(region.astype(np.int8), axis=axis) != 0
        step = np.abs(np.diff(image, axis=axis))
        jumps.append(step[a])
    return float(np.concatenate(jumps).mean())


class _TendonOracle:
    """Noise predictor whose clean image is bright on tendon pixels and dark elsewhere."""

    def __init__(self, sched):
        self.alphas_bar = torch.as_tensor(sched.alphas_bar, dtype=torch.float32)

    def __call__(self, x_t, t, semantic, context):
        target = torch.full_like(x_t, -0.8)
        if semantic is not None:
            target = target + 1.6 * semantic[:, ClassId.TENDON:ClassId.TENDON + 1]
        ab = self.alphas_bar[int(t) - 1]
        return (x_t - ab.sqrt() * target) / (1.0 - ab).sqrt()


class TestEditLanguage:
    """Test parsing and printing of edit programs."""

    @pytest.mark.unit
    def test_parse_commands(self):
        program = parse_edit("scale tendon x 1.2; translate DITF dx -3 dy 2;rotate bone 15 deg")
        assert list(program) == [
            Scale(ClassId.TENDON, 1.2, 1.0),
            Translate(ClassId.DITF, -3, 2),
            Rotate(ClassId.BONE, 15.0),
        ]

    def test_case_and_trailing_separator(self):
        program = parse_edit("SCALE Bone_Irregularity Y 0.5;")
        assert list(program) == [Scale(ClassId.BONE_IRREGULARITY, 1.0, 0.5)]

    def test_format_reparses(self):
        program = parse_edit("scale muscle x 1.5 y 0.75; rotate tendon -30 deg")
        assert parse_edit(format_program(program)) == program

    def test_unknown_class_position(self):
        with pytest.raises(EditSyntaxError, match="unknown class") as info:
            parse_edit("scale femur x 2")
        assert (info.value.line, info.value.col) == (1, 7)

    @pytest.mark.parametrize("text", [
        "",
        "   ",
        "scale tendon x 0",
        "scale tendon x 9",
        "rotate tendon 181 deg",
        "translate tendon dx 1.5 dy 2",
        "translate tendon dx 1",
        "shear tendon 2",
        "scale tendon x 1.2 scale bone x 1.1",
    ])
    def test_rejects(self, text):
        with pytest.raises(EditSyntaxError):
            parse_edit(text)


class TestMaskOperations:
    """Test geometric edits on label masks."""

    @pytest.mark.unit
    def test_translate(self):
        out = apply_command(_scene(), Translate(ClassId.TENDON, 4, 2))
        expected = np.full((32, 32), ClassId.MUSCLE, dtype=np.uint8)
        expected[12:16, 12:20] = ClassId.TENDON
        assert np.array_equal(out, expected)

    def test_scale_about_box_centre(self):
        out = apply_command(_scene(), Scale(ClassId.TENDON, 2.0, 1.0))
        assert _box(out, ClassId.TENDON) == (10, 4, 13, 19)
        assert (out == ClassId.TENDON).sum() == 4 * 16

    def test_rotate_quarter_turn(self):
        out = apply_command(_scene(), Rotate(ClassId.TENDON, 90.0))
        assert _box(out, ClassId.TENDON) == (8, 10, 15, 13)
        assert (out == ClassId.TENDON).sum() == 32

    def test_vacated_pixels_take_neighbour_label(self):
        mask = _scene()
        mask[:10] = ClassId.BACKGROUND
        out = apply_command(mask, Translate(ClassId.TENDON, 0, 6))
        assert np.all(out[:10] == ClassId.BACKGROUND)
        assert out[10, 12] == ClassId.BACKGROUND
        assert out[13, 12] == ClassId.MUSCLE
        assert np.all(out[16:20, 8:16] == ClassId.TENDON)

    def test_program_applies_in_order(self):
        program = parse_edit("translate tendon dx 4 dy 0; translate tendon dx -4 dy 0")
        assert np.array_equal(apply_program(_scene(), program), _scene())

    def test_missing_class(self):
        with pytest.raises(EditError, match="ditf"):
            apply_command(_scene(), Scale(ClassId.DITF, 1.5))

    def test_moved_off_canvas(self):
        with pytest.raises(EditError, match="outside the canvas"):
            apply_command(_scene(), Translate(ClassId.TENDON, 100, 0))

    def test_scale_round_trip(self):
        enlarged = apply_command(_scene(), Scale(ClassId.TENDON, 2.0, 2.0))
        assert _box(enlarged, ClassId.TENDON) == (8, 4, 15, 19)
        restored = apply_command(enlarged, Scale(ClassId.TENDON, 0.5, 0.5))
        assert np.array_equal(restored, _scene())

    def test_partial_clip(self):
        out = apply_command(_scene(), Translate(ClassId.TENDON, 20, 0))
        assert _box(out, ClassId.TENDON) == (10, 28, 13, 31)


class TestPoissonSolver:
    """Test the sparse Poisson system and CG."""

    def _problem(self, rng, h=10, w=12):
        omega = np.zeros((h, w), dtype=bool)
        omega[2:8, 3:9] = True
        omega[4, 9] = True
        return BlendProblem(omega, rng.random((h, w)), rng.standard_normal((4, h, w)))

    @pytest.mark.unit
    def test_matches_dense_solve(self, rng):
        problem = self._problem(rng)
        A, rhs = assemble(problem)
        expected = np.linalg.solve(A.toarray(), rhs)
        assert np.allclose(solve_poisson(problem, tol=1e-12), expected, atol=1e-9)

    def test_single_pixel(self, rng):
        omega = np.zeros((5, 5), dtype=bool)
        omega[2, 2] = True
        boundary = rng.random((5, 5))
        guidance = rng.standard_normal((4, 5, 5))
        expected = (boundary[1, 2] + boundary[3, 2] + boundary[2, 1] + boundary[2, 3]
                    + guidance[:, 2, 2].sum()) / 4.0
        value = solve_poisson(BlendProblem(omega, boundary, guidance), tol=1e-12)
        assert value.shape == (1,)
        assert value[0] == pytest.approx(expected)

    def test_random_regions_match_dense_oracle(self, rng):
        for _ in range(20):
            omega = _random_region(rng, 12, 14)
            boundary = rng.random((12, 14))
            guidance = rng.standard_normal((4, 12, 14))
            A, b = _dense_system(omega, boundary, guidance)
            expected = np.linalg.solve(A, b)
            got = solve_poisson(BlendProblem(omega, boundary, guidance), tol=1e-12)
            assert np.allclose(got, expected, atol=1e-8)

    def test_system_is_symmetric(self, rng):
        A, _ = assemble(self._problem(rng))
        assert abs(A - A.T).max() == 0

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefiniteError):
            conjugate_gradient(-sparse.identity(3, format='csr'), np.ones(3))

    def test_iteration_cap(self, rng):
        A, rhs = assemble(self._problem(rng))
        with pytest.raises(PoissonConvergenceError):
            conjugate_gradient(A, rhs, tol=1e-12, max_iter=1)

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            conjugate_gradient(sparse.identity(2, format='csr'), np.ones(2), tol=0)

    @pytest.mark.parametrize("edit", ["border", "split", "empty"])
    def test_invalid_region(self, edit, rng):
        omega = np.zeros((8, 8), dtype=bool)
        if edit == "border":
            omega[0:3, 2:4] = True
        elif edit == "split":
            omega[2, 2] = omega[5, 5] = True
        problem = BlendProblem(omega, np.zeros((8, 8)), np.zeros((4, 8, 8)))
        with pytest.raises(ValueError):
            problem.validate()


class TestBlendTexture:
    """Test seamless cloning."""

    @pytest.mark.unit
    def test_self_clone_is_identity(self, rng):
        src = rng.random((16, 16))
        region = np.zeros((16, 16), dtype=bool)
        region[3:12, 4:10] = True
        assert np.allclose(blend_texture(src, src, region, tol=1e-10), src, atol=1e-8)

    def test_flat_source_fills_harmonically(self):
        dst = np.full((16, 16), 0.4)
        region = np.zeros((16, 16), dtype=bool)
        region[4:10, 4:10] = True
        out = blend_texture(np.full((16, 16), 0.9), dst, region)
        assert np.allclose(out, 0.4, atol=1e-6)

    def test_outside_region_untouched(self, rng):
        src, dst = rng.random((16, 16)), rng.random((16, 16))
        region = np.zeros((16, 16), dtype=bool)
        region[5:9, 5:12] = True
        region[0, :] = True
        out = blend_texture(src, dst, region)
        assert np.array_equal(out[~region], dst[~region])
        assert np.array_equal(out[0], dst[0])
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_seams_beat_naive_paste(self, rng):
        wins = 0
        for _ in range(20):
            dst = 0.5 + 0.1 * (rng.random((24, 24)) - 0.5)
            offset = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 0.35)
            src = 0.5 + offset + 0.1 * (rng.random((24, 24)) - 0.5)
            region = np.zeros((24, 24), dtype=bool)
            top, left = rng.integers(2, 12, size=2)
            region[top:top + int(rng.integers(4, 10)), left:left + int(rng.integers(4, 10))] = True
            pasted = dst.copy()
            pasted[region] = src[region]
            blended = blend_texture(src, dst, region)
            wins += _seam_jump(blended, region) < _seam_jump(pasted, region)
        assert wins >= 19

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            blend_texture(np.zeros((8, 8)), np.zeros((8, 9)), np.zeros((8, 8), dtype=bool))


class TestImageEdit:
    """Test edits carried onto the paired image."""

    def _ramp(self):
        return np.tile(0.1 + 0.02 * np.arange(32), (32, 1))

    def test_mask_matches_mask_only_edit(self):
        program = parse_edit("translate tendon dx 4 dy 2")
        mask, _ = edit_image(_scene(), self._ramp(), program)
        assert np.array_equal(mask, apply_program(_scene(), program))

    @pytest.mark.unit
    def test_translation_of_ramp_is_seamless(self):
        """Moving a texture whose gradient is uniform leaves the image unchanged."""
        image = self._ramp()
        _, edited = edit_image(_scene(), image, parse_edit("translate tendon dx 4 dy 2"),
                               tol=1e-10)
        assert np.allclose(edited, image, atol=1e-6)

    def test_pixels_outside_new_object_kept(self, rng):
        image = rng.random((32, 32))
        mask, edited = edit_image(_scene(), image, parse_edit("scale tendon x 1.5"))
        outside = mask != ClassId.TENDON
        assert np.array_equal(edited[outside], image[outside])

    def test_source_texture(self):
        image = np.full((32, 32), 0.5)
        _, edited = edit_image(_scene(), image, parse_edit("rotate tendon 90 deg"),
                               source=np.full((32, 32), 0.2))
        assert np.allclose(edited, 0.5, atol=1e-6)

    def test_edited_mask_drives_generation(self):
        """Scaling an object by 1.5 per axis grows the generated region by 2.25."""
        sched = NoiseSchedule.linear(8)
        model = _TendonOracle(sched)
        edited = apply_command(_scene(), Scale(ClassId.TENDON, 1.5, 1.5))
        areas = []
        for mask in (_scene(), edited):
            image = sample(model, ConditionPair(mask, np.zeros((32, 32))),
                           GuidanceConfig(1.0, 1.0), sched, 0)
            generated = image > 0.5
            assert np.array_equal(generated, mask == ClassId.TENDON)
            areas.append(int(generated.sum()))
        assert areas[1] / areas[0] == pytest.approx(2.25)

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            edit_image(_scene(), np.zeros((16, 16)), parse_edit("scale tendon x 2"))
        with pytest.raises(ValueError):
            edit_image(_scene(), np.zeros((32, 32)), parse_edit("scale tendon x 2"),
                       source=np.zeros((16, 16)))
