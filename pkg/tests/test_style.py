"""Unit tests for style descriptors and context pairing."""
import numpy as np
import pytest

from phantom.dataset import DatasetManifest, ManifestRecord
from phantom.speckle import speckle_field
from style.conv_stack import ConvStack
from style.context import ContextIndex, build_pairs, ids_path, select_context
from style.descriptor import descriptor_mse, extract_descriptor, extract_descriptors, gram_matrices


def _speckle(scale, seed, shape=(64, 64)):
    """Speckle texture of a given grain size, scaled into [0, 1]."""
    field = speckle_field(shape, scale, np.random.default_rng(seed))
    return np.clip(0.5 * field, 0.0, 1.0)


class TestConvStack:
    """Test the frozen random encoder."""

    def test_weights_are_seeded(self):
        a = ConvStack(seed=3, channels=(4, 8))
        b = ConvStack(seed=3, channels=(4, 8))
        c = ConvStack(seed=4, channels=(4, 8))
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        assert not np.array_equal(a.weights[0], c.weights[0])
        assert a.weights[1].shape == (8, 4, 3, 3)

    def test_descriptor_length(self, tiny_stack):
        assert tiny_stack.descriptor_length([0, 1]) == 10 + 36
        assert tiny_stack.descriptor_length([1]) == 36

    def test_bad_layer(self, tiny_stack):
        with pytest.raises(ValueError, match="outside"):
            tiny_stack.check_layers([2])

    def test_empty_stack(self):
        with pytest.raises(ValueError):
            ConvStack(channels=())


class TestDescriptor:
    """Test Gram-matrix descriptors."""

    @pytest.mark.unit
    def test_gram_is_symmetric_psd(self, tiny_stack, rng):
        grams = gram_matrices(rng.random((16, 16)), tiny_stack, [0, 1])
        for g in grams.values():
            assert np.allclose(g, g.T)
            assert np.linalg.eigvalsh(g).min() > -1e-12

    def test_length_and_determinism(self, tiny_stack, rng):
        img = rng.random((16, 16))
        d = extract_descriptor(img, tiny_stack, [0, 1])
        assert d.shape == (46,)
        assert np.array_equal(d, extract_descriptor(img.copy(), tiny_stack, [0, 1]))

    def test_black_image_has_zero_descriptor(self, tiny_stack):
        assert np.all(extract_descriptor(np.zeros((16, 16)), tiny_stack, [0, 1]) == 0.0)

    def test_quadratic_in_intensity(self, tiny_stack, rng):
        """Bias-free rectified convolutions make Grams scale with the square of the gain."""
        img = rng.random((16, 16)) * 0.5
        d1 = extract_descriptor(img, tiny_stack, [0, 1])
        d2 = extract_descriptor(2.0 * img, tiny_stack, [0, 1])
        assert np.allclose(d2, 4.0 * d1)

    def test_invariant_to_circular_shift(self, tiny_stack, rng):
        img = rng.random((16, 16))
        shifted = np.roll(img, (2, 4), axis=(0, 1))
        assert np.allclose(extract_descriptor(img, tiny_stack, [0, 1]),
                           extract_descriptor(shifted, tiny_stack, [0, 1]))

    def test_image_too_small(self, tiny_stack):
        with pytest.raises(ValueError, match="too small"):
            extract_descriptor(np.zeros((4, 4)), tiny_stack, [0, 1])

    def test_rejects_out_of_range(self, tiny_stack):
        with pytest.raises(ValueError):
            extract_descriptor(np.full((16, 16), 1.5), tiny_stack, [0])

    def test_batched_matches_single(self, tiny_stack, rng):
        images = [rng.random((16, 16)) for _ in range(5)]
        batched = extract_descriptors(images, tiny_stack, [0, 1], batch_size=2)
        for img, row in zip(images, batched):
            assert np.allclose(row, extract_descriptor(img, tiny_stack, [0, 1]))

    def test_speckle_scale_separates(self):
        stack = ConvStack(seed=0)
        fine = [_speckle(1, seed) for seed in range(3)]
        coarse = [_speckle(4, seed + 10) for seed in range(3)]
        desc = {name: extract_descriptors(images, stack)
                for name, images in (('fine', fine), ('coarse', coarse))}
        for i in range(3):
            j = (i + 1) % 3
            assert (descriptor_mse(desc['fine'][i], desc['fine'][j])
                    < descriptor_mse(desc['fine'][i], desc['coarse'][i]))
            assert (descriptor_mse(desc['coarse'][i], desc['coarse'][j])
                    < descriptor_mse(desc['coarse'][i], desc['fine'][i]))

    def test_stationary_under_translation(self):
        stack = ConvStack(seed=0)
        img = _speckle(2, 0)
        base = extract_descriptor(img, stack)
        aligned = extract_descriptor(np.roll(img, (4, 8), axis=(0, 1)), stack)
        assert np.allclose(aligned, base)
        for shift in ((3, 5), (1, 0), (7, 2)):
            moved = extract_descriptor(np.roll(img, shift, axis=(0, 1)), stack)
            assert np.linalg.norm(moved - base) <= 0.05 * np.linalg.norm(base), shift

    def test_mse(self):
        assert descriptor_mse(np.zeros(4), np.full(4, 2.0)) == pytest.approx(4.0)
        with pytest.raises(ValueError):
            descriptor_mse(np.zeros(3), np.zeros(4))


class TestContextSelection:
    """Test nearest-neighbour context lookup."""

    def test_nearest_other_sample(self):
        index = ContextIndex([('a', [0.0, 0.0]), ('b', [5.0, 5.0]), ('c', [1.0, 0.0])])
        assert select_context('a', index) == 'c'
        assert select_context('b', index) == 'c'

    @pytest.mark.unit
    def test_tie_goes_to_lowest_id(self):
        index = ContextIndex([('q', [0.0]), ('z', [1.0]), ('m', [-1.0])])
        assert select_context('q', index) == 'm'

    def test_duplicates_are_not_self(self):
        index = ContextIndex([('a', [1.0]), ('b', [1.0])])
        assert select_context('a', index) == 'b'
        assert select_context('b', index) == 'a'

    @pytest.mark.parametrize("size", [10, 50])
    def test_matches_brute_force(self, size, tiny_stack, rng):
        images = [np.clip(0.5 * speckle_field((16, 16), 1, rng), 0.0, 1.0) for _ in range(size)]
        images[3] = images[0].copy()
        ids = [f"s{i:03d}" for i in range(size)]
        index = ContextIndex(zip(ids, extract_descriptors(images, tiny_stack, [0, 1])))
        mat = index.matrix()
        for i, query in enumerate(ids):
            errors = [(float(np.mean((mat[k] - mat[i]) ** 2)), ids[k])
                      for k in range(size) if k != i]
            assert select_context(query, index) == min(errors)[1]

    def test_independent_of_index_order(self, rng):
        rows = rng.integers(0, 4, size=(30, 3)).astype(float)
        ids = [f"s{i:03d}" for i in range(30)]
        index = ContextIndex(zip(ids, rows))
        order = rng.permutation(30)
        shuffled = ContextIndex((ids[k], rows[k]) for k in order)
        for query in ids:
            assert select_context(query, shuffled) == select_context(query, index)

    def test_index_too_small(self):
        with pytest.raises(ValueError, match=">= 2"):
            select_context('a', ContextIndex([('a', [1.0])]))

    def test_unknown_query(self):
        with pytest.raises(ValueError):
            select_context('x', ContextIndex([('a', [1.0]), ('b', [2.0])]))

    def test_rejects_mismatched_lengths(self):
        index = ContextIndex([('a', [1.0, 2.0])])
        with pytest.raises(ValueError):
            index.add('b', [1.0])

    def test_binary_file(self, tmp_path):
        index = ContextIndex([('a', [0.25, 0.5]), ('b', [1.0, 2.0])])
        path = tmp_path / 'descriptors.bin'
        index.save(path)
        assert ids_path(path).exists()
        loaded = ContextIndex.load(path)
        assert loaded.ids == ['a', 'b']
        assert np.allclose(loaded.matrix(), index.matrix())

    def test_truncated_file(self, tmp_path):
        path = tmp_path / 'descriptors.bin'
        path.write_bytes(b'CSG')
        with pytest.raises(ValueError, match="truncated"):
            ContextIndex.load(path)


class TestPairing:
    """Test same-split pairing of a manifest."""

    def test_contexts_stay_in_split(self, tiny_dataset, tiny_stack):
        paired, index = build_pairs(tiny_dataset, tiny_stack, [0, 1])
        assert paired.kind == 'paired'
        assert len(index) == len(tiny_dataset)
        split_of = {r.id: r.split for r in tiny_dataset}
        for record in paired:
            assert record.context_id != record.id
            assert split_of[record.context_id] == record.split

    def test_context_is_argmin(self, tiny_dataset, tiny_stack):
        paired, index = build_pairs(tiny_dataset, tiny_stack, [0, 1])
        train = [r.id for r in tiny_dataset.split('train')]
        for record in paired.split('train'):
            errors = {other: descriptor_mse(index.descriptor(record.id), index.descriptor(other))
                      for other in train if other != record.id}
            assert errors[record.context_id] == pytest.approx(min(errors.values()))

    def test_singleton_split(self, tmp_path, tiny_stack):
        records = [ManifestRecord(id=f"s{i}", mask='m.png', image='i.png',
                                  split='train' if i else 'test', seed=0, index=i)
                   for i in range(3)]
        index = ContextIndex([(f"s{i}", [float(i)]) for i in range(3)])
        manifest = DatasetManifest(tmp_path, records)
        with pytest.raises(ValueError, match="'test'"):
            build_pairs(manifest, tiny_stack, [0], index=index)
