import numpy as np
import pytest

from hseg import (
    DegenerateSegmentation,
    NothingToExpand,
    SegmentManifest,
    build_hierarchy,
    fill_empty_space,
    filter_small_segments,
    overlap_metric,
    segmentation_stats,
    select_depth_features,
    sweep_segmentation_stats,
)
from hseg.image_io import ImageBuffer

from conftest import rect_mask
from oracles import oracle_fill, oracle_hierarchy, random_manifest

W = H = 32


def sized_manifest(sizes):
    """Disjoint one-row-high masks with the requested pixel counts."""
    bitmaps = []
    for row, size in enumerate(sizes):
        mask = np.zeros((len(sizes), max(sizes)), dtype=bool)
        mask[row, :size] = True
        bitmaps.append(mask)
    return SegmentManifest.from_bitmaps(bitmaps)


class TestFilter:
    def test_boundary_at_threshold(self):
        manifest = sized_manifest([900, 499, 500])
        kept = filter_small_segments(manifest, 500)
        assert [s.pixel_count for s in kept] == [900, 500]

    def test_zero_threshold_is_identity(self):
        manifest = sized_manifest([3, 1, 7])
        assert filter_small_segments(manifest, 0) == list(manifest.segments)

    def test_empty_result_raises(self):
        manifest = sized_manifest([100, 200])
        with pytest.raises(DegenerateSegmentation):
            filter_small_segments(manifest, 500)


class TestOverlapMetric:
    def test_full_containment(self):
        outer = rect_mask(8, 8, 0, 0, 8, 8)
        inner = rect_mask(8, 8, 2, 2, 4, 4)
        assert overlap_metric(outer, inner) == 1.0

    def test_disjoint(self):
        a = rect_mask(8, 8, 0, 0, 4, 4)
        b = rect_mask(8, 8, 4, 4, 8, 8)
        assert overlap_metric(a, b) == 0.0

    def test_half_overlap_counted_brute_force(self):
        a = rect_mask(4, 6, 0, 0, 2, 6)   # 12 px
        b = rect_mask(4, 6, 1, 0, 3, 6)   # 12 px, 6 shared
        inter = sum(
            1 for r in range(4) for c in range(6) if a[r, c] and b[r, c]
        )
        assert inter == 6
        assert overlap_metric(a, b) == 0.5

    def test_self_overlap_is_one(self):
        rng = np.random.Generator(np.random.Philox(key=5))
        for _ in range(20):
            mask = rng.random((8, 8)) < 0.4
            if mask.any():
                assert overlap_metric(mask, mask) == 1.0

    def test_scale_free_under_tiling(self):
        rng = np.random.Generator(np.random.Philox(key=6))
        for _ in range(20):
            a = rng.random((6, 6)) < 0.5
            b = rng.random((6, 6)) < 0.5
            if not b.any():
                continue
            tiled_a = np.tile(a, (2, 2))
            tiled_b = np.tile(b, (2, 2))
            assert overlap_metric(tiled_a, tiled_b) == overlap_metric(a, b)


class TestBuildHierarchy:
    def test_nested_and_disjoint(self):
        # A 60 px, B 9 px inside A, C 40 px disjoint
        a = rect_mask(H, W, 0, 0, 6, 10)
        b = rect_mask(H, W, 1, 1, 4, 4)
        c = rect_mask(H, W, 10, 0, 14, 10)
        manifest = SegmentManifest.from_bitmaps([a, b, c])
        tree = build_hierarchy(list(manifest.segments), W, H, 0.9)
        assert tree.parents == {0: None, 1: 0, 2: None}
        assert tree.depth_index[1] == (0, 2)
        assert tree.depth_index[2] == (1,)
        assert tree.edge_weights[1] == 1.0

    def test_single_segment(self):
        manifest = SegmentManifest.from_bitmaps([rect_mask(H, W, 0, 0, 4, 4)])
        tree = build_hierarchy(list(manifest.segments), W, H, 0.9)
        assert tree.parents == {0: None}
        assert tree.depth_index == {1: (0,)}

    def test_transitive_edge_pruned_in_chain(self):
        # A contains B contains C; all three pairwise containments weigh 1.0
        a = rect_mask(H, W, 0, 0, 12, 12)
        b = rect_mask(H, W, 2, 2, 10, 10)
        c = rect_mask(H, W, 4, 4, 6, 6)
        manifest = SegmentManifest.from_bitmaps([a, b, c])
        tree = build_hierarchy(list(manifest.segments), W, H, 0.9)
        assert tree.parents == {0: None, 1: 0, 2: 1}
        assert tree.depth_index == {1: (0,), 2: (1,), 3: (2,)}

    def test_duplicate_masks_chain_by_id(self):
        mask = rect_mask(H, W, 0, 0, 5, 5)
        manifest = SegmentManifest.from_bitmaps([mask, mask.copy()])
        tree = build_hierarchy(list(manifest.segments), W, H, 0.9)
        assert tree.parents == {0: None, 1: 0}

    def test_tree_property_on_random_manifests(self):
        rng = np.random.Generator(np.random.Philox(key=99))
        for _ in range(50):
            manifest = random_manifest(rng)
            tree = build_hierarchy(list(manifest.segments), 32, 32, 0.9)
            ids = {s.id for s in manifest.segments}
            assert set(tree.parents) == ids
            for node in ids:
                seen = {node}
                cursor = tree.parents[node]
                while cursor is not None:
                    assert cursor not in seen  # acyclic
                    seen.add(cursor)
                    cursor = tree.parents[cursor]
            for child, parent in tree.parents.items():
                if parent is not None:
                    assert tree.edge_weights[child] >= 0.9
                    assert tree.depth_of(child) == tree.depth_of(parent) + 1

    def test_matches_oracle_on_random_manifests(self):
        rng = np.random.Generator(np.random.Philox(key=123))
        for _ in range(40):
            manifest = random_manifest(rng, max_segments=6)
            segments = list(manifest.segments)
            tree = build_hierarchy(segments, 32, 32, 0.9)
            parents, weights, depth_map = oracle_hierarchy(segments, 32, 32, 0.9)
            assert dict(tree.parents) == parents
            assert dict(tree.edge_weights) == weights
            assert dict(tree.depth_index) == depth_map

    def test_determinism(self):
        rng = np.random.Generator(np.random.Philox(key=7))
        manifest = random_manifest(rng)
        segments = list(manifest.segments)
        first = build_hierarchy(segments, 32, 32, 0.9)
        second = build_hierarchy(segments, 32, 32, 0.9)
        assert dict(first.parents) == dict(second.parents)
        assert dict(first.edge_weights) == dict(second.edge_weights)

    def test_threshold_validation(self):
        manifest = SegmentManifest.from_bitmaps([rect_mask(H, W, 0, 0, 4, 4)])
        with pytest.raises(ValueError):
            build_hierarchy(list(manifest.segments), W, H, 0.0)
        with pytest.raises(ValueError):
            build_hierarchy([], W, H, 0.9)


@pytest.fixture
def abc_tree():
    a = rect_mask(H, W, 0, 0, 6, 10)
    b = rect_mask(H, W, 1, 1, 4, 4)
    c = rect_mask(H, W, 10, 0, 14, 10)
    manifest = SegmentManifest.from_bitmaps([a, b, c])
    return build_hierarchy(list(manifest.segments), W, H, 0.9)


class TestSelectDepthFeatures:
    def test_depth_one_is_root_children(self, abc_tree):
        assert select_depth_features(abc_tree, 1) == [0, 2]

    def test_expanding_replaces_parent_in_place(self, abc_tree):
        assert select_depth_features(abc_tree, 2, {0}) == [1, 2]

    def test_expanding_leaf_raises(self, abc_tree):
        with pytest.raises(NothingToExpand):
            select_depth_features(abc_tree, 2, {2})

    def test_childless_parent_retained_when_another_expands(self, abc_tree):
        assert select_depth_features(abc_tree, 2, {0, 2}) == [1, 2]

    def test_explicit_previous_features(self, abc_tree):
        got = select_depth_features(abc_tree, 3, {0}, previous_features=[2, 0])
        assert got == [2, 1]


class TestFillEmptySpace:
    def image(self, h=4, w=4):
        return ImageBuffer.from_array(np.zeros((h, w, 3), dtype=np.uint8))

    def test_single_segment_absorbs_everything(self):
        manifest = SegmentManifest.from_bitmaps([rect_mask(4, 4, 0, 0, 4, 2)])
        space = fill_empty_space([0], manifest, self.image())
        assert space.feature_ids == (0,)
        assert (space.label_map == 0).all()

    def test_equidistant_pixels_go_to_lowest_id(self):
        # two single-pixel anchors at mirrored positions in a 16x16 grid
        left = np.zeros((16, 16), dtype=bool)
        left[8, 4] = True
        right = np.zeros((16, 16), dtype=bool)
        right[8, 11] = True
        manifest = SegmentManifest.from_bitmaps([left, right], ids=[5, 2])
        space = fill_empty_space([5, 2], manifest, self.image(16, 16))
        ids = np.asarray(space.feature_ids)[space.label_map]
        # columns 4..11 midline: pixels at column 7 and 8 are closer to one
        # anchor each; the exact midline between cols 4 and 11 is at 7.5 so
        # no integer column ties there, but rows far above tie on diagonals.
        expected = oracle_fill([5, 2], manifest)
        assert np.array_equal(ids, expected)

    def test_fully_covering_partition_preserved(self):
        top = rect_mask(4, 4, 0, 0, 2, 4)
        bottom = rect_mask(4, 4, 2, 0, 4, 4)
        manifest = SegmentManifest.from_bitmaps([top, bottom])
        space = fill_empty_space([0, 1], manifest, self.image())
        assert np.array_equal(space.label_map, np.repeat([0, 1], 2 * 4).reshape(4, 4))

    def test_disjoint_mask_pixels_keep_their_segment(self):
        rng = np.random.Generator(np.random.Philox(key=11))
        for _ in range(20):
            manifest = random_manifest(rng, width=16, height=16, max_segments=4)
            ids = [s.id for s in manifest.segments]
            space = fill_empty_space(
                ids, manifest, self.image(16, 16)
            )
            id_map = np.asarray(space.feature_ids)[space.label_map]
            coverage = np.zeros((16, 16), dtype=np.int32)
            for s in manifest.segments:
                coverage += s.decode(16, 16)
            for s in manifest.segments:
                solo = s.decode(16, 16) & (coverage == 1)
                if s.id in space.feature_ids:
                    assert (id_map[solo] == s.id).all()

    def test_matches_oracle_on_random_partial_manifests(self):
        rng = np.random.Generator(np.random.Philox(key=22))
        for _ in range(25):
            manifest = random_manifest(rng, width=16, height=16, max_segments=5)
            ids = [s.id for s in manifest.segments]
            space = fill_empty_space(ids, manifest, self.image(16, 16))
            id_map = np.asarray(space.feature_ids)[space.label_map]
            assert np.array_equal(id_map, oracle_fill(ids, manifest))

    def test_overlap_resolution_prefers_smaller_then_lower_id(self):
        big = rect_mask(8, 8, 0, 0, 8, 8)
        small = rect_mask(8, 8, 0, 0, 2, 2)
        manifest = SegmentManifest.from_bitmaps([big, small])
        space = fill_empty_space([0, 1], manifest, self.image(8, 8))
        id_map = np.asarray(space.feature_ids)[space.label_map]
        assert (id_map[0:2, 0:2] == 1).all()
        assert (id_map[4:, 4:] == 0).all()

    def test_mean_color_recomputable(self):
        rng = np.random.Generator(np.random.Philox(key=3))
        pixels = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        image = ImageBuffer.from_array(pixels)
        manifest = SegmentManifest.from_bitmaps([rect_mask(8, 8, 0, 0, 4, 8)])
        space = fill_empty_space([0], manifest, image)
        for pos in range(space.feature_count):
            region = space.label_map == pos
            expected = pixels[region].reshape(-1, 3).mean(axis=0)
            assert np.allclose(space.mean_color[pos], expected)


class TestStats:
    def test_full_cover_has_zero_empty_space(self):
        manifest = SegmentManifest.from_bitmaps([np.ones((8, 8), dtype=bool)])
        tree = build_hierarchy(list(manifest.segments), 8, 8, 0.9)
        image = ImageBuffer.from_array(np.zeros((8, 8, 3), dtype=np.uint8))
        space = fill_empty_space([0], manifest, image)
        stats = segmentation_stats(manifest, 0, tree, space)
        assert stats.empty_space_proportion == 0.0
        assert stats.segments_total == stats.features_final == 1

    def test_partial_cover_proportion(self):
        manifest = SegmentManifest.from_bitmaps([rect_mask(8, 8, 0, 0, 6, 8)])
        tree = build_hierarchy(list(manifest.segments), 8, 8, 0.9)
        image = ImageBuffer.from_array(np.zeros((8, 8, 3), dtype=np.uint8))
        space = fill_empty_space([0], manifest, image)
        stats = segmentation_stats(manifest, 0, tree, space)
        assert stats.empty_space_proportion == pytest.approx(0.25)

    def test_sweep_monotone_counts(self):
        # nested chain plus disjoint segments of graded sizes
        a = rect_mask(H, W, 0, 0, 25, 26)    # 650
        b = rect_mask(H, W, 1, 1, 21, 21)    # 400
        c = rect_mask(H, W, 2, 2, 12, 12)    # 100
        d = rect_mask(H, W, 26, 0, 32, 20)   # 120
        e = rect_mask(H, W, 26, 22, 31, 32)  # 50
        manifest = SegmentManifest.from_bitmaps([a, b, c, d, e])
        rows = sweep_segmentation_stats(manifest, [10, 60, 110, 450, 640], 0.9)
        finals = [stats.features_final for _, stats in rows]
        filtered = [stats.segments_after_filter for _, stats in rows]
        assert filtered == sorted(filtered, reverse=True)
        assert finals == sorted(finals, reverse=True)
        empties = [stats.empty_space_proportion for _, stats in rows]
        assert empties == sorted(empties)

    def test_sweep_rejects_empty_value_list(self):
        manifest = SegmentManifest.from_bitmaps([np.ones((4, 4), dtype=bool)])
        with pytest.raises(ValueError):
            sweep_segmentation_stats(manifest, [], 0.9)
