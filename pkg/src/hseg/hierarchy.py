"""Compositional hierarchy over overlapping segment masks.

Overlapping candidate masks are organized into a tree: an edge points
from a coarse segment to a finer segment it (nearly) contains. One
granularity level of that tree is then flattened into a full-coverage
partition of the image, the feature space the surrogate model is fit on.

Containment between two segments is measured as the fraction of the
finer segment covered by the coarser one: ``overlap(a, b) = |a & b| / |b|``.
Edges below the containment threshold are discarded. When a segment is
reachable from the top through several chains, only one survives: the
chain with the largest total overlap weight, ties broken by the longer
chain, then by the lexicographically smallest id sequence. Exact rational
arithmetic is used for those comparisons so results never depend on
float summation order. Mutual containments (near-duplicate masks) are
resolved before path selection by only keeping edges that point from the
larger segment to the smaller (equal sizes: from the lower id), which
guarantees the graph is acyclic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .errors import DegenerateSegmentation, NothingToExpand
from .image_io import ImageBuffer
from .manifest import SegmentManifest, SegmentMask


def filter_small_segments(
    manifest: SegmentManifest, min_segment_size: int
) -> list[SegmentMask]:
    """Drop segments whose pixel count is below ``min_segment_size``.

    Order is preserved. Raises DegenerateSegmentation when nothing
    survives, since no explanation can be built without features.
    """
    if min_segment_size < 0:
        raise ValueError("min_segment_size must be non-negative")
    kept = [s for s in manifest.segments if s.pixel_count >= min_segment_size]
    if not kept:
        raise DegenerateSegmentation(
            f"no segment has at least {min_segment_size} pixels"
        )
    return kept


def overlap_metric(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Fraction of ``mask_b`` covered by ``mask_a``: |a & b| / |b|."""
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    size_b = int(b.sum())
    if size_b == 0:
        raise ValueError("second mask must be non-empty")
    inter = int(np.logical_and(a, b).sum())
    return inter / size_b


@dataclass(frozen=True)
class HierarchyGraph:
    """Pruned containment tree over segment ids, rooted at a virtual root.

    ``parents`` maps every segment id to its parent id, or None for
    segments directly under the virtual root. ``edge_weights`` holds the
    surviving parent-edge overlap ratio for every non-root node.
    ``depth_index`` maps depth (1 = directly under the root) to the ids
    at that depth, ascending.
    """

    parents: Mapping[int, int | None]
    edge_weights: Mapping[int, float]
    depth_index: Mapping[int, tuple[int, ...]]
    children_map: Mapping[int, tuple[int, ...]]

    def children(self, seg_id: int) -> tuple[int, ...]:
        return self.children_map.get(seg_id, ())

    def depth_of(self, seg_id: int) -> int:
        depth = 0
        node: int | None = seg_id
        while node is not None:
            node = self.parents[node]
            depth += 1
        return depth

    @property
    def max_depth(self) -> int:
        return max(self.depth_index)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.parents))


def _containment_edges(
    segments: Sequence[SegmentMask], width: int, height: int, threshold: float
) -> tuple[dict[tuple[int, int], tuple[int, int]], dict[int, int]]:
    """Thresholded containment edges, already restricted to coarse->fine.

    Returns ``(edges, sizes)`` where ``edges[(u, v)] = (intersection, |v|)``
    for every kept edge u -> v, ids as keys.
    """
    ids = [s.id for s in segments]
    sizes = {s.id: s.pixel_count for s in segments}
    stack = np.stack(
        [s.decode(width, height).ravel() for s in segments]
    ).astype(np.float64)
    inter = stack @ stack.T  # exact: 0/1 sums stay well below 2**53

    def rank(seg_id: int) -> tuple[int, int]:
        # larger segments outrank smaller; equal sizes, lower id outranks
        return (sizes[seg_id], -seg_id)

    edges: dict[tuple[int, int], tuple[int, int]] = {}
    for i, u in enumerate(ids):
        for j, v in enumerate(ids):
            if i == j:
                continue
            count = int(round(inter[i, j]))
            if count / sizes[v] < threshold:
                continue
            if rank(u) > rank(v):
                edges[(u, v)] = (count, sizes[v])
    return edges, sizes


def build_hierarchy(
    segments: Sequence[SegmentMask],
    width: int,
    height: int,
    threshold: float,
) -> HierarchyGraph:
    """Build the pruned containment tree for a filtered segment list.

    ``threshold`` must lie in (0, 1]; edges with overlap below it never
    enter the graph. The result always satisfies the tree invariants:
    exactly one parent per node, child depth = parent depth + 1.
    """
    if not segments:
        raise ValueError("segments must be non-empty")
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    ids = [s.id for s in segments]
    if len(set(ids)) != len(ids):
        raise ValueError("segment ids must be unique")

    edges, sizes = _containment_edges(segments, width, height, threshold)
    incoming: dict[int, list[int]] = {i: [] for i in ids}
    for (u, v) in edges:
        incoming[v].append(u)

    # Process coarse-to-fine; every edge points down this order, so it is
    # a topological order and best-path state for parents is final when a
    # node is visited.
    order = sorted(ids, key=lambda s: (sizes[s], -s), reverse=True)
    best: dict[int, tuple[Fraction, int, tuple[int, ...]]] = {}
    parents: dict[int, int | None] = {}
    edge_weights: dict[int, float] = {}

    for v in order:
        candidates = sorted(incoming[v])
        if not candidates:
            parents[v] = None
            best[v] = (Fraction(0), 0, (v,))
            continue
        chosen: tuple[Fraction, int, tuple[int, ...]] | None = None
        chosen_parent: int | None = None
        for u in candidates:
            count, size_v = edges[(u, v)]
            w_u, len_u, seq_u = best[u]
            cand = (w_u + Fraction(count, size_v), len_u + 1, seq_u + (v,))
            if chosen is None or _path_beats(cand, chosen):
                chosen = cand
                chosen_parent = u
        assert chosen is not None and chosen_parent is not None
        best[v] = chosen
        parents[v] = chosen_parent
        count, size_v = edges[(chosen_parent, v)]
        edge_weights[v] = count / size_v

    children: dict[int, list[int]] = {}
    for v, p in parents.items():
        if p is not None:
            children.setdefault(p, []).append(v)
    children_map = {p: tuple(sorted(cs)) for p, cs in children.items()}

    depth_index: dict[int, list[int]] = {}
    for v in ids:
        depth_index.setdefault(_tree_depth(v, parents), []).append(v)
    depth_map = {d: tuple(sorted(vs)) for d, vs in depth_index.items()}

    return HierarchyGraph(
        parents=parents,
        edge_weights=edge_weights,
        depth_index=depth_map,
        children_map=children_map,
    )


def _path_beats(
    a: tuple[Fraction, int, tuple[int, ...]],
    b: tuple[Fraction, int, tuple[int, ...]],
) -> bool:
    """True when path a wins: heavier, then longer, then smaller ids."""
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] > b[1]
    return a[2] < b[2]


def _tree_depth(seg_id: int, parents: Mapping[int, int | None]) -> int:
    depth = 0
    node: int | None = seg_id
    while node is not None:
        node = parents[node]
        depth += 1
    return depth


def select_depth_features(
    hierarchy: HierarchyGraph,
    depth: int,
    expanded_parents: Iterable[int] = (),
    previous_features: Sequence[int] | None = None,
) -> list[int]:
    """Feature ids for one refinement level.

    Depth 1 is every child of the virtual root. For deeper levels, each
    expanded parent is replaced in place by its children while all other
    features of the previous level are retained; expanded parents without
    children are retained unexpanded. Raises NothingToExpand when no
    expanded parent has children at all.

    ``previous_features`` defaults to the tree nodes at ``depth - 1``;
    iterative drivers pass the feature list they actually used, which may
    mix tree depths after repeated refinement.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if depth == 1:
        return list(hierarchy.depth_index[1])
    expanded = set(expanded_parents)
    if previous_features is None:
        previous_features = list(hierarchy.depth_index.get(depth - 1, ()))
    expandable = {p for p in expanded if hierarchy.children(p)}
    if not expandable:
        raise NothingToExpand(
            "none of the expanded parents has child segments"
        )
    result: list[int] = []
    for fid in previous_features:
        if fid in expandable:
            result.extend(hierarchy.children(fid))
        else:
            result.append(fid)
    return result


@dataclass(frozen=True)
class FeatureSpace:
    """A total partition of the image into explanation features.

    ``label_map`` assigns every pixel the index of its feature within
    ``feature_ids``; ``mean_color`` holds per-feature per-channel mean
    intensities of the underlying image, recomputable from
    image + label_map.
    """

    feature_ids: tuple[int, ...]
    label_map: np.ndarray
    mean_color: np.ndarray

    def __post_init__(self) -> None:
        lm = np.ascontiguousarray(self.label_map)
        lm.setflags(write=False)
        object.__setattr__(self, "label_map", lm)
        mc = np.ascontiguousarray(self.mean_color)
        mc.setflags(write=False)
        object.__setattr__(self, "mean_color", mc)

    @property
    def feature_count(self) -> int:
        return len(self.feature_ids)

    def pixels_of(self, position: int) -> np.ndarray:
        """Boolean (H, W) region of the feature at ``position``."""
        return self.label_map == position


def _paint_labels(
    segment_ids: Sequence[int],
    manifest: SegmentManifest,
) -> tuple[np.ndarray, list[int]]:
    """Resolve overlapping selected masks into a disjoint partial labeling.

    Contested pixels go to the smaller segment, ties to the lower id.
    Returns the prefill label map (-1 = unassigned, otherwise an index
    into the surviving id list) and the surviving ids in input order.
    Segments that end up with no pixels at all are dropped.
    """
    w, h = manifest.image_width, manifest.image_height
    masks = {sid: manifest.segment_by_id(sid) for sid in segment_ids}
    # Paint large-to-small so smaller segments overwrite; for equal sizes
    # paint the higher id first so the lower id wins the tie.
    paint_order = sorted(
        segment_ids, key=lambda sid: (masks[sid].pixel_count, sid), reverse=True
    )
    positions = {sid: pos for pos, sid in enumerate(segment_ids)}
    labels = np.full((h, w), -1, dtype=np.int32)
    for sid in paint_order:
        labels[masks[sid].decode(w, h)] = positions[sid]

    survivors = [
        sid for sid in segment_ids if bool((labels == positions[sid]).any())
    ]
    if len(survivors) != len(segment_ids):
        remap = np.full(len(segment_ids), -1, dtype=np.int32)
        for new_pos, sid in enumerate(survivors):
            remap[positions[sid]] = new_pos
        assigned = labels >= 0
        labels[assigned] = remap[labels[assigned]]
    return labels, survivors


def _nearest_feature_fill(labels: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    """Assign every unlabeled pixel to the feature owning its nearest
    labeled pixel (Euclidean between pixel centers); exact integer
    distances, ties to the lowest segment id."""
    if not (labels == -1).any():
        return labels
    h, w = labels.shape
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    by_id = sorted(range(len(ids)), key=lambda pos: ids[pos])
    dist_sq = np.empty((len(ids), h, w), dtype=np.int64)
    for rank, pos in enumerate(by_id):
        src_r, src_c = ndimage.distance_transform_edt(
            labels != pos, return_distances=False, return_indices=True
        )
        dist_sq[rank] = (rows - src_r) ** 2 + (cols - src_c) ** 2
    winner_rank = np.argmin(dist_sq, axis=0)  # first minimum = lowest id
    winner = np.asarray(by_id, dtype=np.int32)[winner_rank]
    filled = labels.copy()
    unassigned = labels == -1
    filled[unassigned] = winner[unassigned]
    return filled


def fill_empty_space(
    segment_ids: Sequence[int],
    manifest: SegmentManifest,
    image: ImageBuffer,
) -> FeatureSpace:
    """Materialize the full-coverage feature space for selected segments.

    Pixels covered by no selected segment are attached to the feature
    containing their nearest assigned pixel; the per-feature mean colors
    are computed over the final (filled) regions.
    """
    if not segment_ids:
        raise ValueError("segment_ids must be non-empty")
    if (manifest.image_width, manifest.image_height) != (image.width, image.height):
        raise ValueError("image dimensions do not match the manifest")
    labels, survivors = _paint_labels(segment_ids, manifest)
    labels = _nearest_feature_fill(labels, survivors)
    pixels = image.pixels.reshape(-1, image.channels).astype(np.float64)
    flat = labels.ravel()
    mean_color = np.empty((len(survivors), image.channels), dtype=np.float64)
    for pos in range(len(survivors)):
        mean_color[pos] = pixels[flat == pos].mean(axis=0)
    return FeatureSpace(
        feature_ids=tuple(survivors),
        label_map=labels,
        mean_color=mean_color,
    )


@dataclass(frozen=True)
class SegmentationStats:
    """Segment counts across pipeline stages plus pre-fill empty space."""

    segments_total: int
    segments_after_filter: int
    segments_after_hierarchy: int
    features_final: int
    empty_space_proportion: float

    def to_dict(self) -> dict[str, int | float]:
        return {
            "segments_total": self.segments_total,
            "segments_after_filter": self.segments_after_filter,
            "segments_after_hierarchy": self.segments_after_hierarchy,
            "features_final": self.features_final,
            "empty_space_proportion": self.empty_space_proportion,
        }


def segmentation_stats(
    manifest: SegmentManifest,
    min_segment_size: int,
    hierarchy: HierarchyGraph,
    feature_space: FeatureSpace,
) -> SegmentationStats:
    """Bookkeeping over already-computed pipeline stages.

    The empty-space proportion is measured before filling: the fraction
    of pixels covered by none of the final features' raw masks.
    """
    w, h = manifest.image_width, manifest.image_height
    covered = np.zeros((h, w), dtype=bool)
    for sid in feature_space.feature_ids:
        covered |= manifest.segment_by_id(sid).decode(w, h)
    empty = 1.0 - int(covered.sum()) / (w * h)
    return SegmentationStats(
        segments_total=len(manifest.segments),
        segments_after_filter=sum(
            1 for s in manifest.segments if s.pixel_count >= min_segment_size
        ),
        segments_after_hierarchy=len(hierarchy.depth_index[1]),
        features_final=feature_space.feature_count,
        empty_space_proportion=float(empty),
    )


def sweep_segmentation_stats(
    manifest: SegmentManifest,
    min_segment_sizes: Sequence[int],
    threshold: float,
) -> list[tuple[int, SegmentationStats]]:
    """Run the filter/hierarchy/flatten pipeline per size threshold.

    Only depth-1 features are considered; no image is needed because
    mean colors play no role in the counts.
    """
    if not min_segment_sizes:
        raise ValueError("at least one size threshold is required")
    results: list[tuple[int, SegmentationStats]] = []
    w, h = manifest.image_width, manifest.image_height
    for theta in min_segment_sizes:
        kept = filter_small_segments(manifest, theta)
        tree = build_hierarchy(kept, w, h, threshold)
        top = select_depth_features(tree, 1)
        labels, survivors = _paint_labels(top, manifest)
        empty = float((labels == -1).sum()) / (w * h)
        results.append(
            (
                theta,
                SegmentationStats(
                    segments_total=len(manifest.segments),
                    segments_after_filter=len(kept),
                    segments_after_hierarchy=len(top),
                    features_final=len(survivors),
                    empty_space_proportion=empty,
                ),
            )
        )
    return results
