"""Independent brute-force reference implementations used only by tests.

These deliberately avoid the algorithms and vectorized shortcuts used by
the package: containment edges come from literal pairwise pixel counts,
tree pruning enumerates every simple path explicitly, and empty-space
filling scans all assigned pixels per empty pixel.
"""

from __future__ import annotations

from collections import defaultdict
from fractions import Fraction

import numpy as np

from hseg import SegmentManifest


def oracle_hierarchy(segments, width, height, threshold):
    """Literal rule application: returns (parents, edge_weights, depth_index)."""
    bitmaps = {s.id: np.asarray(s.decode(width, height), dtype=bool) for s in segments}
    sizes = {s.id: int(bitmaps[s.id].sum()) for s in segments}
    ids = [s.id for s in segments]

    def rank(sid):
        return (sizes[sid], -sid)

    edges = {}
    for u in ids:
        for v in ids:
            if u == v:
                continue
            inter = 0
            bu, bv = bitmaps[u], bitmaps[v]
            for r in range(height):
                for c in range(width):
                    if bu[r, c] and bv[r, c]:
                        inter += 1
            if inter / sizes[v] < threshold:
                continue
            if rank(u) > rank(v):
                edges[(u, v)] = (inter, sizes[v])

    adjacency = defaultdict(list)
    indegree = {i: 0 for i in ids}
    for (u, v) in edges:
        adjacency[u].append(v)
        indegree[v] += 1

    # every simple path from every parentless node
    paths_to = defaultdict(list)

    def walk(node, path):
        paths_to[node].append(list(path))
        for nxt in sorted(adjacency[node]):
            if nxt not in path:
                path.append(nxt)
                walk(nxt, path)
                path.pop()

    for start in ids:
        if indegree[start] == 0:
            walk(start, [start])

    def path_key(path):
        weight = Fraction(0)
        for a, b in zip(path, path[1:]):
            weight += Fraction(*edges[(a, b)])
        return weight, len(path) - 1, path

    parents = {}
    weights = {}
    for v in ids:
        candidates = [p for p in paths_to.get(v, []) if len(p) >= 2]
        if not candidates:
            parents[v] = None
            continue
        best = None
        for path in candidates:
            key = path_key(path)
            if best is None:
                best = (key, path)
                continue
            bw, bl, bp = best[0]
            w, l, p = key
            if (w > bw) or (w == bw and l > bl) or (w == bw and l == bl and p < bp):
                best = (key, path)
        winner = best[1]
        parents[v] = winner[-2]
        inter, size = edges[(winner[-2], v)]
        weights[v] = inter / size

    depth_index = defaultdict(list)
    for v in ids:
        depth = 0
        node = v
        while node is not None:
            node = parents[node]
            depth += 1
        depth_index[depth].append(v)
    depth_map = {d: tuple(sorted(vs)) for d, vs in depth_index.items()}
    return parents, weights, depth_map


def oracle_fill(segment_ids, manifest: SegmentManifest):
    """Per-pixel nearest-assigned-pixel fill; returns an id-valued map."""
    w, h = manifest.image_width, manifest.image_height
    masks = {sid: manifest.segment_by_id(sid).decode(w, h) for sid in segment_ids}
    sizes = {sid: int(masks[sid].sum()) for sid in segment_ids}

    owner = np.full((h, w), -1, dtype=np.int64)
    for r in range(h):
        for c in range(w):
            holders = [sid for sid in segment_ids if masks[sid][r, c]]
            if holders:
                owner[r, c] = min(holders, key=lambda s: (sizes[s], s))

    assigned_rows, assigned_cols = np.nonzero(owner >= 0)
    assigned_ids = owner[assigned_rows, assigned_cols]
    filled = owner.copy()
    for r in range(h):
        for c in range(w):
            if owner[r, c] >= 0:
                continue
            d2 = (assigned_rows - r) ** 2 + (assigned_cols - c) ** 2
            closest = d2.min()
            filled[r, c] = assigned_ids[d2 == closest].min()
    return filled


def random_manifest(rng: np.random.Generator, width=32, height=32, max_segments=8):
    """Synthetic manifests mixing disjoint, nested, and duplicate masks."""
    count = int(rng.integers(1, max_segments + 1))
    bitmaps: list[np.ndarray] = []
    while len(bitmaps) < count:
        draw = rng.random()
        if bitmaps and draw < 0.15:
            bitmaps.append(bitmaps[int(rng.integers(0, len(bitmaps)))].copy())
            continue
        if bitmaps and draw < 0.50:
            # sub-rectangle of an existing mask's bounding box
            parent = bitmaps[int(rng.integers(0, len(bitmaps)))]
            rows, cols = np.nonzero(parent)
            r_lo, r_hi = int(rows.min()), int(rows.max()) + 1
            c_lo, c_hi = int(cols.min()), int(cols.max()) + 1
            r0 = int(rng.integers(r_lo, r_hi))
            c0 = int(rng.integers(c_lo, c_hi))
            r1 = int(rng.integers(r0 + 1, r_hi + 1))
            c1 = int(rng.integers(c0 + 1, c_hi + 1))
        else:
            r0 = int(rng.integers(0, height - 1))
            c0 = int(rng.integers(0, width - 1))
            r1 = int(rng.integers(r0 + 1, height + 1))
            c1 = int(rng.integers(c0 + 1, width + 1))
        mask = np.zeros((height, width), dtype=bool)
        mask[r0:r1, c0:c1] = True
        bitmaps.append(mask)
    return SegmentManifest.from_bitmaps(bitmaps)


def trapezoid_auc(confidences):
    """Straightforward trapezoid quadrature over an even [0, 1] grid."""
    values = list(map(float, confidences))
    steps = len(values) - 1
    if steps == 0:
        return values[0]
    total = 0.0
    for i in range(steps):
        total += (values[i] + values[i + 1]) / 2.0 * (1.0 / steps)
    return total


def gini_double_sum(values):
    """Literal double-sum evaluation over absolute values."""
    a = [abs(float(v)) for v in values]
    n = len(a)
    mu = sum(a) / n
    if mu == 0.0:
        return 0.0
    total = 0.0
    for x in a:
        for y in a:
            total += abs(x - y)
    return total / (2.0 * n * n * mu)


def ridge_closed_form(z, weights, y, lam):
    """Weighted ridge via explicit matrix inversion (intercept unpenalized)."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = z.shape
    design = np.hstack([z, np.ones((n, 1))])
    penalty = np.diag([lam] * d + [0.0])
    gram = design.T @ np.diag(w) @ design + penalty
    theta = np.linalg.inv(gram) @ design.T @ np.diag(w) @ y
    return theta[:d], theta[d]
