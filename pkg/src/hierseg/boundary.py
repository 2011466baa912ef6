"""Contrast field, boundary segments and the geodesic-length NFA.

The contrast l(x) of a pixel is the empirical tail probability of its
gradient magnitude within the image, so well contrasted pixels get values
near 0 and flat ones near 1. A curve is meaningfully contrasted when its
accumulated contrast (geodesic length) is extraordinarily short under the
image's own contrast distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from hierseg.acontrario import LOG_PROB_MIN


@dataclass(frozen=True)
class BoundarySegment:
    """Maximal run of edgels separating one pair of adjacent leaf regions.

    Edgel rows are (y, x, orient): orient 0 separates pixels (y, x) and
    (y, x+1), orient 1 separates (y, x) and (y+1, x).
    """

    region_pair: tuple[int, int]
    edgels: np.ndarray = field(repr=False)
    length: int
    accum_contrast: float


@dataclass(frozen=True)
class ContrastModel:
    """Moments of the contrast field plus the number of tested curves."""

    mean_l: float
    var_l: float
    curve_test_count: int


def contrast_field(grad: np.ndarray) -> np.ndarray:
    """Tail probability P(|grad| >= |grad(x)|) of every pixel's gradient.

    Rank based on the image's own gradient histogram: the single most
    contrasted pixel gets 1/n, flat pixels get values up to 1, and equal
    gradients share one value.
    """
    g = np.asarray(grad, dtype=np.float64)
    flat = g.ravel()
    n = flat.size
    ge_count = n - np.searchsorted(np.sort(flat), flat, side="left")
    return (ge_count / n).reshape(g.shape)


def build_boundary_segments(leaf_map: np.ndarray, l_field: np.ndarray):
    """Boundary segments between 4-adjacent leaf regions.

    Per-edgel contrast is the max of l at the two flanking pixels. Returns
    (segments, model) where the model holds the moments of l over all
    pixels and the number of segments as the curve test count.
    """
    lm = np.asarray(leaf_map)
    if lm.shape != l_field.shape:
        raise ValueError("label map and contrast field shapes differ")
    h, w = lm.shape
    n_ids = int(lm.max()) + 1

    keys = []
    contrasts = []
    coords = []
    # vertical edgels between (y, x) and (y, x+1)
    a, b = lm[:, :-1], lm[:, 1:]
    mask = a != b
    if mask.any():
        ys, xs = np.nonzero(mask)
        lo = np.minimum(a[mask], b[mask]).astype(np.int64)
        hi = np.maximum(a[mask], b[mask]).astype(np.int64)
        keys.append(lo * n_ids + hi)
        contrasts.append(np.maximum(l_field[:, :-1][mask], l_field[:, 1:][mask]))
        coords.append(np.stack([ys, xs, np.zeros_like(ys)], axis=1))
    # horizontal edgels between (y, x) and (y+1, x)
    a, b = lm[:-1, :], lm[1:, :]
    mask = a != b
    if mask.any():
        ys, xs = np.nonzero(mask)
        lo = np.minimum(a[mask], b[mask]).astype(np.int64)
        hi = np.maximum(a[mask], b[mask]).astype(np.int64)
        keys.append(lo * n_ids + hi)
        contrasts.append(np.maximum(l_field[:-1, :][mask], l_field[1:, :][mask]))
        coords.append(np.stack([ys, xs, np.ones_like(ys)], axis=1))

    segments = []
    if keys:
        keys = np.concatenate(keys)
        contrasts = np.concatenate(contrasts)
        coords = np.concatenate(coords)
        uniq, inverse = np.unique(keys, return_inverse=True)
        order = np.argsort(inverse, kind="stable")
        lengths = np.bincount(inverse, minlength=len(uniq))
        accums = np.bincount(inverse, weights=contrasts, minlength=len(uniq))
        stops = np.cumsum(lengths)
        starts = stops - lengths
        for k, key in enumerate(uniq):
            rows = coords[order[starts[k]:stops[k]]]
            segments.append(BoundarySegment(
                region_pair=(int(key // n_ids), int(key % n_ids)),
                edgels=rows,
                length=int(lengths[k]),
                accum_contrast=float(accums[k]),
            ))
    model = ContrastModel(
        mean_l=float(l_field.mean()),
        var_l=float(l_field.var()),
        curve_test_count=len(segments),
    )
    return segments, model


def _log_prob_length(model: ContrastModel, length: float, accum: float) -> float:
    """log P(L < accum) for the contrast sum over `length` edgels."""
    if length <= 0:
        return 0.0
    if model.var_l <= 0.0:
        return 0.0 if accum >= length * model.mean_l else LOG_PROB_MIN
    z = (accum - length * model.mean_l) / math.sqrt(length * model.var_l)
    return float(log_ndtr(z))


def lnfa_boundary(model: ContrastModel, segments) -> float:
    """Log NFA of one or more segments treated as a single curve.

    Pools lengths and accumulated contrasts; negative values mean the
    curve is meaningfully contrasted (extraordinarily short geodesic
    length).
    """
    if isinstance(segments, BoundarySegment):
        segments = [segments]
    length = sum(s.length for s in segments)
    accum = sum(s.accum_contrast for s in segments)
    if length < 1:
        raise ValueError("combined segment length must be >= 1")
    return math.log(model.curve_test_count) + _log_prob_length(model, length, accum)


def node_boundary_stats(h, segments):
    """Outer boundary (length, accumulated contrast) of every tree node.

    A node's outer boundary consists of the leaf segments joining its
    leaves to leaves outside the node; the shared boundary of the two
    children (segments whose leaf pair meets exactly at the node) is
    interior and drops out.
    """
    m = h.node_count
    blen = np.zeros(m)
    bacc = np.zeros(m)
    shared_len = np.zeros(m)
    shared_acc = np.zeros(m)
    leaf_start = h.leaf_start
    leaf_end = h.leaf_end
    parent = h.parent
    for seg in segments:
        a, b = seg.region_pair
        blen[a] += seg.length
        bacc[a] += seg.accum_contrast
        blen[b] += seg.length
        bacc[b] += seg.accum_contrast
        pos_b = leaf_start[b]  # a leaf's start is its DFS position
        node = a
        while not (leaf_start[node] <= pos_b < leaf_end[node]):
            node = parent[node]
        shared_len[node] += seg.length
        shared_acc[node] += seg.accum_contrast
    for i in range(h.leaf_count, m):
        c1, c2 = h.children[i]
        blen[i] = blen[c1] + blen[c2] - 2.0 * shared_len[i]
        bacc[i] = bacc[c1] + bacc[c2] - 2.0 * shared_acc[i]
    return blen, bacc


def boundary_post_process(partition, segments, model: ContrastModel, h, eps: float = 1.0):
    """Merge adjacent regions whose shared boundary is not meaningful.

    Repeatedly pools the segments shared by each pair of adjacent regions,
    and merges the pair with the weakest (highest) boundary LNFA as long
    as that LNFA is >= log(eps). The result is a coarsening of the input
    and applying the pass twice changes nothing more.
    """
    from hierseg.selector import Partition

    log_eps = math.log(eps)
    groups = [list(g) for g in partition.regions]
    leaf_region = np.empty(h.leaf_count, dtype=np.int64)
    for r, group in enumerate(groups):
        for node in group:
            leaf_region[h.node_leaves(node)] = r

    # live region ids tracked through a union-find over group indices
    root = list(range(len(groups)))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    while True:
        pair_len: dict[tuple[int, int], float] = {}
        pair_acc: dict[tuple[int, int], float] = {}
        for seg in segments:
            ra = find(int(leaf_region[seg.region_pair[0]]))
            rb = find(int(leaf_region[seg.region_pair[1]]))
            if ra == rb:
                continue
            key = (ra, rb) if ra < rb else (rb, ra)
            pair_len[key] = pair_len.get(key, 0.0) + seg.length
            pair_acc[key] = pair_acc.get(key, 0.0) + seg.accum_contrast
        weakest = None
        weakest_lnfa = None
        for key, length in pair_len.items():
            lnfa = math.log(model.curve_test_count) + _log_prob_length(
                model, length, pair_acc[key])
            if lnfa >= log_eps and (weakest_lnfa is None or lnfa > weakest_lnfa
                                    or (lnfa == weakest_lnfa and key < weakest)):
                weakest = key
                weakest_lnfa = lnfa
        if weakest is None:
            break
        ra, rb = weakest
        root[rb] = ra

    merged: dict[int, list[int]] = {}
    for r, group in enumerate(groups):
        merged.setdefault(find(r), []).extend(group)
    new_groups = [tuple(g) for _, g in sorted(merged.items())]
    remap = {}
    for new_r, (old_root, _) in enumerate(sorted(merged.items())):
        remap[old_root] = new_r
    flat = np.empty(h.pixel_count, dtype=np.int32)
    for new_r, group in enumerate(new_groups):
        for node in group:
            flat[h.node_pixels(node)] = new_r
    return Partition(
        label_map=flat.reshape(h.height, h.width),
        regions=tuple(new_groups),
        order=len(new_groups),
        lnfa=float("nan"),
        alpha_used=partition.alpha_used,
    )
