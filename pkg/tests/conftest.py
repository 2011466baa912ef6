"""Shared reference implementations (oracles) and builders for the tests.

Everything here is deliberately independent of the library's internal
algorithms: the greedy reference rescans all pairs exhaustively, the cut
enumerator walks every antichain of a subtree, and the partition
generator enumerates restricted growth strings.
"""

from __future__ import annotations

import numpy as np
import pytest

from hierseg.hierarchy import Hierarchy, _leaf_ranges


def reference_greedy(img):
    """Exhaustive-scan greedy merging with the library's cost/tie rules.

    Returns (children list, scale-of-appearance list) for structural
    comparison against build_hierarchy.
    """
    h, w, d = img.height, img.width, img.channels
    n = h * w
    vals = img.values()
    area = {i: 1 for i in range(n)}
    sums = {i: [float(vals[i, c]) for c in range(d)] for i in range(n)}
    nbrs: dict = {i: {} for i in range(n)}
    for y in range(h):
        for x in range(w):
            i = y * w + x
            if x + 1 < w:
                nbrs[i][i + 1] = 1
                nbrs[i + 1][i] = 1
            if y + 1 < h:
                nbrs[i][i + w] = 1
                nbrs[i + w][i] = 1
    children = [(-1, -1)] * n
    lam_app = [0.0] * n
    nid = n

    def cost_of(a, b):
        wgt = area[a] * area[b] / (area[a] + area[b])
        acc = None
        for c in range(d):
            dm = sums[a][c] / area[a] - sums[b][c] / area[b]
            acc = dm * dm if acc is None else acc + dm * dm
        return wgt * acc / nbrs[a][b]

    while len(area) > 1:
        best = None
        for a in sorted(area):
            for b in sorted(nbrs[a]):
                if b < a:
                    continue
                key = (cost_of(a, b), a, b)
                if best is None or key < best:
                    best = key
        cost, a, b = best
        p = nid
        nid += 1
        area[p] = area[a] + area[b]
        sums[p] = [sums[a][c] + sums[b][c] for c in range(d)]
        children.append((a, b))
        lam_app.append(max(cost, lam_app[a], lam_app[b]))
        merged = {}
        for k, v in list(nbrs[a].items()) + list(nbrs[b].items()):
            if k in (a, b):
                continue
            merged[k] = merged.get(k, 0) + v
        for k in merged:
            nbrs[k].pop(a, None)
            nbrs[k].pop(b, None)
            nbrs[k][p] = merged[k]
        nbrs[p] = merged
        del area[a], area[b], sums[a], sums[b], nbrs[a], nbrs[b]
    return children, lam_app


def synthetic_hierarchy(rng, n_leaves, d=1, merge_shape="random"):
    """Hierarchy with random region statistics, no underlying image.

    merge_shape picks the tree topology: random pairings, a balanced
    tree, or a caterpillar (one leaf joined at a time).
    """
    leaf_area = rng.integers(1, 40, size=n_leaves).astype(np.int64)
    leaf_mean = rng.uniform(0, 255, size=(n_leaves, d))
    leaf_sums = leaf_mean * leaf_area[:, None]
    slack = rng.uniform(0.0, 50.0, size=n_leaves) * leaf_area
    leaf_sumsq = np.einsum("ij,ij->i", leaf_sums, leaf_sums) / leaf_area + slack

    m = 2 * n_leaves - 1
    children = [(-1, -1)] * n_leaves
    area = list(leaf_area)
    sums = [leaf_sums[i].copy() for i in range(n_leaves)]
    sumsq = list(leaf_sumsq)
    lam = [0.0] * n_leaves
    roots = list(range(n_leaves))
    while len(roots) > 1:
        if merge_shape == "caterpillar":
            i, j = 0, 1
        elif merge_shape == "balanced":
            i, j = 0, 1  # queue discipline keeps depths even
        else:
            i, j = sorted(rng.choice(len(roots), size=2, replace=False))
        a, b = roots[i], roots[j]
        p = len(children)
        children.append((a, b))
        area.append(area[a] + area[b])
        sums.append(sums[a] + sums[b])
        sumsq.append(sumsq[a] + sumsq[b])
        lam.append(0.0)
        if merge_shape == "balanced":
            roots = roots[2:] + [p]
        else:
            del roots[j], roots[i]
            roots.append(p)
    parent = np.full(m, -1, dtype=np.int32)
    ch = np.asarray(children, dtype=np.int32)
    internal = ch[:, 0] >= 0
    parent[ch[internal, 0]] = np.nonzero(internal)[0]
    parent[ch[internal, 1]] = np.nonzero(internal)[0]
    order, start, end = _leaf_ranges(children, n_leaves)
    total_area = int(sum(area[i] for i in range(n_leaves)))
    return Hierarchy(
        width=total_area, height=1, channels=d,
        children=ch, parent=parent,
        area=np.asarray(area, dtype=np.int64),
        sums=np.asarray(sums, dtype=np.float64).reshape(m, d),
        sumsq=np.asarray(sumsq, dtype=np.float64),
        lambda_appear=np.asarray(lam, dtype=np.float64),
        leaf_count=n_leaves,
        pix_perm=np.arange(total_area, dtype=np.int64),
        pix_start=start, pix_end=end,  # placeholder, label maps unused here
        leaf_start=start.copy(), leaf_end=end.copy(),
        leaf_label_map=np.zeros((1, 1), dtype=np.int32),
    )


def enumerate_cut_values(h, own, node):
    """All antichain cuts under `node` as {order: [(value, regions), ...]}.

    Values are accumulated with the same left+right grouping the dynamic
    program uses, so the minima are bit-comparable.
    """
    if h.is_leaf(node):
        return {1: [(own[node], (node,))]}
    c1, c2 = (int(h.children[node, 0]), int(h.children[node, 1]))
    left = enumerate_cut_values(h, own, c1)
    right = enumerate_cut_values(h, own, c2)
    out: dict = {1: [(own[node], (node,))]}
    for kl, lvs in left.items():
        for kr, rvs in right.items():
            bucket = out.setdefault(kl + kr, [])
            for vl, rl in lvs:
                for vr, rr in rvs:
                    bucket.append((vl + vr, rl + rr))
    return out


def bell_partitions(n):
    """All set partitions of range(n) as label tuples (restricted growth)."""
    out = []

    def grow(prefix, mx):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for v in range(mx + 2):
            grow(prefix + [v], max(mx, v))

    grow([], -1)
    return out


def refines(p, q):
    """True when every region of p is inside one region of q."""
    mapping = {}
    for a, b in zip(p, q):
        if a in mapping and mapping[a] != b:
            return False
        mapping[a] = b
    return True


def mutual_refinement(p, q):
    """True when every intersection cell equals a full region of p or q."""
    import collections

    cells = collections.Counter(zip(p, q))
    sizes_p = collections.Counter(p)
    sizes_q = collections.Counter(q)
    for (a, b), c in cells.items():
        if c != sizes_p[a] and c != sizes_q[b]:
            return False
    return True


@pytest.fixture(scope="session")
def blocks_image():
    from hierseg.synth import make_blocks

    return make_blocks(size=60, sigma=10.0, seed=1)
