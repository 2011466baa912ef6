"""Partition selection over the hierarchy.

Two selection mechanisms share the same background model. The greedy one
walks the tree bottom-up accepting or rejecting one merging at a time.
The multipartition one computes, for every node and every order k, the
log-probability of the best k-partition spanned by the node's subtree
(a min-plus combination of the children tables), then picks the order
with the lowest NFA at the root, where the number-of-tests penalty is
applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hierseg.acontrario import (
    ErrorModel,
    TestCountConfig,
    log_prob_error_sum,
    log_prob_error_sum_vec,
    log_test_count,
    log_test_count_vec,
)
from hierseg.boundary import boundary_post_process, node_boundary_stats, _log_prob_length


@dataclass(frozen=True)
class Partition:
    """A labeling of the image pixels into regions drawn from the tree.

    regions holds one tuple of hierarchy node ids per output region; for a
    pure cut every tuple is a singleton, after boundary post-processing a
    region may pool several nodes.
    """

    label_map: np.ndarray = field(repr=False)
    regions: tuple[tuple[int, ...], ...]
    order: int
    lnfa: float
    alpha_used: float


class NfaTables:
    """Per-node tables of best k-partition log-probabilities.

    best[i][k] is the lowest achievable sum of region log-probabilities
    over all k-partitions of node i's subtree; split[i][k] records the
    order assigned to the first child at the optimum (ties resolved
    towards the smallest first-child order). combination_count counts the
    (i, j) pairs examined while filling the tables.
    """

    def __init__(self, hierarchy, model, best, split, combination_count, max_order):
        self.hierarchy = hierarchy
        self.model = model
        self.best = best
        self.split = split
        self.combination_count = combination_count
        self.max_order = max_order

    @property
    def root_table(self) -> np.ndarray:
        return self.best[self.hierarchy.root]

    @property
    def root_max_order(self) -> int:
        return len(self.root_table) - 1

    def root_lnfa(self, cfg: TestCountConfig, n_pixels: int) -> np.ndarray:
        """LNFA(root, k) for k = 1..root_max_order (index 0 unused, inf)."""
        ks = np.arange(1, self.root_max_order + 1)
        out = np.full(self.root_max_order + 1, np.inf)
        out[1:] = log_test_count_vec(cfg, n_pixels, ks) + self.root_table[1:]
        return out

    def cut_nodes(self, k: int) -> list[int]:
        """Back-pointer reconstruction of the best k-partition (node ids)."""
        if k < 1 or k > self.root_max_order:
            raise ValueError(f"order {k} outside [1, {self.root_max_order}]")
        h = self.hierarchy
        out = []
        stack = [(h.root, k)]
        while stack:
            node, kk = stack.pop()
            if kk == 1:
                out.append(node)
                continue
            i = int(self.split[node][kk])
            c1, c2 = h.children[node]
            stack.append((int(c2), kk - i))
            stack.append((int(c1), i))
        return out

    def to_rows(self, cfg: TestCountConfig, n_pixels: int):
        """(k, log test count, log probability, lnfa) rows of the root table."""
        rows = []
        for k in range(1, self.root_max_order + 1):
            lt = log_test_count(cfg, n_pixels, k)
            lp = float(self.root_table[k])
            rows.append((k, lt, lp, lt + lp))
        return rows


def compute_nfa_tables(h, model: ErrorModel, max_order: int | None = None) -> NfaTables:
    """Fill the per-node partition tables bottom-up.

    Region errors are additive so each node's own log-probability is
    computed once; for k >= 2 the children tables are combined over all
    (i, j) with i + j = k, scanning the smaller child's orders. The table
    top entry (the full order) is forced, there is nothing to scan.
    max_order truncates every table, trading optimality above the cap for
    speed on very deep trees.
    """
    if model.var_error <= 0.0 and np.any(h.ms_error < h.area * model.mean_error):
        raise ValueError("degenerate background model: some regions are impossible")
    own = log_prob_error_sum_vec(model, h.area, h.ms_error)
    m = h.node_count
    leaf_counts = h.leaf_counts()
    best: list = [None] * m
    split: list = [None] * m
    combinations = 0
    inf = np.inf
    for i in range(h.leaf_count):
        t = np.empty(2)
        t[0] = inf
        t[1] = own[i]
        best[i] = t
        split[i] = np.zeros(2, dtype=np.int32)
    for a in range(h.leaf_count, m):
        c1, c2 = (int(h.children[a, 0]), int(h.children[a, 1]))
        t1, t2 = best[c1], best[c2]
        n1, n2 = len(t1) - 1, len(t2) - 1
        na_full = n1 + n2
        length = na_full if max_order is None else min(na_full, max_order)
        first_is_small = n1 <= n2
        tb, tc = (t1, t2) if first_is_small else (t2, t1)
        nb, nc = (n1, n2) if first_is_small else (n2, n1)
        pad_c = np.full(na_full + 1, inf)
        pad_c[1:nc + 1] = tc[1:]
        ta = np.full(length + 1, inf)
        sa = np.zeros(length + 1, dtype=np.int32)
        ta[1] = own[a]
        for k in range(2, length + 1):
            if k == na_full:
                ta[k] = t1[n1] + t2[n2]
                sa[k] = n1
                continue
            mm = min(nb, k - 1)
            cand = tb[1:mm + 1] + pad_c[k - mm:k][::-1]
            combinations += mm
            if first_is_small:
                idx = int(np.argmin(cand))
                sa[k] = idx + 1
            else:
                idx = len(cand) - 1 - int(np.argmin(cand[::-1]))
                sa[k] = k - (idx + 1)
            ta[k] = cand[idx]
        best[a] = ta
        split[a] = sa
    return NfaTables(h, model, best, split, combinations, max_order)


def _partition_from_nodes(h, nodes, order, lnfa, alpha_used) -> Partition:
    nodes = sorted(nodes, key=lambda i: h.leaf_start[i])
    labels = h.label_map_for(nodes, labels=list(range(len(nodes))))
    return Partition(
        label_map=labels,
        regions=tuple((int(i),) for i in nodes),
        order=order,
        lnfa=lnfa,
        alpha_used=alpha_used,
    )


def select_best_partition(tables: NfaTables, cfg: TestCountConfig, n_pixels: int) -> Partition:
    """Partition with the lowest LNFA at the root (ties go to smaller k).

    A degenerate background model (zero error variance) admits no
    meaningful partition and falls back to the single-region one.
    """
    h = tables.hierarchy
    if tables.model.var_error <= 0.0:
        return _partition_from_nodes(h, [h.root], 1, 0.0, cfg.alpha)
    lnfa = tables.root_lnfa(cfg, n_pixels)
    k = int(np.argmin(lnfa[1:])) + 1
    return _partition_from_nodes(h, tables.cut_nodes(k), k, float(lnfa[k]), cfg.alpha)


def select_fixed_k(tables: NfaTables, k: int) -> Partition:
    """Best partition of a requested order, regardless of its NFA.

    The returned lnfa holds the bare partition log-probability; no
    number-of-tests term is added since no test-count config is involved.
    """
    h = tables.hierarchy
    nodes = tables.cut_nodes(k)
    return _partition_from_nodes(h, nodes, k, float(tables.root_table[k]), float("nan"))


def rank_partitions(tables: NfaTables, cfg: TestCountConfig, n_pixels: int, m: int):
    """The m orders with the smallest root LNFA, as (k, lnfa) ascending."""
    lnfa = tables.root_lnfa(cfg, n_pixels)
    ks = np.arange(1, len(lnfa))
    order = np.lexsort((ks, lnfa[1:]))
    take = order[:max(0, min(m, len(ks)))]
    return [(int(ks[i]), float(lnfa[1:][i])) for i in take]


def partition_lnfa(model: ErrorModel, cfg: TestCountConfig, n_pixels: int, h, regions) -> float:
    """LNFA of an arbitrary partition given as groups of tree nodes."""
    total = 0.0
    for group in regions:
        area = int(sum(h.area[i] for i in group))
        sums = np.sum(h.sums[list(group)], axis=0)
        sumsq = float(sum(h.sumsq[i] for i in group))
        err = max(sumsq - float(sums @ sums) / area, 0.0)
        total += log_prob_error_sum(model, area, err)
    return total + log_test_count(cfg, n_pixels, len(regions))


def run_greedy(h, model: ErrorModel, alpha: float, *, segments=None,
               contrast_model=None, cfg: TestCountConfig | None = None) -> Partition:
    """Greedy per-merging selection.

    Every internal node is a candidate merging of its two children,
    evaluated bottom-up (nodes of lower height first; within a height the
    processing order does not change the outcome because scores depend on
    the fixed tree only). A merging is accepted when its score stays below
    alpha; a rejected merging breaks the node and every ancestor of a
    broken node is broken too. The output regions are the maximal unbroken
    nodes. With segments and a contrast model the boundary factors join
    the score.
    """
    from hierseg.acontrario import merging_score

    use_boundary = segments is not None
    if use_boundary:
        blen, bacc = node_boundary_stats(h, segments)
    broken = np.zeros(h.node_count, dtype=bool)
    for i in range(h.leaf_count, h.node_count):
        c1, c2 = (int(h.children[i, 0]), int(h.children[i, 1]))
        if broken[c1] or broken[c2]:
            broken[i] = True
            continue
        pair = None
        if use_boundary:
            b_union = _log_prob_length(contrast_model, blen[i], bacc[i])
            b_sep = _log_prob_length(
                contrast_model, blen[c1] + blen[c2], bacc[c1] + bacc[c2])
            pair = (b_union, b_sep)
        score = merging_score(model, h.node(c1), h.node(c2), pair)
        broken[i] = not (score < alpha)
    nodes = [i for i in range(h.node_count)
             if not broken[i] and (i == h.root or broken[h.parent[i]])]
    cfg = cfg or TestCountConfig()
    lnfa = partition_lnfa(model, cfg, h.pixel_count, h, [(i,) for i in nodes])
    return _partition_from_nodes(h, nodes, len(nodes), lnfa, alpha)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-edgel disappearance scales over an alpha sweep.

    vert[y, x] covers the edgel between pixels (y, x) and (y, x+1),
    horiz[y, x] the one between (y, x) and (y+1, x). The value is the
    largest alpha whose selected partition still separates the two pixels
    (0 when they are never separated).
    """

    alphas: tuple[float, ...]
    vert: np.ndarray = field(repr=False)
    horiz: np.ndarray = field(repr=False)
    region_counts: tuple[int, ...]

    def render(self) -> np.ndarray:
        """16-bit raster on the doubled grid, linear in alpha.

        Pixel centers map to even coordinates, edgels to the odd position
        between them; junction corners take the max of their incident
        edgels so contours stay visually connected.
        """
        h, w = self.vert.shape[0], self.horiz.shape[1]
        out = np.zeros((2 * h - 1, 2 * w - 1))
        out[0::2, 1::2] = self.vert
        out[1::2, 0::2] = self.horiz
        corners = np.zeros((h - 1, w - 1))
        np.maximum(corners, self.vert[:-1, :], out=corners)
        np.maximum(corners, self.vert[1:, :], out=corners)
        np.maximum(corners, self.horiz[:, :-1], out=corners)
        np.maximum(corners, self.horiz[:, 1:], out=corners)
        out[1::2, 1::2] = corners
        top = max(self.alphas)
        if top <= 0:
            return np.zeros(out.shape, dtype=np.uint16)
        scaled = np.clip(out / top, 0.0, 1.0) * 65535.0
        return np.round(scaled).astype(np.uint16)


def saliency_map(h, model: ErrorModel, cfg: TestCountConfig, alphas, *,
                 tables: NfaTables | None = None, segments=None,
                 contrast_model=None, boundary_eps: float = 1.0) -> SaliencyMap:
    """Sweep the scale parameter and record each edgel's survival scale.

    alphas must be ascending. The partition tables are reused across the
    sweep (they do not depend on alpha); when segments are supplied every
    selected partition goes through boundary post-processing first.
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alpha grid must be non-empty and ascending")
    if tables is None and model.var_error > 0.0:
        tables = compute_nfa_tables(h, model)
    vert = np.zeros((h.height, h.width - 1)) if h.width > 1 else np.zeros((h.height, 0))
    horiz = np.zeros((h.height - 1, h.width)) if h.height > 1 else np.zeros((0, h.width))
    counts = []
    for a in alphas:
        cfg_a = TestCountConfig(alpha=a, mode=cfg.mode)
        if model.var_error <= 0.0:
            part = _partition_from_nodes(h, [h.root], 1, 0.0, a)
        else:
            part = select_best_partition(tables, cfg_a, h.pixel_count)
        if segments is not None and part.order > 1:
            part = boundary_post_process(part, segments, contrast_model, h, boundary_eps)
        lm = part.label_map
        if h.width > 1:
            vert[lm[:, :-1] != lm[:, 1:]] = a
        if h.height > 1:
            horiz[lm[:-1, :] != lm[1:, :]] = a
        counts.append(part.order)
    return SaliencyMap(alphas=tuple(alphas), vert=vert, horiz=horiz,
                       region_counts=tuple(counts))


def predicted_combination_count(h) -> int:
    """Combinations needed to fill all partition tables, from tree shape only.

    For every internal node with children leaf counts nb <= nc this is
    (nb - 1) * nb / 2 + (nc - 1) * nb, summed over the tree; the table
    computation is instrumented to check against it exactly.
    """
    counts = h.leaf_counts()
    total = 0
    for i in range(h.leaf_count, h.node_count):
        c1, c2 = h.children[i]
        nb = int(min(counts[c1], counts[c2]))
        nc = int(max(counts[c1], counts[c2]))
        total += (nb - 1) * nb // 2 + (nc - 1) * nb
    return total
