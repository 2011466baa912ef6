"""Region adjacency graph and greedy piecewise-constant merging hierarchy.

build_hierarchy grows a binary partition tree from single pixels by always
merging the adjacent pair with the lowest merging cost (the scale at which
the pair's union lowers the piecewise-constant energy E + lambda * length).
The finished tree is stored column-wise in numpy arrays; nodes are numbered
so that children always precede their parent, with the root last.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegionNode:
    """Read-only view of a single tree node."""

    id: int
    children: tuple[int, int] | None
    parent: int | None
    area: int
    sum_values: np.ndarray
    sum_squares: float
    ms_error: float
    lambda_appear: float
    leaf_count: int

    @property
    def mean(self) -> np.ndarray:
        return self.sum_values / self.area


@dataclass(frozen=True)
class Rag:
    """4-connectivity pixel adjacency: one node per pixel, one edge per
    adjacent pixel pair, every edge one edgel long."""

    width: int
    height: int
    edges: np.ndarray  # (E, 2) int64 flat pixel indices, edges[i,0] < edges[i,1]

    @property
    def node_count(self) -> int:
        return self.width * self.height

    @property
    def edge_count(self) -> int:
        return len(self.edges)


def build_rag(img) -> Rag:
    """Pixel-level region adjacency graph of an image."""
    h, w = img.height, img.width
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return Rag(width=w, height=h, edges=np.concatenate([right, down], axis=0))


def merge_cost(a: RegionNode, b: RegionNode, shared_boundary_length: int) -> float:
    """Scale at which merging a and b starts to pay off.

    Equals (area_a * area_b / (area_a + area_b)) * ||mean_a - mean_b||^2
    divided by the shared boundary length in edgels; this is exactly the
    increase of the fit error caused by the union, per removed edgel.
    """
    if shared_boundary_length < 1:
        raise ValueError("shared boundary length must be >= 1")
    diff = a.mean - b.mean
    w = a.area * b.area / (a.area + b.area)
    return float(w * (diff @ diff) / shared_boundary_length)


class Hierarchy:
    """Binary partition tree with per-node statistics, stored column-wise.

    Nodes 0..leaf_count-1 are the leaves; internal nodes follow in
    creation order, so children ids are always smaller than the parent id
    and the root is the last node. pix_perm lists all pixel indices so
    that every node covers a contiguous slice of it.
    """

    def __init__(self, *, width, height, channels, children, parent, area,
                 sums, sumsq, lambda_appear, leaf_count, pix_perm,
                 pix_start, pix_end, leaf_start, leaf_end, leaf_label_map,
                 leaf_order=None):
        self.width = int(width)
        self.height = int(height)
        self.channels = int(channels)
        self.children = children
        self.parent = parent
        self.area = area
        self.sums = sums
        self.sumsq = sumsq
        self.lambda_appear = lambda_appear
        self.leaf_count = int(leaf_count)
        self.pix_perm = pix_perm
        self.pix_start = pix_start
        self.pix_end = pix_end
        self.leaf_start = leaf_start
        self.leaf_end = leaf_end
        self.leaf_label_map = leaf_label_map
        if leaf_order is None:
            leaf_order = np.arange(leaf_count, dtype=np.int64)
        self.leaf_order = leaf_order
        self._ms_error = None
        self._adjacency = None

    @property
    def node_count(self) -> int:
        return len(self.area)

    @property
    def root(self) -> int:
        return self.node_count - 1

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def is_leaf(self, i: int) -> bool:
        return self.children[i, 0] < 0

    @property
    def means(self) -> np.ndarray:
        return self.sums / self.area[:, None]

    @property
    def ms_error(self) -> np.ndarray:
        """Piecewise-constant fit error of every node (>= 0)."""
        if self._ms_error is None:
            sq = np.einsum("ij,ij->i", self.sums, self.sums)
            self._ms_error = np.maximum(self.sumsq - sq / self.area, 0.0)
        return self._ms_error

    def leaf_counts(self) -> np.ndarray:
        return self.leaf_end - self.leaf_start

    def node(self, i: int) -> RegionNode:
        ch = self.children[i]
        par = int(self.parent[i])
        return RegionNode(
            id=int(i),
            children=None if ch[0] < 0 else (int(ch[0]), int(ch[1])),
            parent=None if par < 0 else par,
            area=int(self.area[i]),
            sum_values=self.sums[i],
            sum_squares=float(self.sumsq[i]),
            ms_error=float(self.ms_error[i]),
            lambda_appear=float(self.lambda_appear[i]),
            leaf_count=int(self.leaf_end[i] - self.leaf_start[i]),
        )

    def node_pixels(self, i: int) -> np.ndarray:
        """Flat pixel indices covered by node i."""
        return self.pix_perm[self.pix_start[i]:self.pix_end[i]]

    def node_leaves(self, i: int) -> np.ndarray:
        """Leaf ids under node i."""
        return self.leaf_order[self.leaf_start[i]:self.leaf_end[i]]

    def heights(self) -> np.ndarray:
        """Longest leaf-to-node branch length for every node."""
        hts = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.leaf_count, self.node_count):
            c1, c2 = self.children[i]
            hts[i] = 1 + max(hts[c1], hts[c2])
        return hts

    @property
    def adjacency(self) -> dict[tuple[int, int], int]:
        """Shared boundary length in edgels for every adjacent leaf pair."""
        if self._adjacency is None:
            lm = self.leaf_label_map.astype(np.int64)
            pairs = []
            for a, b in ((lm[:, :-1], lm[:, 1:]), (lm[:-1, :], lm[1:, :])):
                mask = a != b
                lo = np.minimum(a[mask], b[mask])
                hi = np.maximum(a[mask], b[mask])
                pairs.append(lo * self.node_count + hi)
            keys, counts = np.unique(np.concatenate(pairs), return_counts=True)
            self._adjacency = {
                (int(k // self.node_count), int(k % self.node_count)): int(c)
                for k, c in zip(keys, counts)
            }
        return self._adjacency

    def cut_at_scale(self, lam: float) -> list[int]:
        """Nodes of the horizontal cut at scale lam, in leaf (DFS) order."""
        if lam < 0:
            raise ValueError("scale must be >= 0")
        out = []
        stack = [self.root]
        while stack:
            i = stack.pop()
            if self.is_leaf(i) or self.lambda_appear[i] <= lam:
                out.append(i)
            else:
                c1, c2 = self.children[i]
                stack.append(int(c2))
                stack.append(int(c1))
        return out

    def label_map_for(self, nodes, labels=None) -> np.ndarray:
        """Label map assigning labels[k] (default: node id) inside nodes[k]."""
        flat = np.empty(self.pixel_count, dtype=np.int32)
        for k, i in enumerate(nodes):
            lab = i if labels is None else labels[k]
            flat[self.node_pixels(i)] = lab
        return flat.reshape(self.height, self.width)

    def to_json_dict(self) -> dict:
        means = self.means
        nodes = []
        for i in range(self.node_count):
            ch = self.children[i]
            nodes.append({
                "id": int(i),
                "children": None if ch[0] < 0 else [int(ch[0]), int(ch[1])],
                "area": int(self.area[i]),
                "mean": [float(x) for x in means[i]],
                "msError": float(self.ms_error[i]),
                "lambdaAppear": float(self.lambda_appear[i]),
            })
        return {
            "width": self.width,
            "height": self.height,
            "channels": self.channels,
            "leafCount": self.leaf_count,
            "root": self.root,
            "nodes": nodes,
        }


def _leaf_ranges(children, leaf_count):
    """DFS leaf order plus per-node [start, end) leaf position ranges.

    Children always precede their parent, so subtree leaf counts fold
    bottom-up in id order and ranges unfold top-down in reverse.
    """
    m = len(children)
    counts = [1] * m
    for i in range(m):
        c1 = children[i][0]
        if c1 >= 0:
            counts[i] = counts[c1] + counts[children[i][1]]
    start_l = [0] * m
    for i in range(m - 1, -1, -1):
        c1 = children[i][0]
        if c1 >= 0:
            s = start_l[i]
            start_l[c1] = s
            start_l[children[i][1]] = s + counts[c1]
    start = np.asarray(start_l, dtype=np.int64)
    end = start + np.asarray(counts, dtype=np.int64)
    order = np.empty(leaf_count, dtype=np.int64)
    is_leaf = np.asarray([children[i][0] < 0 for i in range(m)])
    leaves = np.nonzero(is_leaf)[0]
    order[start[leaves]] = leaves
    return order, start, end


_VECTOR_SCAN_MIN = 64  # below this, plain-Python neighbor scans beat numpy overhead
_CACHE_DEPTH = 8  # runner-up edges kept per scan to spare rescans on refresh


def build_hierarchy(img) -> Hierarchy:
    """Greedy merging hierarchy of an image, down from single pixels.

    At every step the globally cheapest adjacent pair (by merge_cost) is
    merged; the new node records the merge cost as its scale of appearance,
    regularized to max(cost, children's scales) so that horizontal cuts are
    nested. Cost ties are broken towards the smaller pair ids.

    The priority queue holds one candidate edge per live node (its cheapest
    edge). Pair costs never change once both endpoints exist, so a popped
    entry whose endpoints are both alive is exactly the global minimum; a
    half-dead entry triggers a rescan of the surviving node. Neighbor sets
    are merged small-into-large and may carry stale ids, resolved through a
    union-find at scan time; shared boundary lengths are additive over the
    stale aliases, so late resolution loses nothing.
    """
    hh, ww, d = img.height, img.width, img.channels
    n = hh * ww
    vals = img.values()
    m_total = 2 * n - 1

    area_np = np.ones(m_total, dtype=np.int64)
    mean_np = np.empty((m_total, d), dtype=np.float64)
    mean_np[:n] = vals
    mean_flat = mean_np.reshape(-1)
    rep = np.arange(m_total, dtype=np.int64)
    rep_l = list(range(m_total))

    area = [1] * n + [0] * (n - 1)
    sumsq = np.einsum("ij,ij->i", vals, vals).tolist() + [0.0] * (n - 1)
    if d == 1:
        sums_cols = [vals[:, 0].tolist() + [0.0] * (n - 1)]
        means = sums_cols[0][:]
    else:
        sums_cols = [vals[:, c].tolist() + [0.0] * (n - 1) for c in range(d)]
        means = list(map(tuple, vals)) + [None] * (n - 1)
    lam_app = [0.0] * n + [0.0] * (n - 1)
    children: list = [(-1, -1)] * n
    alive = [True] * n + [False] * (n - 1)

    if n == 1:
        return _assemble(img, children, area, sums_cols, sumsq, lam_app, n)

    # per-node neighbor stores: parallel lists of (other id, shared edgels),
    # possibly stale and duplicated; resolution happens at scan time
    nbr_keys: list = [None] * m_total
    nbr_lens: list = [None] * m_total
    cand_cache: list = [None] * m_total  # next-cheapest edges from the last scan
    idx = np.arange(n).reshape(hh, ww)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    per_pixel: list = [[] for _ in range(n)]
    for aa, bb in np.concatenate([right, down]).tolist():
        per_pixel[aa].append(bb)
        per_pixel[bb].append(aa)
    for i in range(n):
        nbr_keys[i] = per_pixel[i]
        nbr_lens[i] = [1] * len(per_pixel[i])
    del per_pixel

    def edge_cost_cols(pa, pb):
        # identical operation order to the scalar/vector scan paths
        acc = None
        for c in range(d):
            dm = vals[pa, c] - vals[pb, c]
            acc = dm * dm if acc is None else acc + dm * dm
        return 0.5 * acc

    # initial candidate per pixel: cheapest incident edge, partner-id ties
    # resolved by scanning neighbors in ascending id order (up, left, right,
    # down)
    flat = np.arange(n)
    big = np.inf
    cand_cost = np.full((n, 4), big)
    cand_part = np.full((n, 4), -1, dtype=np.int64)
    rc = edge_cost_cols(right[:, 0], right[:, 1])
    dc = edge_cost_cols(down[:, 0], down[:, 1])
    up_t = down[:, 1], down[:, 0], dc
    left_t = right[:, 1], right[:, 0], rc
    right_t = right[:, 0], right[:, 1], rc
    down_t = down[:, 0], down[:, 1], dc
    for col, (src, dst, cost) in enumerate((up_t, left_t, right_t, down_t)):
        cand_cost[src, col] = cost
        cand_part[src, col] = dst
    best_col = np.argmin(cand_cost, axis=1)
    bc = cand_cost[flat, best_col]
    bp = cand_part[flat, best_col]
    heap = list(dict.fromkeys(zip(bc.tolist(), np.minimum(flat, bp).tolist(),
                                  np.maximum(flat, bp).tolist())))
    heapq.heapify(heap)
    del cand_cost, cand_part, right, down, idx

    heappop = heapq.heappop
    heappush = heapq.heappush

    def scan(node):
        """Resolve the node's neighbor store in place; return its cheapest
        edge as (cost, partner) or None when no live neighbor remains."""
        kl = nbr_keys[node]
        ll = nbr_lens[node]
        ap = area[node]
        if len(kl) >= _VECTOR_SCAN_MIN:
            arr = kl if isinstance(kl, np.ndarray) else np.asarray(kl, np.int64)
            lf = ll if isinstance(ll, np.ndarray) else np.asarray(ll, np.float64)
            r = rep[arr]
            bad = np.nonzero(rep[r] != r)[0]
            if bad.size:
                resolved_vals = []
                for k in r[bad].tolist():
                    rk = rep_l[k]
                    while rk != k:
                        rep_l[k] = rep_l[rk]
                        k = rk
                        rk = rep_l[k]
                    resolved_vals.append(k)
                r[bad] = resolved_vals
                rep[arr[bad]] = resolved_vals
            mask = r != node
            uniq, inv = np.unique(r[mask], return_inverse=True)
            lens = np.bincount(inv, weights=lf[mask])
            nbr_keys[node] = uniq
            nbr_lens[node] = lens
            if len(uniq) == 0:
                return None
            ak = area_np[uniq]
            wgt = ak * ap / (ak + ap)
            acc = None
            mn = mean_np[node]
            for c in range(d):
                dm = mean_np[uniq, c] - mn[c]
                acc = dm * dm if acc is None else acc + dm * dm
            costs = wgt * acc / lens
            # keep the cheapest edges plus every tie of the cutoff value, so
            # cached refreshes replay the exact (cost, partner-id) order
            if len(costs) > 4 * _CACHE_DEPTH:
                part = np.argpartition(costs, _CACHE_DEPTH)[:_CACHE_DEPTH + 1]
                cut = costs[part].max()
                sel = np.nonzero(costs <= cut)[0]
            else:
                sel = np.arange(len(costs))
            order = np.lexsort((uniq[sel], costs[sel]))
            ranked = [(float(costs[sel[i]]), int(uniq[sel[i]])) for i in order]
            cand_cache[node] = ranked[1:]
            return ranked[0]
        if isinstance(kl, np.ndarray):
            kl = kl.tolist()
            ll = ll.tolist()
        resolved: dict = {}
        get = resolved.get
        rl = rep_l
        for r, length in zip(kl, ll):
            rk = rl[r]
            while rk != r:
                rl[r] = rl[rk]
                r = rk
                rk = rl[r]
            if r != node:
                resolved[r] = get(r, 0) + length
        if not resolved:
            nbr_keys[node] = []
            nbr_lens[node] = []
            return None
        nbr_keys[node] = list(resolved.keys())
        nbr_lens[node] = list(resolved.values())
        ar = area
        ms = means
        if d == 1:
            mn = ms[node]
            pairs = []
            for k, length in resolved.items():
                ak = ar[k]
                dm = ms[k] - mn
                pairs.append(((ak * ap / (ak + ap)) * (dm * dm) / length, k))
        elif d == 3:
            mn0, mn1, mn2 = ms[node]
            pairs = []
            for k, length in resolved.items():
                ak = ar[k]
                m0, m1, m2 = ms[k]
                d0 = m0 - mn0
                d1 = m1 - mn1
                d2 = m2 - mn2
                pairs.append((
                    (ak * ap / (ak + ap)) * (d0 * d0 + d1 * d1 + d2 * d2) / length, k))
        else:
            mn = ms[node]
            pairs = []
            for k, length in resolved.items():
                ak = ar[k]
                mk = ms[k]
                acc = None
                for c in range(d):
                    dm = mk[c] - mn[c]
                    acc = dm * dm if acc is None else acc + dm * dm
                pairs.append(((ak * ap / (ak + ap)) * acc / length, k))
        head = min(pairs)
        pairs.remove(head)
        cand_cache[node] = pairs
        return head

    p = n
    merges_left = n - 1
    while merges_left:
        lam, a, b = heappop(heap)
        va = alive[a]
        vb = alive[b]
        if va and vb:
            aa, ab = area[a], area[b]
            ap = aa + ab
            area[p] = ap
            area_np[p] = ap
            if d == 1:
                s = sums_cols[0]
                sp = s[a] + s[b]
                s[p] = sp
                mp = sp / ap
                means[p] = mp
                mean_flat[p] = mp
            elif d == 3:
                s0, s1, s2 = sums_cols
                c0 = s0[a] + s0[b]
                c1 = s1[a] + s1[b]
                c2 = s2[a] + s2[b]
                s0[p] = c0
                s1[p] = c1
                s2[p] = c2
                m0 = c0 / ap
                m1 = c1 / ap
                m2 = c2 / ap
                mp = (m0, m1, m2)
                means[p] = mp
                mean_flat[3 * p] = m0
                mean_flat[3 * p + 1] = m1
                mean_flat[3 * p + 2] = m2
            else:
                mp = []
                for c in range(d):
                    s = sums_cols[c]
                    sc = s[a] + s[b]
                    s[p] = sc
                    mc = sc / ap
                    mp.append(mc)
                    mean_np[p, c] = mc
                means[p] = tuple(mp)
            sumsq[p] = sumsq[a] + sumsq[b]
            lam_app[p] = max(lam, lam_app[a], lam_app[b])
            children.append((a, b))
            alive[a] = alive[b] = False
            alive[p] = True
            rep[a] = p
            rep[b] = p
            rep_l[a] = p
            rep_l[b] = p
            ka, kb = nbr_keys[a], nbr_keys[b]
            la, lb = nbr_lens[a], nbr_lens[b]
            if isinstance(ka, np.ndarray) or isinstance(kb, np.ndarray):
                nbr_keys[p] = np.concatenate([
                    ka if isinstance(ka, np.ndarray) else np.asarray(ka, np.int64),
                    kb if isinstance(kb, np.ndarray) else np.asarray(kb, np.int64)])
                nbr_lens[p] = np.concatenate([
                    la if isinstance(la, np.ndarray) else np.asarray(la, np.float64),
                    lb if isinstance(lb, np.ndarray) else np.asarray(lb, np.float64)])
            else:
                if len(ka) < len(kb):
                    ka, kb, la, lb = kb, ka, lb, la
                ka.extend(kb)
                la.extend(lb)
                nbr_keys[p] = ka
                nbr_lens[p] = la
            nbr_keys[a] = nbr_keys[b] = nbr_lens[a] = nbr_lens[b] = None
            cand_cache[a] = cand_cache[b] = None
            found = scan(p)
            if found is not None:
                cost, partner = found
                if partner < p:
                    heappush(heap, (cost, partner, p))
                else:
                    heappush(heap, (cost, p, partner))
            p += 1
            merges_left -= 1
        elif va or vb:
            x = a if va else b
            found = None
            cache = cand_cache[x]
            if cache:
                live = [t for t in cache if alive[t[1]]]
                if live:
                    found = min(live)
                    live.remove(found)
                cand_cache[x] = live
            if found is None:
                found = scan(x)
            if found is not None:
                cost, partner = found
                if partner < x:
                    heappush(heap, (cost, partner, x))
                else:
                    heappush(heap, (cost, x, partner))

    return _assemble(img, children, area, sums_cols, sumsq, lam_app, n)


def _assemble(img, children, area, sums_cols, sumsq, lam_app, n) -> Hierarchy:
    m = len(children)
    children_arr = np.array(children, dtype=np.int32).reshape(m, 2)
    parent = np.full(m, -1, dtype=np.int32)
    internal = children_arr[:, 0] >= 0
    parent[children_arr[internal, 0]] = np.nonzero(internal)[0]
    parent[children_arr[internal, 1]] = np.nonzero(internal)[0]
    sums_arr = np.stack(
        [np.asarray(c[:m], dtype=np.float64) for c in sums_cols], axis=1)

    leaf_order, start, end = _leaf_ranges(children, n)
    return Hierarchy(
        width=img.width, height=img.height, channels=img.channels,
        children=children_arr, parent=parent,
        area=np.asarray(area[:m], dtype=np.int64),
        sums=sums_arr,
        sumsq=np.asarray(sumsq[:m], dtype=np.float64),
        lambda_appear=np.asarray(lam_app[:m], dtype=np.float64),
        leaf_count=n,
        pix_perm=leaf_order.copy(),
        pix_start=start, pix_end=end,
        leaf_start=start.copy(), leaf_end=end.copy(),
        leaf_label_map=np.arange(n, dtype=np.int32).reshape(img.height, img.width),
        leaf_order=leaf_order.copy(),
    )


def prune_hierarchy(h: Hierarchy, lam: float) -> Hierarchy:
    """Sub-hierarchy whose leaves are the horizontal cut at scale lam.

    Cut nodes become the new leaves (statistics preserved, including their
    original scale of appearance); nodes above the cut are kept unchanged.
    """
    cut = h.cut_at_scale(lam)
    leaf_count = len(cut)

    # new ids: cut nodes in DFS order get 0..L-1, kept internal nodes follow
    # in old-id order (children stay below parents)
    new_id = {old: k for k, old in enumerate(cut)}
    above = np.zeros(h.node_count, dtype=bool)
    parent_arr = h.parent
    for c in cut:
        p = parent_arr[c]
        while p >= 0 and not above[p]:
            above[p] = True
            p = parent_arr[p]
    kept_internal = np.nonzero(above)[0].tolist()
    for k, old in enumerate(kept_internal):
        new_id[old] = leaf_count + k

    m = leaf_count + len(kept_internal)
    children = np.full((m, 2), -1, dtype=np.int32)
    parent = np.full(m, -1, dtype=np.int32)
    area = np.empty(m, dtype=np.int64)
    sums = np.empty((m, h.channels), dtype=np.float64)
    sumsq = np.empty(m, dtype=np.float64)
    lam_app = np.empty(m, dtype=np.float64)
    pix_start = np.empty(m, dtype=np.int64)
    pix_end = np.empty(m, dtype=np.int64)

    for old, new in new_id.items():
        area[new] = h.area[old]
        sums[new] = h.sums[old]
        sumsq[new] = h.sumsq[old]
        lam_app[new] = h.lambda_appear[old]
        pix_start[new] = h.pix_start[old]
        pix_end[new] = h.pix_end[old]
        if new >= leaf_count:
            c1, c2 = h.children[old]
            children[new] = (new_id[int(c1)], new_id[int(c2)])
    internal = children[:, 0] >= 0
    parent[children[internal, 0]] = np.nonzero(internal)[0]
    parent[children[internal, 1]] = np.nonzero(internal)[0]

    children_list = [tuple(c) for c in children]
    leaf_order, lstart, lend = _leaf_ranges(children_list, leaf_count)

    flat = np.empty(h.pixel_count, dtype=np.int32)
    for k, old in enumerate(cut):
        flat[h.pix_perm[h.pix_start[old]:h.pix_end[old]]] = k
    return Hierarchy(
        width=h.width, height=h.height, channels=h.channels,
        children=children, parent=parent, area=area, sums=sums, sumsq=sumsq,
        lambda_appear=lam_app, leaf_count=leaf_count,
        pix_perm=h.pix_perm.copy(),
        pix_start=pix_start, pix_end=pix_end,
        leaf_start=lstart, leaf_end=lend,
        leaf_label_map=flat.reshape(h.height, h.width),
        leaf_order=leaf_order,
    )


def partition_at_scale(h: Hierarchy, lam: float) -> np.ndarray:
    """Label map of the horizontal cut at scale lam (labels are node ids)."""
    return h.label_map_for(h.cut_at_scale(lam))
