"""Partition distances, boundary precision/recall and region metrics.

Partition distances compare two label maps of the same image as fractions
of misclassified pixels: spd tolerates no refinement, apd ignores pixels
where the first partition refines the second, mpd ignores pixels where
the two are mutual refinements. All of them live in [0, 1], lower is
better.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class PdScores:
    spd: float
    apd_pq: float
    apd_qp: float
    mpd: float


@dataclass(frozen=True)
class BoundaryScores:
    precision: float
    recall: float
    fmeasure: float


def _contingency(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    p = np.asarray(p).ravel()
    q = np.asarray(q).ravel()
    if p.shape != q.shape:
        raise ValueError(f"label map sizes differ: {p.shape} vs {q.shape}")
    _, pi = np.unique(p, return_inverse=True)
    _, qi = np.unique(q, return_inverse=True)
    nr = pi.max() + 1
    nc = qi.max() + 1
    return np.bincount(pi * nc + qi, minlength=nr * nc).reshape(nr, nc)


def apd(p: np.ndarray, q: np.ndarray) -> float:
    """Asymmetric partition distance: 0 exactly when p refines q."""
    c = _contingency(p, q)
    n = c.sum()
    return float((n - c.max(axis=1).sum()) / n)


def spd(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetric partition distance via max-weight one-to-one matching."""
    c = _contingency(p, q)
    n = c.sum()
    rows, cols = linear_sum_assignment(c, maximize=True)
    return float((n - c[rows, cols].sum()) / n)


def mpd(p: np.ndarray, q: np.ndarray) -> float:
    """Mutual-refinement partition distance.

    Counts pixels in intersection cells that are neither a whole region of
    p nor a whole region of q; 0 exactly when p and q are mutual
    refinements.
    """
    c = _contingency(p, q)
    n = c.sum()
    row_tot = c.sum(axis=1, keepdims=True)
    col_tot = c.sum(axis=0, keepdims=True)
    bad = (c > 0) & (c != row_tot) & (c != col_tot)
    return float(c[bad].sum() / n)


def pd_scores(p: np.ndarray, q: np.ndarray) -> PdScores:
    """All partition distances between p (reference) and q (candidate)."""
    return PdScores(spd=spd(p, q), apd_pq=apd(p, q), apd_qp=apd(q, p), mpd=mpd(p, q))


def _boundary_pixels(labels: np.ndarray) -> np.ndarray:
    """(y, x) coordinates of pixels with a 4-neighbor of different label."""
    lm = np.asarray(labels)
    mask = np.zeros(lm.shape, dtype=bool)
    mask[:, :-1] |= lm[:, :-1] != lm[:, 1:]
    mask[:, 1:] |= lm[:, :-1] != lm[:, 1:]
    mask[:-1, :] |= lm[:-1, :] != lm[1:, :]
    mask[1:, :] |= lm[:-1, :] != lm[1:, :]
    ys, xs = np.nonzero(mask)
    return np.stack([ys, xs], axis=1)


def boundary_prf(pred: np.ndarray, gt: np.ndarray, tol: int = 2) -> BoundaryScores:
    """Boundary precision/recall/F with greedy one-to-one matching.

    Boundary pixels of the two maps are matched nearest-first within
    Chebyshev distance tol; the pair ordering is canonical in the two
    point sets, so swapping pred and gt exchanges precision and recall
    exactly.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"label map sizes differ: {pred.shape} vs {gt.shape}")
    if tol < 0:
        raise ValueError("tolerance must be >= 0")
    pp = _boundary_pixels(pred)
    gp = _boundary_pixels(gt)
    if len(pp) == 0 or len(gp) == 0:
        matched = 0
    else:
        by_coord = {}
        for j, (y, x) in enumerate(gp):
            by_coord[(int(y), int(x))] = j
        pairs = []
        for i, (y, x) in enumerate(pp):
            y, x = int(y), int(x)
            for dy in range(-tol, tol + 1):
                for dx in range(-tol, tol + 1):
                    j = by_coord.get((y + dy, x + dx))
                    if j is None:
                        continue
                    cheb = max(abs(dy), abs(dx))
                    d2 = dy * dy + dx * dx
                    a = (y, x)
                    b = (y + dy, x + dx)
                    lo, hi = (a, b) if a <= b else (b, a)
                    pairs.append((cheb, d2, lo, hi, i, j))
        pairs.sort(key=lambda t: t[:4])
        used_p = set()
        used_g = set()
        matched = 0
        for _, _, _, _, i, j in pairs:
            if i in used_p or j in used_g:
                continue
            used_p.add(i)
            used_g.add(j)
            matched += 1
    precision = matched / len(pp) if len(pp) else 0.0
    recall = matched / len(gp) if len(gp) else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return BoundaryScores(precision=precision, recall=recall, fmeasure=f)


def _rand_index(c: np.ndarray) -> float:
    n = c.sum()
    if n < 2:
        return 1.0
    pairs = n * (n - 1) / 2.0
    cells = (c * (c - 1)).sum() / 2.0
    rows = (c.sum(axis=1) * (c.sum(axis=1) - 1)).sum() / 2.0
    cols = (c.sum(axis=0) * (c.sum(axis=0) - 1)).sum() / 2.0
    return float((pairs - rows - cols + 2 * cells) / pairs)


def _voi(c: np.ndarray) -> float:
    n = c.sum()
    pr = c.sum(axis=1) / n
    pc = c.sum(axis=0) / n
    hp = -np.sum(pr[pr > 0] * np.log(pr[pr > 0]))
    hq = -np.sum(pc[pc > 0] * np.log(pc[pc > 0]))
    pj = c / n
    nz = pj > 0
    mi = float(np.sum(pj[nz] * np.log(pj[nz] / np.outer(pr, pc)[nz])))
    return float(max(hp + hq - 2 * mi, 0.0))


def _covering(c: np.ndarray) -> float:
    n = c.sum()
    rows = c.sum(axis=1, keepdims=True)
    cols = c.sum(axis=0, keepdims=True)
    jac = c / (rows + cols - c)
    return float(((rows[:, 0] / n) * jac.max(axis=1)).sum())


def region_metrics(pred: np.ndarray, gts) -> tuple[float, float, float]:
    """(PRI, VOI, covering) of pred against one or more ground truths.

    PRI is the mean Rand index over pixel pairs, VOI the mean variation of
    information in nats, covering the mean best-Jaccard covering of the
    ground truth regions; each averaged over the supplied ground truths.
    """
    gts = list(gts)
    if not gts:
        raise ValueError("at least one ground truth is required")
    pri = voi = cov = 0.0
    for gt in gts:
        c = _contingency(gt, pred)
        pri += _rand_index(c)
        voi += _voi(c)
        cov += _covering(c)
    m = len(gts)
    return pri / m, voi / m, cov / m


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    pd: PdScores
    boundary: BoundaryScores
    mean_regions: float


def _mean_pd(scores) -> PdScores:
    return PdScores(
        spd=float(np.mean([s.spd for s in scores])),
        apd_pq=float(np.mean([s.apd_pq for s in scores])),
        apd_qp=float(np.mean([s.apd_qp for s in scores])),
        mpd=float(np.mean([s.mpd for s in scores])),
    )


def _mean_boundary(scores) -> BoundaryScores:
    return BoundaryScores(
        precision=float(np.mean([b.precision for b in scores])),
        recall=float(np.mean([b.recall for b in scores])),
        fmeasure=float(np.mean([b.fmeasure for b in scores])),
    )


def image_scores(pred: np.ndarray, gts, tol: int = 2):
    """(PdScores, BoundaryScores) of one prediction, averaged over gts.

    Partition distances treat the ground truth as P and the prediction as
    Q, so apd_pq counts oversegmentation errors and apd_qp counts
    undersegmentation errors.
    """
    gts = list(gts)
    if not gts:
        raise ValueError("at least one ground truth is required")
    return (
        _mean_pd([pd_scores(gt, pred) for gt in gts]),
        _mean_boundary([boundary_prf(pred, gt, tol) for gt in gts]),
    )


def aggregate_sweep(alphas, per_image):
    """Fold per-image sweep scores into dataset rows plus ODS/OIS.

    per_image holds, for every image, a list over alphas of
    (PdScores, BoundaryScores, region count). Returns (rows, ods_alpha,
    ois_f) where ODS is the alpha with the best mean F-measure and OIS the
    mean over images of the per-image best F.
    """
    per_image = list(per_image)
    if not per_image:
        raise ValueError("empty dataset")
    rows = []
    for ai, alpha in enumerate(alphas):
        rows.append(SweepRow(
            alpha=float(alpha),
            pd=_mean_pd([img[ai][0] for img in per_image]),
            boundary=_mean_boundary([img[ai][1] for img in per_image]),
            mean_regions=float(np.mean([img[ai][2] for img in per_image])),
        ))
    ods_idx = int(np.argmax([r.boundary.fmeasure for r in rows]))
    ois_f = float(np.mean([max(b.fmeasure for _, b, _ in img) for img in per_image]))
    return rows, rows[ods_idx].alpha, ois_f


def multiscale_eval(entries, alphas, segment_fn, tol: int = 2):
    """Evaluate a segmenter over a scale sweep.

    entries is a sequence of (name, gt label map list); segment_fn(name,
    alpha) must return the predicted label map. Returns (rows, ods_alpha,
    ois_f) as in aggregate_sweep.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("empty dataset")
    per_image = []
    for name, gts in entries:
        img_rows = []
        for alpha in alphas:
            pred = segment_fn(name, alpha)
            pd_s, b_s = image_scores(pred, gts, tol)
            img_rows.append((pd_s, b_s, len(np.unique(pred))))
        per_image.append(img_rows)
    return aggregate_sweep(alphas, per_image)
