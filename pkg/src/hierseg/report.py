"""File outputs: label maps, CSV tables, renderings and report figures.

Everything is written atomically (temp file in the target directory, then
rename) so concurrent runs never observe half-written artifacts. Figures
are rendered with the Agg backend straight to files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from PIL import Image as PILImage  # noqa: E402


def _atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text: str):
    _atomic_write_bytes(path, text.encode())


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    write_text(path, buf.getvalue())


def write_json(path, obj):
    write_text(path, json.dumps(obj, indent=1))


def save_png(path, arr: np.ndarray):
    """8-bit grayscale/RGB or 16-bit grayscale PNG."""
    im = PILImage.fromarray(arr)  # uint16 maps to 16-bit grayscale
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    _atomic_write_bytes(path, buf.getvalue())


def write_pgm16(path, arr: np.ndarray):
    """Binary 16-bit PGM (big-endian samples, maxval 65535)."""
    a = np.asarray(arr, dtype=np.uint16)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode()
    _atomic_write_bytes(path, header + a.astype(">u2").tobytes())


def write_label_map(path_base, labels: np.ndarray):
    """Label map as 16-bit PNG, or a CSV of labels past the 16-bit range.

    Returns the path actually written.
    """
    labels = np.asarray(labels)
    if labels.max() <= 65535:
        path = Path(str(path_base) + ".png")
        save_png(path, labels.astype(np.uint16))
    else:
        path = Path(str(path_base) + ".csv")
        write_text(path, "\n".join(",".join(map(str, row)) for row in labels) + "\n")
    return path


def read_label_map(path) -> np.ndarray:
    """Label map from a PNG (8/16-bit) or a CSV of integers."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    with PILImage.open(path) as im:
        if im.mode not in ("L", "I", "I;16"):
            im = im.convert("I")
        return np.asarray(im, dtype=np.int64)


def load_ground_truths(gt_dir, stem):
    """Ground-truth label maps for one image.

    Looks for a directory <gt_dir>/<stem>/ holding gt_*.png / gt_*.csv
    maps, or a flat <gt_dir>/<stem>.png / .csv fallback. Returns a list,
    empty when nothing is found.
    """
    gt_dir = Path(gt_dir)
    sub = gt_dir / stem
    maps = []
    if sub.is_dir():
        for p in sorted(sub.iterdir()):
            if p.suffix.lower() in (".png", ".csv") and p.stem.startswith("gt"):
                maps.append(read_label_map(p))
    else:
        for suffix in (".png", ".csv"):
            p = gt_dir / f"{stem}{suffix}"
            if p.exists():
                maps.append(read_label_map(p))
                break
    return maps


def render_partition(original, label_map: np.ndarray) -> np.ndarray:
    """Regions filled with their mean color, boundaries drawn in black."""
    data = original.data
    lm = np.asarray(label_map)
    n_regions = int(lm.max()) + 1
    flat_labels = lm.ravel()
    out = np.empty_like(data)
    for c in range(original.channels):
        sums = np.bincount(flat_labels, weights=data[:, :, c].ravel(), minlength=n_regions)
        counts = np.bincount(flat_labels, minlength=n_regions)
        means = sums / np.maximum(counts, 1)
        out[:, :, c] = means[lm]
    edge = np.zeros(lm.shape, dtype=bool)
    edge[:, :-1] |= lm[:, :-1] != lm[:, 1:]
    edge[:-1, :] |= lm[:-1, :] != lm[1:, :]
    out[edge] = 0.0
    rgb = np.clip(out, 0.0, 255.0).astype(np.uint8)
    if original.channels == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    return rgb


def error_hist_csv(path, model):
    centers, density = model.density()
    write_csv(path, ["bin_center", "density"], zip(centers, density))


def nfa_table_csv(path, rows):
    write_csv(path, ["k", "log_test_count", "log_prob", "lnfa"], rows)


def regions_csv(path, h, partition):
    """Region summary: id, area, mean per channel, fit error."""
    rows = []
    for rid, group in enumerate(partition.regions):
        area = int(sum(h.area[i] for i in group))
        sums = np.sum(h.sums[list(group)], axis=0)
        sumsq = float(sum(h.sumsq[i] for i in group))
        mean = sums / area
        err = max(sumsq - float(sums @ sums) / area, 0.0)
        rows.append([rid, area, *[f"{m:.4f}" for m in mean], f"{err:.6g}"])
    header = ["id", "area"] + [f"mean_{c}" for c in range(h.channels)] + ["ms_error"]
    write_csv(path, header, rows)


def _save_fig(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, bbox_inches="tight")
    plt.close(fig)
    _atomic_write_bytes(path, buf.getvalue())


def nfa_curve_figure(path, rows):
    """Test count, log-probability and LNFA against the partition order."""
    ks = [r[0] for r in rows]
    fig, axes = plt.subplots(3, 1, figsize=(6, 8), sharex=True)
    axes[0].plot(ks, [r[1] for r in rows], color="tab:blue")
    axes[0].set_ylabel("log test count")
    axes[1].plot(ks, [r[2] for r in rows], color="tab:orange")
    axes[1].set_ylabel("log probability")
    axes[2].plot(ks, [r[3] for r in rows], color="tab:red")
    axes[2].set_ylabel("LNFA")
    axes[2].set_xlabel("partition order k")
    best = min(rows, key=lambda r: r[3])
    axes[2].axvline(best[0], color="gray", linestyle=":", linewidth=1)
    fig.suptitle("Partition NFA by order")
    _save_fig(fig, path)


def saliency_figure(path, smap):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].imshow(smap.render(), cmap="inferno")
    axes[0].set_title("disappearance scale")
    axes[0].axis("off")
    axes[1].plot(smap.alphas, smap.region_counts, marker="o", markersize=3)
    axes[1].set_xscale("log")
    axes[1].set_xlabel("alpha")
    axes[1].set_ylabel("regions")
    axes[1].set_title("region count over the sweep")
    _save_fig(fig, path)


def multiscale_figure(path, rows):
    """Scale sweep curves in the style of the region-based benchmark."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    axes[0].plot([r.pd.apd_qp for r in rows], [r.pd.apd_pq for r in rows], marker="o", markersize=3)
    axes[0].set_xlabel("APD(Q,P)")
    axes[0].set_ylabel("APD(P,Q)")
    axes[0].set_title("over vs under segmentation")
    axes[1].plot([r.pd.mpd for r in rows], [r.pd.spd for r in rows], marker="o", markersize=3)
    axes[1].set_xlabel("MPD")
    axes[1].set_ylabel("SPD")
    axes[1].set_title("SPD vs MPD")
    alphas = [r.alpha for r in rows]
    axes[2].plot(alphas, [r.boundary.fmeasure for r in rows], marker="o", markersize=3, label="F")
    axes[2].plot(alphas, [r.boundary.precision for r in rows], linestyle="--", label="P")
    axes[2].plot(alphas, [r.boundary.recall for r in rows], linestyle=":", label="R")
    axes[2].set_xscale("log")
    axes[2].set_xlabel("alpha")
    axes[2].legend()
    axes[2].set_title("boundary scores")
    _save_fig(fig, path)


def tune_figure(path, result):
    xs = [t[0] for t in result.trace]
    ys = [t[1] for t in result.trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, "o", markersize=4, alpha=0.7)
    ax.axvline(result.alpha_star, color="tab:red", linestyle=":",
               label=f"alpha*={result.alpha_star:.3g}")
    ax.set_xscale("log")
    ax.set_xlabel("alpha")
    ax.set_ylabel("squared region-count error")
    ax.legend()
    _save_fig(fig, path)
