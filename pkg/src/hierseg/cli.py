"""Command line interface.

Subcommands: segment (one image to label map + reports), saliency (scale
sweep to a disappearance-scale raster), synth (deterministic test images),
eval (score predictions or run the multiscale benchmark), tune (fit the
scale parameter on a ground-truth set), hierarchy dump (tree as JSON).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from hierseg import metrics as pmetrics
from hierseg import report, synth
from hierseg.acontrario import TestCountMode, log_test_count_vec
from hierseg.hierarchy import build_hierarchy, prune_hierarchy
from hierseg.imagecore import load_image
from hierseg.pipeline import Mode, PipelineState, RunConfig
from hierseg.selector import rank_partitions, saliency_map
from hierseg.tuning import tune_alpha

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


class UsageError(Exception):
    pass


def _parse_grid(spec: str) -> list[float]:
    """Log-spaced alpha grid from an 'a0:a1:steps' spec."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise UsageError(f"bad grid spec {spec!r}, expected a0:a1:steps")
    try:
        a0, a1, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise UsageError(f"bad grid spec {spec!r}: {exc}") from exc
    if not (0 < a0 < a1) or steps < 1:
        raise UsageError(f"bad grid spec {spec!r}: need 0 < a0 < a1 and steps >= 1")
    if steps == 1:
        return [a0]
    return list(np.geomspace(a0, a1, steps))


def _add_pipeline_flags(p: argparse.ArgumentParser, with_mode: bool = True):
    if with_mode:
        p.add_argument("--mode", choices=[m.value for m in Mode], default="mp")
        p.add_argument("--k", type=int, help="region count for mp-fixed-k")
        p.add_argument("--top-m", type=int, help="also report the M best orders")
    p.add_argument("--alpha", type=float, default=6.0, help="scale parameter (default 6)")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0,
                   help="pruning scale for the initial partition (default 10)")
    p.add_argument("--gray", action="store_true",
                   help="drop color, work on the lightness channel")
    p.add_argument("--boundary-post", dest="boundary_post", action="store_true",
                   default=None, help="merge non-meaningful boundaries (default for mp)")
    p.add_argument("--no-boundary-post", dest="boundary_post", action="store_false",
                   help="disable boundary post-processing")
    p.add_argument("--greedy-boundary", action="store_true",
                   help="add boundary factors to greedy merging scores")
    p.add_argument("--test-count-mode", choices=["linear", "triangular"], default="linear")
    p.add_argument("--boundary-eps", type=float, default=1.0,
                   help="NFA threshold of the boundary post-processing (default 1)")
    p.add_argument("--max-order", type=int, help="truncate partition tables at this order")
    p.add_argument("--smooth-gradient", action="store_true",
                   help="Gaussian pre-smoothing before the structure tensor")
    p.add_argument("--nbins", type=int, default=1024, help="error histogram bins")


def _config(args, mode: Mode | None = None) -> RunConfig:
    try:
        return RunConfig(
            mode=mode if mode is not None else Mode(args.mode),
            alpha=args.alpha,
            lam=args.lam,
            k=getattr(args, "k", None),
            top_m=getattr(args, "top_m", None),
            gray=args.gray,
            boundary_post=args.boundary_post,
            greedy_boundary=args.greedy_boundary,
            test_count_mode=TestCountMode(args.test_count_mode),
            boundary_eps=args.boundary_eps,
            max_order=args.max_order,
            smooth_gradient=args.smooth_gradient,
            nbins=args.nbins,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _jobs(args) -> int:
    if getattr(args, "jobs", None):
        return max(1, args.jobs)
    env = os.environ.get("HIERSEG_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _find_images(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise UsageError(f"not a directory: {directory}")
    out = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file():
            out[p.stem] = p
    return out


def cmd_segment(args) -> int:
    cfg = _config(args)
    img = load_image(args.image)
    state = PipelineState(img, cfg)
    part = state.select()
    h = state.hierarchy
    out = str(args.out)

    report.write_label_map(out + ".labels", part.label_map)
    report.regions_csv(out + ".regions.csv", h, part)
    if state.degenerate:
        rows = [(1, 0.0, 0.0, 0.0)]
    else:
        rows = state.tables.to_rows(state.test_config(), h.pixel_count)
    report.nfa_table_csv(out + ".nfa.csv", rows)
    report.nfa_curve_figure(out + ".nfa.png", rows)
    report.save_png(out + ".vis.png", report.render_partition(img, part.label_map))
    if args.error_hist:
        report.error_hist_csv(args.error_hist, state.model)
    if cfg.top_m:
        if state.degenerate:
            ranking = [(1, 0.0)]
        else:
            ranking = rank_partitions(state.tables, state.test_config(), h.pixel_count,
                                      cfg.top_m)
        report.write_csv(out + ".rank.csv", ["k", "lnfa"], ranking)
        for k, lnfa in ranking:
            print(f"rank k={k} lnfa={lnfa:.4f}")
    print(f"order={part.order} lnfa={part.lnfa:.4f}")
    return 0


def cmd_saliency(args) -> int:
    alphas = _parse_grid(args.alphas)
    cfg = _config(args, mode=Mode.MP)
    img = load_image(args.image)
    state = PipelineState(img, cfg)
    segments = cmodel = None
    if cfg.use_boundary_post:
        segments, cmodel = state.boundary_data
    smap = saliency_map(
        state.hierarchy, state.model, state.test_config(), alphas,
        tables=None if state.degenerate else state.tables,
        segments=segments, contrast_model=cmodel, boundary_eps=cfg.boundary_eps)
    out = str(args.out)
    report.write_pgm16(out + ".pgm", smap.render())
    report.write_csv(out + ".csv", ["alpha", "region_count"],
                     zip(smap.alphas, smap.region_counts))
    report.saliency_figure(out + ".png", smap)
    print(f"saliency sweep over {len(alphas)} scales, "
          f"region counts {smap.region_counts[0]}..{smap.region_counts[-1]}")
    return 0


def cmd_synth(args) -> int:
    if args.kind == "blocks":
        means = tuple(float(x) for x in args.means.split(","))
        img, gt = synth.make_blocks(size=args.size, means=means,
                                    sigma=args.sigma, seed=args.seed)
    else:
        img, gt = synth.make_blobs(count=args.count, width=args.width,
                                   height=args.height, sigma=args.sigma,
                                   seed=args.seed)
    out = str(args.out)
    report.save_png(out + ".png", img.data[:, :, 0].astype(np.uint8))
    report.write_label_map(out + ".gt", gt)
    print(f"wrote {out}.png and {out}.gt.png")
    return 0


def _read_prediction(pred_dir: Path, stem: str):
    for suffix in (".png", ".csv"):
        p = pred_dir / f"{stem}{suffix}"
        if p.exists():
            return report.read_label_map(p)
    maps = report.load_ground_truths(pred_dir, stem)
    return maps[0] if maps else None


def cmd_eval(args) -> int:
    gt_dir = Path(args.gt)
    if not gt_dir.is_dir():
        raise UsageError(f"missing ground truth directory: {gt_dir}")
    if args.multiscale:
        return _eval_multiscale(args, gt_dir)

    pred_dir = Path(args.pred) if args.pred else None
    if pred_dir is None:
        raise UsageError("eval needs --pred DIR (or --multiscale with --images)")
    if not pred_dir.is_dir():
        raise UsageError(f"not a directory: {pred_dir}")
    stems = sorted(
        {p.stem for p in pred_dir.iterdir()
         if p.is_dir() or p.suffix.lower() in (".png", ".csv")})
    rows = []
    header = ["image", "spd", "apd_pq", "apd_qp", "mpd",
              "precision", "recall", "fmeasure", "pri", "voi", "covering",
              "pred_regions", "gt_count"]
    collected = []
    for stem in stems:
        gts = report.load_ground_truths(gt_dir, stem)
        if not gts:
            continue
        pred = _read_prediction(pred_dir, stem)
        if pred is None:
            continue
        pd_s, b_s = pmetrics.image_scores(pred, gts, args.tol)
        pri, voi, cov = pmetrics.region_metrics(pred, gts)
        vals = [pd_s.spd, pd_s.apd_pq, pd_s.apd_qp, pd_s.mpd,
                b_s.precision, b_s.recall, b_s.fmeasure, pri, voi, cov,
                len(np.unique(pred)), len(gts)]
        collected.append(vals)
        rows.append([stem] + [f"{v:.6g}" for v in vals])
    if not collected:
        raise UsageError("no image names shared between predictions and ground truth")
    agg = np.mean(np.asarray(collected, dtype=float), axis=0)
    rows.append(["aggregate"] + [f"{v:.6g}" for v in agg])
    report.write_csv(str(args.out) + ".csv", header, rows)
    print(f"evaluated {len(collected)} images, mean spd={agg[0]:.4f} F={agg[6]:.4f}")
    return 0


def _sweep_one(task):
    """Per-image scale sweep scores (worker for the multiscale benchmark)."""
    image_path, gts, alphas, cfg, tol = task
    state = PipelineState(load_image(image_path), cfg)
    out = []
    for alpha in alphas:
        part = state.select(alpha=alpha)
        pd_s, b_s = pmetrics.image_scores(part.label_map, gts, tol)
        out.append((pd_s, b_s, part.order))
    return out


def _eval_multiscale(args, gt_dir: Path) -> int:
    if not args.images:
        raise UsageError("--multiscale needs --images DIR")
    alphas = _parse_grid(args.alphas)
    cfg = _config(args, mode=Mode.MP)
    images = _find_images(Path(args.images))
    tasks = []
    for stem, path in images.items():
        gts = report.load_ground_truths(gt_dir, stem)
        if not gts:
            print(f"warning: no ground truth for {stem}, skipped", file=sys.stderr)
            continue
        tasks.append((path, gts, alphas, cfg, args.tol))
    if not tasks:
        raise UsageError("no image names shared between --images and ground truth")
    jobs = _jobs(args)
    if jobs > 1 and len(tasks) > 1:
        with Pool(min(jobs, len(tasks))) as pool:
            per_image = pool.map(_sweep_one, tasks)
    else:
        per_image = [_sweep_one(t) for t in tasks]
    rows, ods_alpha, ois_f = pmetrics.aggregate_sweep(alphas, per_image)
    out = str(args.out)
    report.write_csv(
        out + ".csv",
        ["alpha", "spd", "apd_pq", "apd_qp", "mpd", "precision", "recall",
         "fmeasure", "mean_regions"],
        [[f"{r.alpha:.6g}", f"{r.pd.spd:.6g}", f"{r.pd.apd_pq:.6g}",
          f"{r.pd.apd_qp:.6g}", f"{r.pd.mpd:.6g}", f"{r.boundary.precision:.6g}",
          f"{r.boundary.recall:.6g}", f"{r.boundary.fmeasure:.6g}",
          f"{r.mean_regions:.6g}"] for r in rows])
    ods_f = max(r.boundary.fmeasure for r in rows)
    report.write_csv(out + ".summary.csv", ["ods_alpha", "ods_f", "ois_f"],
                     [[f"{ods_alpha:.6g}", f"{ods_f:.6g}", f"{ois_f:.6g}"]])
    report.multiscale_figure(out + ".png", rows)
    print(f"multiscale over {len(per_image)} images: "
          f"ODS alpha={ods_alpha:.4g} F={ods_f:.4f}, OIS F={ois_f:.4f}")
    return 0


def _table_one(task):
    """Root table worker for tuning: selection state condensed per image."""
    image_path, cfg = task
    state = PipelineState(load_image(image_path), cfg)
    if state.degenerate:
        return None, state.hierarchy.pixel_count
    return state.tables.root_table.copy(), state.hierarchy.pixel_count


def cmd_tune(args) -> int:
    gt_dir = Path(args.gt)
    if not gt_dir.is_dir():
        raise UsageError(f"missing ground truth directory: {gt_dir}")
    images = _find_images(Path(args.images))
    cfg = _config(args, mode=Mode.MP)
    entries = []
    paths = []
    for stem, path in images.items():
        gts = report.load_ground_truths(gt_dir, stem)
        if not gts:
            print(f"warning: no ground truth for {stem}, skipped", file=sys.stderr)
            continue
        entries.append((stem, gts))
        paths.append(path)
    if not entries:
        raise UsageError("no image names shared between --images and ground truth")

    jobs = _jobs(args)
    tasks = [(p, cfg) for p in paths]
    if jobs > 1 and len(tasks) > 1:
        with Pool(min(jobs, len(tasks))) as pool:
            tables = pool.map(_table_one, tasks)
    else:
        tables = [_table_one(t) for t in tasks]
    by_name = {entries[i][0]: tables[i] for i in range(len(entries))}

    def count_fn(name, alpha):
        root_table, n_pixels = by_name[name]
        if root_table is None:
            return 1
        ks = np.arange(1, len(root_table))
        lnfa = log_test_count_vec(cfg.test_config(alpha), n_pixels, ks) + root_table[1:]
        return int(np.argmin(lnfa)) + 1

    result = tune_alpha(entries, (args.alpha_min, args.alpha_max), args.budget, count_fn)
    report.write_csv(args.out, ["alpha", "objective"],
                     [[f"{a:.8g}", f"{e:.8g}"] for a, e in result.trace])
    fig_path = str(Path(args.out).with_suffix("")) + ".png"
    report.tune_figure(fig_path, result)
    print(f"alpha*={result.alpha_star:.6g} objective={result.objective:.6g} "
          f"({len(result.trace)} evaluations)")
    return 0


def cmd_hierarchy_dump(args) -> int:
    img = load_image(args.image)
    from hierseg.pipeline import working_image

    work = working_image(img, args.gray)
    h = prune_hierarchy(build_hierarchy(work), args.lam)
    out = str(args.out)
    report.write_json(out + ".json", h.to_json_dict())
    written = report.write_label_map(out + ".labels", h.leaf_label_map)
    print(f"wrote {out}.json and {written} ({h.leaf_count} leaves)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierseg",
        description="Hierarchical segmentation by a-contrario partition selection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image")
    p.add_argument("image")
    p.add_argument("--out", required=True, help="output path prefix")
    _add_pipeline_flags(p)
    p.add_argument("--error-hist", help="dump the error histogram to this CSV")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("saliency", help="scale sweep to a saliency raster")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--alphas", default="0.01:5000:30", help="a0:a1:steps, log spaced")
    _add_pipeline_flags(p, with_mode=False)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("synth", help="generate synthetic test images")
    p.add_argument("kind", choices=["blocks", "blobs"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--means", default="50,100,150,200", help="blocks: quadrant means")
    p.add_argument("--size", type=int, default=100, help="blocks: image side")
    p.add_argument("--count", type=int, default=13, help="blobs: number of blobs")
    p.add_argument("--width", type=int, default=320, help="blobs: image width")
    p.add_argument("--height", type=int, default=240, help="blobs: image height")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", help="directory of predicted label maps")
    p.add_argument("--gt", required=True, help="ground truth directory")
    p.add_argument("--images", help="multiscale: directory of input images")
    p.add_argument("--multiscale", action="store_true")
    p.add_argument("--alphas", default="0.01:5000:30")
    p.add_argument("--tol", type=int, default=2, help="boundary match tolerance")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int)
    _add_pipeline_flags(p, with_mode=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="fit alpha to ground-truth region counts")
    p.add_argument("--images", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--alpha-min", type=float, default=0.5)
    p.add_argument("--alpha-max", type=float, default=500.0)
    p.add_argument("--budget", type=int, default=30)
    p.add_argument("--out", required=True, help="trace CSV path")
    p.add_argument("--jobs", type=int)
    _add_pipeline_flags(p, with_mode=False)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("hierarchy", help="hierarchy tools")
    hsub = p.add_subparsers(dest="subcommand", required=True)
    d = hsub.add_parser("dump", help="write the tree as JSON plus the leaf label map")
    d.add_argument("image")
    d.add_argument("--out", required=True)
    d.add_argument("--lambda", dest="lam", type=float, default=0.0)
    d.add_argument("--gray", action="store_true")
    d.set_defaults(func=cmd_hierarchy_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure contract: exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
