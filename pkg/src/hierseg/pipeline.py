"""End-to-end segmentation pipeline shared by the CLI, evaluation and tuning.

PipelineState builds the per-image artifacts once (working image in the
chosen colorspace, pruned hierarchy, background model, boundary data,
partition tables) and then serves any number of selections at different
scales, which keeps scale sweeps and tuning cheap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from hierseg.acontrario import TestCountConfig, TestCountMode, estimate_error_model
from hierseg.boundary import boundary_post_process, build_boundary_segments, contrast_field
from hierseg.hierarchy import build_hierarchy, prune_hierarchy
from hierseg.imagecore import Colorspace, Image, from_array, gradient_magnitude, rgb_to_lab
from hierseg.selector import (
    Partition,
    compute_nfa_tables,
    partition_lnfa,
    run_greedy,
    select_best_partition,
    select_fixed_k,
    _partition_from_nodes,
)


class Mode(enum.Enum):
    MP = "mp"
    GREEDY = "greedy"
    MP_FIXED_K = "mp-fixed-k"


@dataclass(frozen=True)
class RunConfig:
    """Pipeline knobs; the defaults match the documented CLI defaults."""

    mode: Mode = Mode.MP
    alpha: float = 6.0
    lam: float = 10.0
    k: int | None = None
    top_m: int | None = None
    gray: bool = False
    boundary_post: bool | None = None  # None: on for MP modes, off for greedy
    greedy_boundary: bool = False
    test_count_mode: TestCountMode = TestCountMode.LINEAR
    boundary_eps: float = 1.0
    seed: int = 0
    max_order: int | None = None
    smooth_gradient: bool = False
    nbins: int = 1024

    def __post_init__(self):
        if self.mode is Mode.MP_FIXED_K and self.k is None:
            raise ValueError("mp-fixed-k mode requires k")
        if self.lam < 0:
            raise ValueError("pruning scale must be >= 0")

    def test_config(self, alpha: float | None = None) -> TestCountConfig:
        return TestCountConfig(alpha=self.alpha if alpha is None else alpha,
                               mode=self.test_count_mode)

    @property
    def use_boundary_post(self) -> bool:
        if self.boundary_post is None:
            return self.mode in (Mode.MP, Mode.MP_FIXED_K)
        return self.boundary_post


def working_image(img: Image, gray: bool = False) -> Image:
    """Image in the colorspace the pipeline operates on.

    Color input is converted to CIELab; with gray=True the lightness
    channel alone is kept, rescaled to the 8-bit range.
    """
    if img.colorspace is Colorspace.SRGB:
        lab = rgb_to_lab(img)
        if gray:
            return from_array(lab.data[:, :, 0] * 2.55, Colorspace.GRAY)
        return lab
    return img


class PipelineState:
    """Per-image artifacts, built lazily and reused across selections."""

    def __init__(self, image: Image, cfg: RunConfig):
        self.original = image
        self.cfg = cfg
        self.working = working_image(image, cfg.gray)
        self.hierarchy = prune_hierarchy(build_hierarchy(self.working), cfg.lam)
        self.model = estimate_error_model(self.hierarchy, self.working, cfg.nbins)
        self._tables = None
        self._boundary = None

    @property
    def degenerate(self) -> bool:
        return self.model.var_error <= 0.0

    @property
    def tables(self):
        if self._tables is None:
            if self.degenerate:
                raise ValueError("degenerate background model has no partition tables")
            self._tables = compute_nfa_tables(self.hierarchy, self.model,
                                              self.cfg.max_order)
        return self._tables

    @property
    def boundary_data(self):
        """(segments, contrast model) for the pruned leaf partition."""
        if self._boundary is None:
            grad = gradient_magnitude(self.working, smooth=self.cfg.smooth_gradient)
            l_field = contrast_field(grad)
            self._boundary = build_boundary_segments(
                self.hierarchy.leaf_label_map, l_field)
        return self._boundary

    def trivial_partition(self, alpha: float) -> Partition:
        h = self.hierarchy
        return _partition_from_nodes(h, [h.root], 1, 0.0, alpha)

    def select(self, alpha: float | None = None, *, mode: Mode | None = None,
               k: int | None = None, boundary_post: bool | None = None) -> Partition:
        """Run the configured selection, optionally overriding scale/mode."""
        cfg = self.cfg
        mode = cfg.mode if mode is None else mode
        alpha = cfg.alpha if alpha is None else alpha
        k = cfg.k if k is None else k
        post = cfg.use_boundary_post if boundary_post is None else boundary_post
        h = self.hierarchy

        if mode is Mode.GREEDY:
            if self.degenerate:
                return self.trivial_partition(alpha)
            seg = cmod = None
            if cfg.greedy_boundary:
                seg, cmod = self.boundary_data
            return run_greedy(h, self.model, alpha, segments=seg,
                              contrast_model=cmod, cfg=self.test_config(alpha))

        if self.degenerate:
            part = self.trivial_partition(alpha)
        elif mode is Mode.MP_FIXED_K:
            part = select_fixed_k(self.tables, k)
            lnfa = float(self.tables.root_lnfa(self.test_config(alpha), h.pixel_count)[k])
            part = replace(part, alpha_used=alpha, lnfa=lnfa)
        else:
            part = select_best_partition(self.tables, self.test_config(alpha),
                                         h.pixel_count)
        if post and part.order > 1:
            segments, cmodel = self.boundary_data
            part = boundary_post_process(part, segments, cmodel, h,
                                         cfg.boundary_eps)
        if not self.degenerate and part.lnfa != part.lnfa:  # post leaves lnfa unset
            part = replace(part, lnfa=partition_lnfa(
                self.model, self.test_config(alpha), h.pixel_count, h, part.regions))
        return part

    def test_config(self, alpha: float | None = None) -> TestCountConfig:
        return self.cfg.test_config(alpha)

    def region_count(self, alpha: float, **kw) -> int:
        return self.select(alpha, **kw).order


def segment(image: Image, cfg: RunConfig | None = None):
    """One-call segmentation; returns (partition, state)."""
    cfg = cfg or RunConfig()
    state = PipelineState(image, cfg)
    return state.select(), state
