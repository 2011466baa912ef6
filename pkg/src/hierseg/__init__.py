"""Hierarchical image segmentation by a-contrario partition selection.

The pipeline builds a binary partition tree by greedy piecewise-constant
Mumford-Shah merging, estimates an empirical pixel-error background model
over the tree, and selects output partitions by minimizing a Number of
False Alarms (NFA): either one merging at a time (greedy) or over whole
partitions with a dynamic program on the tree (multipartition).
"""

from hierseg.imagecore import Image, Colorspace, load_image, rgb_to_lab, pixel_error, gradient_magnitude
from hierseg.hierarchy import Hierarchy, RegionNode, build_rag, merge_cost, build_hierarchy, prune_hierarchy, partition_at_scale
from hierseg.acontrario import ErrorModel, TestCountConfig, TestCountMode, estimate_error_model, log_prob_error_sum, lnfa_region, merging_score, log_test_count
from hierseg.boundary import BoundarySegment, ContrastModel, contrast_field, build_boundary_segments, lnfa_boundary, boundary_post_process
from hierseg.selector import NfaTables, Partition, SaliencyMap, run_greedy, compute_nfa_tables, select_best_partition, select_fixed_k, rank_partitions, saliency_map, predicted_combination_count
from hierseg.metrics import PdScores, BoundaryScores, apd, spd, mpd, boundary_prf, region_metrics, multiscale_eval
from hierseg.tuning import TuneResult, tune_alpha

__version__ = "0.1.0"
