"""Compressed wideband spectrum-availability recovery.

Block-weighted sparse recovery (Weighted-CSR), cooperative fusion under
per-node branch limits, and locality-aware low-rank occupancy completion.
"""

from .kernels import BACKEND
from .spectrum import (
    AmplitudeDist,
    BlockSpec,
    OccupancyProfile,
    PropagationModel,
    SensorNode,
    WidebandSnapshot,
    detection_range,
    draw_snapshot,
    observe_at_node,
)
from .sensing import MeasurementSet, SensingEnsemble, build_sensing_matrix, measure, required_measurements
from .recovery import (
    Metrics,
    RecoveryResult,
    SolverOptions,
    block_weights,
    detect_support,
    evaluate,
    solve_cosamp,
    solve_lasso,
    solve_omp,
    solve_weighted_csr,
)
from .cooperative import (
    FusionConfig,
    MeasurementShortfall,
    PartialScan,
    adapt_measurement_budget,
    cluster_nodes,
    collect_scans,
    fuse_and_recover,
    perturb_observation,
)
from .lowrank import (
    AnchorGrid,
    CompletionResult,
    OccupancyMatrix,
    assign_to_anchors,
    binarize_occupancy,
    build_anchor_grid,
    complete_svt,
    merge_global,
    required_samples,
    sample_mask,
)
from .harness import ExperimentConfig, ResultTable, emit_results, load_config, run_experiment

__version__ = "0.1.0"
