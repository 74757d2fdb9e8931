"""Budgeted, decoupled verification of object-detection pseudo annotations.

The package simulates an annotation protocol where a detector's pseudo labels
are scored by cross-view disagreement, ranked, and then checked against an
oracle in two separately priced passes: one for boxes, one for classes. A
cost ledger in integer milliseconds enforces the annotation budget exactly.
"""

from .engine import (
    CostTable,
    PassReport,
    apply_box_verdict,
    apply_class_verdict,
    build_box_task,
    build_class_task,
    cost_of,
    costs_for,
    full_annotation_baseline,
    matched_class_of,
    merge_duplicates,
    run_box_pass,
    run_class_pass,
    split_budget,
)
from .geometry import enlarge_region, hflip_box, iou
from .metrics import (
    MetricsBundle,
    cls_acc_given_correct_loc,
    compute_bundle,
    confusion_matrix,
    iou_buckets,
)
from .model import (
    BoundingBox,
    BoxState,
    BudgetError,
    Category,
    ClassDistribution,
    ClassState,
    CostLedger,
    Dataset,
    Detection,
    ExperimentConfig,
    GroundTruthObject,
    ImageRecord,
    InfeasibleError,
    PoolEntry,
    PoolState,
    PseudoAnnotation,
    ValidationError,
    new_pool,
)
from .oracle import (
    Answer,
    ReplayOracle,
    SimulatedOracle,
    TaskKind,
    VerificationTask,
    Verdict,
    best_gt_match,
    simulated_verify_box,
    simulated_verify_class,
)
from .rng import substream
from .scheduler import (
    CycleReport,
    FileIngestProvider,
    MockDetectorProvider,
    run_baseline,
    run_cycle,
    run_experiment,
)
from .selection import filter_by_confidence, median_u_cls, rank_descending
from .service import VerificationService, bootstrap_pool, create_app
from .storage import (
    dump_json,
    load_config,
    load_dataset,
    load_pool,
    load_predictions,
    load_reports,
    reports_to_csv,
    save_dataset,
    save_pool,
    save_predictions,
    write_reports,
)
from .synth import NoiseParams, generate_scenario, mock_detect
from .uncertainty import (
    PredictionPair,
    kl_divergence,
    mean_l1,
    pair_predictions,
    score_annotations,
    sentinel_u_cls,
    sentinel_u_loc,
    u_cls,
    u_loc,
)

__version__ = "0.1.0"
