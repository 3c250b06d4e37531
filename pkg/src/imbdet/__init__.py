"""Class-rebalancing cross-entropy losses, weight schemes, hard-negative
mining, and FPPI-calibrated recall evaluation for imbalanced proposal
classification, with a synthetic desk-scale pipeline tying them together."""

from .boxes import BoundingBox, iou
from .classes import ClassStats, ClassTable
from .data import (
    BDD_TARGET_CLASSES,
    Dataset,
    DatasetSplit,
    GroundTruthObject,
    ParseResult,
    ProposalBatch,
    Scene,
    compute_stats,
    load_dataset,
    load_stats,
    parse_labels,
    save_dataset,
    save_stats,
)
from .evaluation import (
    CalibrationResult,
    Detection,
    EvalConfig,
    EvalReport,
    calibrate_threshold,
    detections_from_probabilities,
    evaluate,
    match_image,
    render_reports,
)
from .losses import LossConfig, batch_loss, loss, loss_and_grad, softmax
from .mining import MiningConfig, mine_batch
from .synth import SynthConfig, build_dataset, generate_synthetic
from .training import (
    ClassifierModel,
    TrainConfig,
    TrainLog,
    init_model,
    load_model,
    make_minibatches,
    predict,
    save_model,
    train,
)
from .weights import (
    SchemeConfig,
    WeightVector,
    balanced_weights,
    compute_weights,
    effective_number_weights,
    effective_numbers,
    inverse_linear_weights,
    inverse_log_weights,
    load_weights,
    save_weights,
    uniform_weights,
)

__version__ = "0.1.0"
