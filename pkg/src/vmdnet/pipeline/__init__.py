"""Data ingestion, preprocessing, training protocol, metrics and ablations."""

from .experiment import (
    ABLATION_COLUMNS,
    VARIANTS,
    AblationSpec,
    HyperParams,
    cross_validate,
    run_ablation,
    write_comparison_table,
)
from .metrics import EvalReport, auc_rank, evaluate, evaluate_scores, roc_points
from .preprocess import (
    Dataset,
    build_sequences,
    filter_outliers,
    impute,
    normalize_minmax,
    prepare_dataset,
    prepare_unseen,
    preprocess,
)
from .synth import SynthConfig, synth_generate
from .table import RawTable, load_csv, write_csv
from .training import EarlyStopping, FoldPlan, TrainProtocol, kfold_split, train_with_early_stopping
