"""rollmia: membership-inference audit toolkit for pianoroll GANs.

Trains a desk-scale multi-track pianoroll GAN, runs white-box discriminator
and black-box Monte Carlo membership-inference attacks against its
checkpoints, and emits metric tables.  Oracle models with a memorization dial
provide ground truth for validating attack power.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DivergenceError, FormatError, ToolkitError
from .pianoroll import (
    Dataset,
    Pianoroll,
    PianorollShape,
    SplitSpec,
    StyleParams,
    flatten,
    pitch_class_profile,
    read_dataset,
    split,
    synth_generate,
    synth_sampler,
    unflatten,
    write_dataset,
)
from .nn import AdamState, DenseLayer, Mlp, adam_step, backward, bce_logits_loss, forward
from .gan import (
    Checkpoint,
    ComposerGan,
    OracleDiscriminator,
    OracleGenerator,
    TrainConfig,
    build_gan,
    d_score,
    g_sample,
    load_checkpoint,
    oracle_d_score,
    oracle_generate,
    save_checkpoint,
    train,
)
from .metrics import ConfusionCounts, MetricsRow, compute_metrics, confusion_from_predictions
from .whitebox import ScoredCandidate, WbAttackResult, rank_and_label, run_whitebox
from .montecarlo import (
    EpsilonHeuristic,
    McConfig,
    McResult,
    Stash,
    build_stash,
    distance,
    epsilon_from_heuristic,
    mc_score,
    run_mc_trials,
    set_mi,
    single_mi,
)
from .harness import (
    ExperimentConfig,
    ReportTable,
    SyntheticSpec,
    emit_reports,
    load_experiment_config,
    run_experiment,
)

__all__ = [
    "__version__",
    "ToolkitError", "ConfigError", "FormatError", "DivergenceError",
    "PianorollShape", "Pianoroll", "Dataset", "SplitSpec", "StyleParams",
    "synth_generate", "synth_sampler", "split", "flatten", "unflatten",
    "pitch_class_profile", "write_dataset", "read_dataset",
    "DenseLayer", "Mlp", "AdamState", "forward", "backward",
    "bce_logits_loss", "adam_step",
    "ComposerGan", "TrainConfig", "Checkpoint", "build_gan", "g_sample",
    "d_score", "train", "save_checkpoint", "load_checkpoint",
    "OracleGenerator", "OracleDiscriminator", "oracle_generate", "oracle_d_score",
    "ConfusionCounts", "MetricsRow", "compute_metrics", "confusion_from_predictions",
    "ScoredCandidate", "WbAttackResult", "rank_and_label", "run_whitebox",
    "EpsilonHeuristic", "Stash", "McConfig", "McResult", "build_stash",
    "distance", "epsilon_from_heuristic", "mc_score", "run_mc_trials",
    "single_mi", "set_mi",
    "SyntheticSpec", "ExperimentConfig", "ReportTable", "emit_reports",
    "load_experiment_config", "run_experiment",
]
