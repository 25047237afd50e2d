"""Domain adaptation with per-class mean soft labels, plus the usual baselines."""
from .data import (LabeledDataset, ParallelDataset, ShiftConfig, bayes_accuracy, confusability,
                   generate_domain_pair, load_dataset, save_dataset)
from .errors import *  # noqa: F401,F403
from .harness import (Cell, ExperimentConfig, ResultsTable, emit_table, load_config, parse_table,
                      prepare_seed, run_cell, run_experiment, summarize)
from .losses import (LossWeights, SoftTargetBatch, combined_loss, hard_loss, soft_cross_entropy,
                     teacher_soft_targets)
from .mathcore import SeededRng, log_softmax_tempered, matmul, softmax_tempered, standard_normal
from .network import (LayerSpec, ModelParams, RmspropState, backward, forward, init_params,
                      load_model, mlp_specs, rmsprop_step, save_model)
from .softlabels import (MeanSoftLabelTable, compute_mean_soft_labels, diagonal_dominance, load_table,
                         lookup, model_fingerprint, save_table)
from .training import (RunResult, TrainConfig, combined_objective, evaluate, hard_objective,
                       soft_objective, train)

__version__ = "0.1.0"
