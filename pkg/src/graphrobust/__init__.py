"""Adversarial training and budgeted structure attacks for
polynomial-diffusion graph neural networks."""

from .attacks import (
    AttackConfig,
    Budget,
    attack_dice,
    attack_fgsm_greedy,
    attack_lrbcd,
    attack_pgd,
    attack_prbcd,
    compute_budgets,
    discretize_knapsack,
    discretize_sample,
    project_global,
    project_local_global,
)
from .data import CsbmParams, Split, karate_club, make_split, sample_csbm, training_view
from .graph import (
    Graph,
    NormalizedOperator,
    OperatorKind,
    RelaxedPerturbation,
    apply_flips,
    build_normalized,
    degrees,
    load_graph,
    save_graph,
)
from .models import (
    DiffusionModel,
    ModelSpec,
    backward_edges,
    backward_params,
    forward,
    init_params,
    load_checkpoint,
    loss_cross_entropy,
    loss_tanh_margin,
    save_checkpoint,
    sgd_adam_step,
)
from .training import (
    AttackSpec,
    MemorizedModel,
    TrainConfig,
    memorize,
    predict_memorized,
    self_train,
    train_adversarial,
    train_standard,
)
from .analysis import evaluate, normalize_gamma, spectral_filter, total_diffusion

__version__ = "0.1.0"
