"""Bayesian latent space item response modeling with interaction maps."""

from .estimators import LatentSpaceIRT, LatentSpaceSelector
from .model import (
    Hyperparameters,
    InputError,
    InteractionKernel,
    LatentConfiguration,
    MainEffects,
    NumericError,
    ParameterState,
    ResponseMatrix,
    UsageError,
    distance,
    log_likelihood,
    log_odds,
    log_posterior_unnorm,
    log_prior,
)
from .postproc import (
    AlignedDraws,
    PosteriorSummary,
    align_chains,
    apply_rotation,
    cosine_similarity,
    gelman_rubin,
    group_center_similarity,
    procrustes_align,
    summarize,
)
from .ppc import PpcReport, ppc_check, replicate
from .sampler import (
    ChainOutput,
    ChainSchedule,
    ModelConfig,
    ProposalScales,
    run_chain,
    run_chains,
    tune_scales,
)
from .selection import SelectionResult, run_selection
from .simulate import (
    GroundTruth,
    Scenario,
    generate_local_dependence,
    generate_lsirm,
    generate_rasch,
    generate_two_cluster,
)

__version__ = "0.1.0"
