"""Spike-and-slab selection between the Rasch model and the latent space model.

log(gamma) gets a two-component mixture prior: a spike concentrated near
zero interaction weight and a diffuse slab.  A binary indicator delta
picks the active component and omega = P(delta=1) carries a Beta(1, 1)
prior.  The posterior inclusion probability, estimated by the proportion
of delta=1 draws, decides the model: below 0.5 the Rasch model is chosen,
otherwise the latent space model.

delta is conditionally independent of the data given log(gamma), so its
update only weighs the two prior components at the current log(gamma);
the data enter through the gamma update itself.  When delta=0 the spike
keeps gamma near (but not exactly at) zero; the interaction term is never
hard-zeroed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .model import (
    Hyperparameters,
    NumericError,
    ParameterState,
    ResponseMatrix,
    UsageError,
    log_posterior_unnorm,
    _normal_logpdf,
)
from .sampler import (
    ChainOutput,
    ChainSchedule,
    ModelConfig,
    ProposalScales,
    _SweepRecorder,
    _retune,
    gibbs_update_sigma2,
    initial_state,
    mh_update_alpha,
    mh_update_beta,
    mh_update_gamma,
    mh_update_position_a,
    mh_update_position_b,
)

__all__ = [
    "SelectionResult",
    "choose_model",
    "update_delta",
    "update_omega",
    "update_gamma_mixture",
    "run_selection_chain",
    "run_selection",
]

PSRF_WARN_THRESHOLD = 1.2


@dataclass
class SelectionResult:
    """Outcome of a spike-and-slab selection run."""

    inclusion_probability: float
    chosen_model: str                 # "rasch" or "latent_space"
    delta_trace: np.ndarray
    omega_trace: np.ndarray
    chains: list
    warning: Optional[str] = None

    def __post_init__(self) -> None:
        assert self.chosen_model in ("rasch", "latent_space")


def choose_model(inclusion_probability: float) -> str:
    """Rasch only when the inclusion probability is strictly below 0.5."""
    return "rasch" if inclusion_probability < 0.5 else "latent_space"


def convergence_warning(chains) -> Optional[str]:
    """Gelman-Rubin check on gamma across chains; a message, never an error."""
    if len(chains) < 2:
        return None
    from .postproc import gelman_rubin

    psrf = gelman_rubin([np.log(c.gamma) for c in chains])
    if not np.isfinite(psrf) or psrf > PSRF_WARN_THRESHOLD:
        return (f"gamma PSRF {psrf:.3f} exceeds {PSRF_WARN_THRESHOLD}; "
                "chains may not have converged")
    return None


def update_delta(state: ParameterState, hyper: Hyperparameters,
                 rng: np.random.Generator) -> int:
    """Draw the component indicator given the current log(gamma) and omega.

    P(delta=1 | ...) = omega*slab(z) / (omega*slab(z) + (1-omega)*spike(z)),
    evaluated in log space via the logistic of the log-density difference.
    """
    if state.kernel.kind != "distance":
        raise UsageError("delta update requires a distance kernel")
    if state.omega is None:
        raise UsageError("delta update requires a selection state (omega set)")
    omega = state.omega
    if omega >= 1.0:
        q = 1.0
    elif omega <= 0.0:
        q = 0.0
    else:
        z = math.log(state.kernel.gamma)
        log_slab = float(_normal_logpdf(z, hyper.slab_mean, hyper.slab_var))
        log_spike = float(_normal_logpdf(z, hyper.spike_mean, hyper.spike_var))
        q = float(expit(math.log(omega) - math.log1p(-omega) + log_slab - log_spike))
    state.delta = int(rng.random() < q)
    return state.delta


def update_omega(delta: int, rng: np.random.Generator) -> float:
    """Draw omega from its Beta(1 + delta, 2 - delta) full conditional."""
    return float(rng.beta(1.0 + delta, 2.0 - delta))


def update_gamma_mixture(state: ParameterState, data: ResponseMatrix,
                         hyper: Hyperparameters, scales: ProposalScales,
                         rng: np.random.Generator) -> bool:
    """Gamma update whose prior term is the delta-selected component."""
    if state.delta is None:
        raise UsageError("mixture gamma update requires a selection state")
    return mh_update_gamma(state, data, hyper, scales, rng)


def run_selection_chain(data: ResponseMatrix, config: ModelConfig,
                        schedule: ChainSchedule, scales: ProposalScales,
                        rng: np.random.Generator, chain_id: int = 0,
                        seed_used: Optional[int] = None) -> ChainOutput:
    """One selection chain: the full sampler sweep plus delta and omega updates."""
    if config.kernel != "distance":
        raise UsageError("model selection requires a distance kernel")
    hyper = config.hyper
    state = initial_state(data, config, rng, selection=True)
    if not math.isfinite(log_posterior_unnorm(data, state, hyper)):
        raise NumericError("non-finite log posterior at initialization")

    scales = scales.copy()
    blocks = ["alpha", "beta", "gamma", "position_a", "position_b"]
    rec = _SweepRecorder(blocks)

    n_kept = schedule.n_kept
    n, i, p = data.n_respondents, data.n_items, config.dimension
    out_alpha = np.empty((n_kept, n))
    out_beta = np.empty((n_kept, i))
    out_gamma = np.empty(n_kept)
    out_sigma2 = np.empty(n_kept)
    out_a = np.empty((n_kept, n, p))
    out_b = np.empty((n_kept, i, p))
    out_logpost = np.empty(n_kept)
    out_delta = np.empty(n_kept, dtype=np.int64)
    out_omega = np.empty(n_kept)

    for t in range(schedule.n_iterations):
        post = t >= schedule.n_burnin
        acc = mh_update_alpha(state, data, hyper, scales, rng)
        rec.record("alpha", int(acc.sum()), acc.size, post)
        acc = mh_update_beta(state, data, hyper, scales, rng)
        rec.record("beta", int(acc.sum()), acc.size, post)
        rec.record("gamma", int(update_gamma_mixture(state, data, hyper, scales, rng)), 1, post)
        acc = mh_update_position_a(state, data, hyper, scales, rng)
        rec.record("position_a", int(acc.sum()), acc.size, post)
        acc = mh_update_position_b(state, data, hyper, scales, rng)
        rec.record("position_b", int(acc.sum()), acc.size, post)
        gibbs_update_sigma2(state, hyper, rng)
        update_delta(state, hyper, rng)
        state.omega = update_omega(state.delta, rng)

        if config.tune and not post and (t + 1) % config.tune_interval == 0:
            _retune(scales, rec.window_rates(), config.target_acceptance)
            rec.reset_window()
        if post and (t - schedule.n_burnin + 1) % schedule.thin == 0:
            k = (t - schedule.n_burnin + 1) // schedule.thin - 1
            out_alpha[k] = state.main_effects.alpha
            out_beta[k] = state.main_effects.beta
            out_gamma[k] = state.kernel.gamma
            out_sigma2[k] = state.sigma2
            out_a[k] = state.latent.respondent_positions
            out_b[k] = state.latent.item_positions
            out_logpost[k] = log_posterior_unnorm(data, state, hyper)
            out_delta[k] = state.delta
            out_omega[k] = state.omega

    return ChainOutput(
        alpha=out_alpha, beta=out_beta, gamma=out_gamma, sigma2=out_sigma2,
        a_positions=out_a, b_positions=out_b, log_posterior=out_logpost,
        acceptance=rec.full, acceptance_post=rec.post,
        kernel_kind="distance", metric=config.metric,
        chain_id=chain_id, seed_used=seed_used, scales=scales,
        delta=out_delta, omega=out_omega,
    )


def run_selection(data: ResponseMatrix, config: ModelConfig,
                  schedule: ChainSchedule, scales: Optional[ProposalScales] = None,
                  n_jobs: int = 1) -> SelectionResult:
    """Run selection chains and decide between Rasch and latent space.

    With several chains a Gelman-Rubin check on the gamma trace attaches
    a non-convergence warning (PSRF > 1.2) to the result; it is never an
    error.
    """
    if scales is None:
        scales = ProposalScales()
    children = np.random.SeedSequence(schedule.seed).spawn(schedule.n_chains)
    tasks = [
        delayed(run_selection_chain)(data, config, schedule, scales,
                                     np.random.default_rng(children[c]),
                                     chain_id=c, seed_used=schedule.seed)
        for c in range(schedule.n_chains)
    ]
    if n_jobs == 1 or schedule.n_chains == 1:
        chains = [task[0](*task[1], **task[2]) for task in tasks]
    else:
        chains = Parallel(n_jobs=n_jobs)(tasks)

    delta_trace = np.concatenate([c.delta for c in chains])
    omega_trace = np.concatenate([c.omega for c in chains])
    inclusion = float(delta_trace.mean())
    chosen = choose_model(inclusion)

    return SelectionResult(inclusion, chosen, delta_trace, omega_trace, chains,
                           convergence_warning(chains))
