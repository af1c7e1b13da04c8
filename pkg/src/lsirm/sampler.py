"""Metropolis-within-Gibbs sampler.

One sweep updates, in order: every ability alpha_j, every easiness
beta_i, the interaction weight gamma (random walk on log(gamma)), every
respondent position a_j, every item position b_i, then sigma2 from its
conjugate full conditional.

The per-unit ability/easiness/position updates are executed as one
vectorized simultaneous step per block: each unit's full conditional is
independent of the other units in its block (the likelihood factorizes
over rows for respondents and over columns for items, and the priors are
independent), so the simultaneous kernel is identical to the sequential
per-unit scan.

Each update draws its proposal noise first and its acceptance uniforms
second, so output is fully determined by (seed, schedule, data).
Proposal scales may be re-tuned toward a target acceptance rate during
burn-in only; they are frozen afterwards to preserve detailed balance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import math
import numpy as np
from joblib import Parallel, delayed

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
    distance_matrix,
    interaction_matrix,
    log_gamma_prior_logpdf,
    log_odds_matrix,
    log_posterior_unnorm,
)

__all__ = [
    "ProposalScales",
    "ChainSchedule",
    "ModelConfig",
    "BlockAcceptance",
    "ChainOutput",
    "initial_state",
    "mh_update_alpha",
    "mh_update_beta",
    "mh_update_gamma",
    "mh_update_position_a",
    "mh_update_position_b",
    "gibbs_update_sigma2",
    "run_chain",
    "run_chains",
    "tune_scales",
]

# MH block name -> proposal-scale attribute
SCALE_ATTRS = {"alpha": "s_alpha", "beta": "s_beta", "gamma": "s_gamma",
               "position_a": "s_pos_a", "position_b": "s_pos_b"}


@dataclass
class ProposalScales:
    """Standard deviations of the Gaussian random-walk proposals."""

    s_alpha: float = 2.2
    s_beta: float = 0.5
    s_gamma: float = 0.1
    s_pos_a: float = 1.7
    s_pos_b: float = 0.4

    def __post_init__(self) -> None:
        for name in ("s_alpha", "s_beta", "s_gamma", "s_pos_a", "s_pos_b"):
            if not getattr(self, name) > 0.0:
                raise InputError(f"{name} must be strictly positive")

    def copy(self) -> "ProposalScales":
        return dataclasses.replace(self)


@dataclass
class ChainSchedule:
    """Iteration counts, thinning, chain count, and master seed."""

    n_iterations: int
    n_burnin: int
    thin: int = 1
    n_chains: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_iterations < 1 or self.n_burnin < 0:
            raise InputError("iteration counts must be positive")
        if self.n_burnin >= self.n_iterations:
            raise InputError("n_burnin must be smaller than n_iterations")
        if self.thin < 1:
            raise InputError("thin must be >= 1")
        if self.n_chains < 1:
            raise InputError("n_chains must be >= 1")

    @property
    def n_kept(self) -> int:
        return (self.n_iterations - self.n_burnin) // self.thin


@dataclass
class ModelConfig:
    """Model structure and sampler options (everything but data/schedule)."""

    dimension: int = 2
    kernel: str = "distance"
    metric: Optional[str] = "l2"
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    tune: bool = True
    target_acceptance: float = 0.3
    tune_interval: int = 500
    gamma_fixed: Optional[float] = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise InputError("dimension must be >= 1")
        if self.kernel not in ("distance", "multiplicative", "none"):
            raise InputError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "distance" and self.metric not in ("l1", "l2", "linf"):
            raise InputError("distance kernel needs metric l1, l2, or linf")
        if self.tune_interval < 1:
            raise InputError("tune_interval must be >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise InputError("target_acceptance must lie in (0, 1)")


@dataclass
class BlockAcceptance:
    accepted: int = 0
    proposed: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws plus per-block acceptance counters.

    Draw arrays stack the kept states along axis 0.  ``gamma`` is NaN for
    kernels without an interaction weight; ``delta``/``omega`` are None
    outside selection runs.
    """

    alpha: np.ndarray                 # (k, N)
    beta: np.ndarray                  # (k, I)
    gamma: np.ndarray                 # (k,)
    sigma2: np.ndarray                # (k,)
    a_positions: np.ndarray           # (k, N, p)
    b_positions: np.ndarray           # (k, I, p)
    log_posterior: np.ndarray         # (k,)
    acceptance: dict                  # block -> BlockAcceptance, full run
    acceptance_post: dict             # block -> BlockAcceptance, post-burn-in
    kernel_kind: str
    metric: Optional[str]
    chain_id: int = 0
    seed_used: Optional[int] = None
    scales: Optional[ProposalScales] = None
    delta: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    def state_at(self, t: int) -> ParameterState:
        """Materialize kept draw t as a ParameterState."""
        if self.kernel_kind == "distance":
            kernel = InteractionKernel("distance", self.metric, float(self.gamma[t]))
        else:
            kernel = InteractionKernel(self.kernel_kind, None, None)
        return ParameterState(
            MainEffects(self.alpha[t].copy(), self.beta[t].copy()),
            LatentConfiguration(self.a_positions[t].copy(), self.b_positions[t].copy()),
            kernel,
            float(self.sigma2[t]),
            None if self.delta is None else int(self.delta[t]),
            None if self.omega is None else float(self.omega[t]),
        )

    @property
    def draws(self) -> list:
        return [self.state_at(t) for t in range(self.n_draws)]


def _loglik_terms(data: ResponseMatrix, eta: np.ndarray) -> np.ndarray:
    terms = data.values * eta - np.logaddexp(0.0, eta)
    if data.fully_observed:
        return terms
    return np.where(data.observed, terms, 0.0)


def initial_state(data: ResponseMatrix, config: ModelConfig,
                  rng: np.random.Generator, selection: bool = False) -> ParameterState:
    """Prior-consistent starting point.

    Abilities and easiness start at 0, positions are drawn from their
    standard-normal prior, gamma starts at exp of its prior mean (the
    slab mean in selection runs), sigma2 at 1.  Selection runs start
    with the slab active (delta=1) and omega=0.5; burn-in decides
    whether the data keep it there.
    """
    n, i, p = data.n_respondents, data.n_items, config.dimension
    effects = MainEffects(np.zeros(n), np.zeros(i))
    if config.kernel == "none":
        latent = LatentConfiguration(np.zeros((n, p)), np.zeros((i, p)))
        kernel = InteractionKernel("none")
    else:
        latent = LatentConfiguration(rng.standard_normal((n, p)),
                                     rng.standard_normal((i, p)))
        if config.kernel == "multiplicative":
            kernel = InteractionKernel("multiplicative")
        else:
            if config.gamma_fixed is not None:
                gamma0 = float(config.gamma_fixed)
            elif selection:
                gamma0 = math.exp(config.hyper.slab_mean)
            else:
                gamma0 = math.exp(config.hyper.mu_gamma)
            kernel = InteractionKernel("distance", config.metric, gamma0)
    delta, omega = (1, 0.5) if selection else (None, None)
    return ParameterState(effects, latent, kernel, 1.0, delta, omega)


def mh_update_alpha(state: ParameterState, data: ResponseMatrix,
                    hyper: Hyperparameters, scales: ProposalScales,
                    rng: np.random.Generator) -> np.ndarray:
    """Random-walk update of every ability; returns per-respondent accept flags."""
    alpha = state.main_effects.alpha
    noise = scales.s_alpha * rng.standard_normal(alpha.shape[0])
    eta = log_odds_matrix(state)
    row = _loglik_terms(data, eta).sum(axis=1)
    row_star = _loglik_terms(data, eta + noise[:, None]).sum(axis=1)
    alpha_star = alpha + noise
    prior_delta = (alpha**2 - alpha_star**2) / (2.0 * state.sigma2)
    log_ratio = row_star - row + prior_delta
    accept = np.log(rng.random(alpha.shape[0])) < log_ratio
    alpha[accept] = alpha_star[accept]
    return accept


def mh_update_beta(state: ParameterState, data: ResponseMatrix,
                   hyper: Hyperparameters, scales: ProposalScales,
                   rng: np.random.Generator) -> np.ndarray:
    """Random-walk update of every item easiness; returns per-item accept flags."""
    beta = state.main_effects.beta
    noise = scales.s_beta * rng.standard_normal(beta.shape[0])
    eta = log_odds_matrix(state)
    col = _loglik_terms(data, eta).sum(axis=0)
    col_star = _loglik_terms(data, eta + noise[None, :]).sum(axis=0)
    beta_star = beta + noise
    prior_delta = (beta**2 - beta_star**2) / (2.0 * hyper.tau2_beta)
    log_ratio = col_star - col + prior_delta
    accept = np.log(rng.random(beta.shape[0])) < log_ratio
    beta[accept] = beta_star[accept]
    return accept


def mh_update_gamma(state: ParameterState, data: ResponseMatrix,
                    hyper: Hyperparameters, scales: ProposalScales,
                    rng: np.random.Generator) -> bool:
    """Random walk on log(gamma).

    Works entirely on the log scale, where the prior is specified, so the
    proposal stays symmetric and no Jacobian correction is needed.  In
    selection runs (``state.delta`` set) the prior term is the
    delta-selected spike or slab component.
    """
    kernel = state.kernel
    if kernel.kind != "distance":
        raise UsageError("gamma update requires a distance kernel")
    z = math.log(kernel.gamma)
    z_star = z + scales.s_gamma * float(rng.standard_normal())
    gamma_star = math.exp(z_star)
    base = state.main_effects.alpha[:, None] + state.main_effects.beta[None, :]
    d = distance_matrix(state.latent.respondent_positions,
                        state.latent.item_positions, kernel.metric)
    ll = float(_loglik_terms(data, base - kernel.gamma * d).sum())
    ll_star = float(_loglik_terms(data, base - gamma_star * d).sum())
    prior_delta = (log_gamma_prior_logpdf(z_star, hyper, state.delta)
                   - log_gamma_prior_logpdf(z, hyper, state.delta))
    accept = math.log(rng.random()) < ll_star - ll + prior_delta
    if accept:
        kernel.gamma = gamma_star
    return accept


def mh_update_position_a(state: ParameterState, data: ResponseMatrix,
                         hyper: Hyperparameters, scales: ProposalScales,
                         rng: np.random.Generator) -> np.ndarray:
    """Joint p-dimensional update of every respondent position."""
    kernel = state.kernel
    if kernel.kind == "none":
        raise UsageError("position update requires a latent-space kernel")
    positions = state.latent.respondent_positions
    n, p = positions.shape
    proposal = positions + scales.s_pos_a * rng.standard_normal((n, p))
    base = state.main_effects.alpha[:, None] + state.main_effects.beta[None, :]
    g = interaction_matrix(state.latent, kernel)
    g_star = interaction_matrix(
        LatentConfiguration(proposal, state.latent.item_positions), kernel)
    row = _loglik_terms(data, base + g).sum(axis=1)
    row_star = _loglik_terms(data, base + g_star).sum(axis=1)
    prior_delta = 0.5 * ((positions**2).sum(axis=1) - (proposal**2).sum(axis=1))
    log_ratio = row_star - row + prior_delta
    accept = np.log(rng.random(n)) < log_ratio
    positions[accept] = proposal[accept]
    return accept


def mh_update_position_b(state: ParameterState, data: ResponseMatrix,
                         hyper: Hyperparameters, scales: ProposalScales,
                         rng: np.random.Generator) -> np.ndarray:
    """Joint p-dimensional update of every item position."""
    kernel = state.kernel
    if kernel.kind == "none":
        raise UsageError("position update requires a latent-space kernel")
    positions = state.latent.item_positions
    n_items, p = positions.shape
    proposal = positions + scales.s_pos_b * rng.standard_normal((n_items, p))
    base = state.main_effects.alpha[:, None] + state.main_effects.beta[None, :]
    g = interaction_matrix(state.latent, kernel)
    g_star = interaction_matrix(
        LatentConfiguration(state.latent.respondent_positions, proposal), kernel)
    col = _loglik_terms(data, base + g).sum(axis=0)
    col_star = _loglik_terms(data, base + g_star).sum(axis=0)
    prior_delta = 0.5 * ((positions**2).sum(axis=1) - (proposal**2).sum(axis=1))
    log_ratio = col_star - col + prior_delta
    accept = np.log(rng.random(n_items)) < log_ratio
    positions[accept] = proposal[accept]
    return accept


def gibbs_update_sigma2(state: ParameterState, hyper: Hyperparameters,
                        rng: np.random.Generator) -> float:
    """Draw sigma2 from Inv-Gamma(a + N/2, b + sum(alpha^2)/2)."""
    alpha = state.main_effects.alpha
    shape = hyper.sigma2_a + alpha.shape[0] / 2.0
    scale = hyper.sigma2_b + float(alpha @ alpha) / 2.0
    state.sigma2 = scale / float(rng.gamma(shape))
    return state.sigma2


def _tuned_scale(scale: float, rate: float, target: float) -> float:
    # Multiplicative rule, clipped to [0.5, 2] per round.
    return scale * min(2.0, max(0.5, rate / target))


def tune_scales(pilot_output: ChainOutput, target_rate: float = 0.3) -> ProposalScales:
    """Rescale proposals from a pilot run's acceptance rates.

    Each block's scale is multiplied by its observed/target rate ratio,
    clipped to [0.5, 2].  Blocks absent from the pilot keep their scale.
    """
    if pilot_output.scales is None:
        raise UsageError("pilot output carries no proposal scales")
    scales = pilot_output.scales.copy()
    for block, counter in pilot_output.acceptance.items():
        if counter.proposed == 0:
            raise UsageError(f"no proposals recorded for block {block!r}")
        name = SCALE_ATTRS[block]
        setattr(scales, name,
                _tuned_scale(getattr(scales, name), counter.rate, target_rate))
    return scales


class _SweepRecorder:
    """Acceptance bookkeeping for full-run, post-burn-in, and tuning windows."""

    def __init__(self, blocks):
        self.full = {b: BlockAcceptance() for b in blocks}
        self.post = {b: BlockAcceptance() for b in blocks}
        self.window = {b: BlockAcceptance() for b in blocks}

    def record(self, block: str, accepted: int, proposed: int, post: bool) -> None:
        for counters in (self.full, self.post if post else None, self.window):
            if counters is not None:
                counters[block].accepted += accepted
                counters[block].proposed += proposed

    def window_rates(self) -> dict:
        return {b: c.rate for b, c in self.window.items() if c.proposed}

    def reset_window(self) -> None:
        for c in self.window.values():
            c.accepted = 0
            c.proposed = 0


def _retune(scales: ProposalScales, rates: dict, target: float) -> None:
    for block, rate in rates.items():
        name = SCALE_ATTRS[block]
        setattr(scales, name, _tuned_scale(getattr(scales, name), rate, target))


def run_chain(data: ResponseMatrix, config: ModelConfig, schedule: ChainSchedule,
              scales: ProposalScales, rng: np.random.Generator,
              chain_id: int = 0, seed_used: Optional[int] = None) -> ChainOutput:
    """Run one chain and return its thinned post-burn-in draws."""
    hyper = config.hyper
    state = initial_state(data, config, rng)
    if not math.isfinite(log_posterior_unnorm(data, state, hyper)):
        raise NumericError("non-finite log posterior at initialization")

    scales = scales.copy()
    update_gamma = config.kernel == "distance" and config.gamma_fixed is None
    update_positions = config.kernel != "none"
    blocks = ["alpha", "beta"]
    if update_gamma:
        blocks.append("gamma")
    if update_positions:
        blocks += ["position_a", "position_b"]
    rec = _SweepRecorder(blocks)

    n_kept = schedule.n_kept
    n, i, p = data.n_respondents, data.n_items, config.dimension
    out_alpha = np.empty((n_kept, n))
    out_beta = np.empty((n_kept, i))
    out_gamma = np.full(n_kept, np.nan)
    out_sigma2 = np.empty(n_kept)
    out_a = np.empty((n_kept, n, p))
    out_b = np.empty((n_kept, i, p))
    out_logpost = np.empty(n_kept)

    for t in range(schedule.n_iterations):
        post = t >= schedule.n_burnin
        acc = mh_update_alpha(state, data, hyper, scales, rng)
        rec.record("alpha", int(acc.sum()), acc.size, post)
        acc = mh_update_beta(state, data, hyper, scales, rng)
        rec.record("beta", int(acc.sum()), acc.size, post)
        if update_gamma:
            rec.record("gamma", int(mh_update_gamma(state, data, hyper, scales, rng)), 1, post)
        if update_positions:
            acc = mh_update_position_a(state, data, hyper, scales, rng)
            rec.record("position_a", int(acc.sum()), acc.size, post)
            acc = mh_update_position_b(state, data, hyper, scales, rng)
            rec.record("position_b", int(acc.sum()), acc.size, post)
        gibbs_update_sigma2(state, hyper, rng)

        if config.tune and not post and (t + 1) % config.tune_interval == 0:
            _retune(scales, rec.window_rates(), config.target_acceptance)
            rec.reset_window()
        if post and (t - schedule.n_burnin + 1) % schedule.thin == 0:
            k = (t - schedule.n_burnin + 1) // schedule.thin - 1
            out_alpha[k] = state.main_effects.alpha
            out_beta[k] = state.main_effects.beta
            if state.kernel.kind == "distance":
                out_gamma[k] = state.kernel.gamma
            out_sigma2[k] = state.sigma2
            out_a[k] = state.latent.respondent_positions
            out_b[k] = state.latent.item_positions
            out_logpost[k] = log_posterior_unnorm(data, state, hyper)

    return ChainOutput(
        alpha=out_alpha, beta=out_beta, gamma=out_gamma, sigma2=out_sigma2,
        a_positions=out_a, b_positions=out_b, log_posterior=out_logpost,
        acceptance=rec.full, acceptance_post=rec.post,
        kernel_kind=config.kernel, metric=config.metric if config.kernel == "distance" else None,
        chain_id=chain_id, seed_used=seed_used, scales=scales,
    )


def run_chains(data: ResponseMatrix, config: ModelConfig, schedule: ChainSchedule,
               scales: Optional[ProposalScales] = None, n_jobs: int = 1) -> list:
    """Run ``schedule.n_chains`` independent chains.

    Each chain's generator is spawned from ``SeedSequence(schedule.seed)``,
    so results do not depend on ``n_jobs`` and chains may run in parallel.
    """
    if scales is None:
        scales = ProposalScales()
    children = np.random.SeedSequence(schedule.seed).spawn(schedule.n_chains)
    tasks = [
        delayed(run_chain)(data, config, schedule, scales,
                           np.random.default_rng(children[c]),
                           chain_id=c, seed_used=schedule.seed)
        for c in range(schedule.n_chains)
    ]
    if n_jobs == 1 or schedule.n_chains == 1:
        return [task[0](*task[1], **task[2]) for task in tasks]
    return Parallel(n_jobs=n_jobs)(tasks)
