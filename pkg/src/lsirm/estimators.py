"""Estimator-style front end for fitting and model selection.

``LatentSpaceIRT`` follows the familiar fit/predict pattern: construct
with sampler settings, call ``fit`` on an (N, I) binary response matrix
(NaN marks missing responses), then read posterior point estimates and
summaries from trailing-underscore attributes.  ``LatentSpaceSelector``
runs the spike-and-slab comparison against the Rasch model.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils import check_array

from .model import Hyperparameters, InputError, ResponseMatrix, log_odds_matrix
from .postproc import align_chains, summarize
from .sampler import ChainSchedule, ModelConfig, ProposalScales, run_chains
from .selection import run_selection

__all__ = ["LatentSpaceIRT", "LatentSpaceSelector"]


def _as_response_matrix(x, observed=None) -> ResponseMatrix:
    if isinstance(x, ResponseMatrix):
        return x
    x = check_array(x, dtype=np.float64, ensure_all_finite="allow-nan")
    if observed is not None:
        observed = check_array(observed, dtype=bool)
        return ResponseMatrix(np.where(observed, np.nan_to_num(x), 0.0), observed)
    return ResponseMatrix.from_array(x)


def _resolve_seed(random_state) -> int:
    if random_state is None:
        return int(np.random.SeedSequence().entropy % (2**63))
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    raise InputError("random_state must be an integer seed or None")


class LatentSpaceIRT(BaseEstimator):
    """Bayesian latent space item response model.

    Parameters mirror the sampler configuration: latent dimension,
    kernel ("distance", "multiplicative", or "none" for a plain Rasch
    fit), distance metric, chain schedule, proposal scales, and prior
    hyperparameters.  ``gamma_fixed=0`` fits the Rasch model; any other
    fixed value holds the interaction weight constant during sampling.

    After ``fit``: ``alpha_``, ``beta_``, ``gamma_``, ``sigma2_`` hold
    posterior means (``gamma_`` is None without a distance kernel);
    ``respondent_positions_`` and ``item_positions_`` hold aligned
    posterior mean positions; ``summary_`` the full posterior summary;
    ``chains_`` and ``aligned_`` the raw material.
    """

    def __init__(self, n_dims=2, kernel="distance", metric="l2",
                 gamma_fixed=None, n_iterations=20000, n_burnin=10000,
                 thin=1, n_chains=3, hyper=None, scales=None, tune=True,
                 target_acceptance=0.3, tune_interval=500, n_jobs=1,
                 random_state=None):
        self.n_dims = n_dims
        self.kernel = kernel
        self.metric = metric
        self.gamma_fixed = gamma_fixed
        self.n_iterations = n_iterations
        self.n_burnin = n_burnin
        self.thin = thin
        self.n_chains = n_chains
        self.hyper = hyper
        self.scales = scales
        self.tune = tune
        self.target_acceptance = target_acceptance
        self.tune_interval = tune_interval
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _config(self) -> ModelConfig:
        kernel = self.kernel
        gamma_fixed = self.gamma_fixed
        if gamma_fixed is not None and gamma_fixed == 0.0:
            kernel, gamma_fixed = "none", None
        return ModelConfig(
            dimension=self.n_dims, kernel=kernel,
            metric=self.metric if kernel == "distance" else None,
            hyper=self.hyper if self.hyper is not None else Hyperparameters(),
            tune=self.tune, target_acceptance=self.target_acceptance,
            tune_interval=self.tune_interval, gamma_fixed=gamma_fixed,
        )

    def _schedule(self) -> ChainSchedule:
        return ChainSchedule(self.n_iterations, self.n_burnin, self.thin,
                             self.n_chains, _resolve_seed(self.random_state))

    def fit(self, X, observed=None):
        """Sample the posterior given responses X (NaN = missing)."""
        data = _as_response_matrix(X, observed)
        config = self._config()
        schedule = self._schedule()
        scales = self.scales if self.scales is not None else ProposalScales()
        self.data_ = data
        self.config_ = config
        self.schedule_ = schedule
        self.chains_ = run_chains(data, config, schedule, scales, n_jobs=self.n_jobs)
        self.aligned_ = align_chains(self.chains_)
        self.summary_ = summarize(self.chains_, self.aligned_)
        self.alpha_ = self.summary_.alpha.mean
        self.beta_ = self.summary_.beta.mean
        self.sigma2_ = self.summary_.sigma2.mean
        self.gamma_ = None if self.summary_.gamma is None else self.summary_.gamma.mean
        self.respondent_positions_ = self.summary_.respondents.mean
        self.item_positions_ = self.summary_.items.mean
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "chains_"):
            raise InputError("estimator is not fitted")

    def predict_proba(self) -> np.ndarray:
        """Posterior-mean probability of a positive response per cell."""
        self._check_fitted()
        total = np.zeros((self.data_.n_respondents, self.data_.n_items))
        count = 0
        for chain in self.chains_:
            for t in range(chain.n_draws):
                total += expit(log_odds_matrix(chain.state_at(t)))
                count += 1
        return total / count

    def predict(self) -> np.ndarray:
        """Most likely response per cell under the posterior-mean probabilities."""
        return (self.predict_proba() >= 0.5).astype(np.int64)


class LatentSpaceSelector(BaseEstimator):
    """Spike-and-slab choice between the Rasch and latent space models.

    After ``fit``: ``inclusion_probability_`` is the posterior
    probability of the slab (interaction present), ``chosen_model_``
    either "rasch" or "latent_space", and ``result_`` the full
    SelectionResult with traces.
    """

    def __init__(self, n_dims=2, metric="l2", n_iterations=10000,
                 n_burnin=5000, thin=1, n_chains=1, hyper=None, scales=None,
                 tune=True, target_acceptance=0.3, tune_interval=500,
                 n_jobs=1, random_state=None):
        self.n_dims = n_dims
        self.metric = metric
        self.n_iterations = n_iterations
        self.n_burnin = n_burnin
        self.thin = thin
        self.n_chains = n_chains
        self.hyper = hyper
        self.scales = scales
        self.tune = tune
        self.target_acceptance = target_acceptance
        self.tune_interval = tune_interval
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, X, observed=None):
        data = _as_response_matrix(X, observed)
        config = ModelConfig(
            dimension=self.n_dims, kernel="distance", metric=self.metric,
            hyper=self.hyper if self.hyper is not None else Hyperparameters(),
            tune=self.tune, target_acceptance=self.target_acceptance,
            tune_interval=self.tune_interval,
        )
        schedule = ChainSchedule(self.n_iterations, self.n_burnin, self.thin,
                                 self.n_chains, _resolve_seed(self.random_state))
        scales = self.scales if self.scales is not None else ProposalScales()
        self.result_ = run_selection(data, config, schedule, scales, n_jobs=self.n_jobs)
        self.inclusion_probability_ = self.result_.inclusion_probability
        self.chosen_model_ = self.result_.chosen_model
        return self
