"""Model evaluation core: data/parameter containers, kernels, and densities.

The model for a binary response matrix Y (N respondents by I items) is

    logit P(Y[j, i] = 1) = alpha[j] + beta[i] + g(a[j], b[i])

where alpha[j] is the ability of respondent j, beta[i] the easiness of item
i, and g an interaction kernel acting on latent positions a[j], b[i] in R^p:

    g = 0                      (no kernel; plain Rasch model)
    g = -gamma * d(a_j, b_i)   (distance kernel, gamma >= 0)
    g = a_j . b_i              (multiplicative kernel)

Priors: alpha[j] ~ N(0, sigma2) with sigma2 ~ Inv-Gamma(a, b);
beta[i] ~ N(0, tau2_beta); log(gamma) ~ N(mu_gamma, tau2_gamma) (or a
spike/slab component in selection runs); positions are standard normal.
Latent-space terms (position priors and the gamma prior) are dropped
entirely when the kernel kind is "none".

All evaluation functions here are pure. Cell sums are accumulated by
``np.sum`` over the (N, I) cell-term matrix in C order, so results are
bit-reproducible regardless of caller threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

__all__ = [
    "InputError",
    "NumericError",
    "UsageError",
    "ResponseMatrix",
    "LatentConfiguration",
    "MainEffects",
    "InteractionKernel",
    "Hyperparameters",
    "ParameterState",
    "distance",
    "distance_matrix",
    "interaction_matrix",
    "log_odds",
    "log_odds_matrix",
    "log_likelihood",
    "log_prior",
    "log_posterior_unnorm",
]

METRICS = ("l1", "l2", "linf")
KERNEL_KINDS = ("distance", "multiplicative", "none")


class InputError(ValueError):
    """Invalid user-supplied data or configuration."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite result (degenerate state)."""


class UsageError(RuntimeError):
    """An operation was called outside its supported configuration."""


@dataclass
class ResponseMatrix:
    """Binary responses with an observation mask.

    ``values`` holds 0/1 (unobserved cells are stored as 0 and ignored);
    ``observed`` marks which cells carry a response.  By default every
    respondent row and item column must contain at least one observed
    cell; pass ``require_coverage=False`` to relax that (used for
    prior-only sampling where the likelihood is empty).
    """

    values: np.ndarray
    observed: np.ndarray
    require_coverage: bool = True

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.values.ndim != 2:
            raise InputError("response values must be a 2-D array")
        if self.values.shape != self.observed.shape:
            raise InputError("values and observed mask have different shapes")
        n, i = self.values.shape
        if n < 1 or i < 1:
            raise InputError("need at least one respondent and one item")
        obs_vals = self.values[self.observed]
        if not np.all((obs_vals == 0.0) | (obs_vals == 1.0)):
            raise InputError("observed cells must be exactly 0 or 1")
        self.values = np.where(self.observed, self.values, 0.0)
        self.fully_observed = bool(self.observed.all())
        if self.require_coverage:
            if not self.observed.any(axis=1).all():
                raise InputError("every respondent needs at least one observed response")
            if not self.observed.any(axis=0).all():
                raise InputError("every item needs at least one observed response")

    @property
    def n_respondents(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(cls, x, require_coverage: bool = True) -> "ResponseMatrix":
        """Build from an array where NaN marks a missing response."""
        x = np.asarray(x, dtype=np.float64)
        observed = ~np.isnan(x)
        values = np.where(observed, x, 0.0)
        return cls(values, observed, require_coverage=require_coverage)


@dataclass
class LatentConfiguration:
    """Respondent and item positions sharing one latent space."""

    respondent_positions: np.ndarray  # (N, p)
    item_positions: np.ndarray        # (I, p)

    def __post_init__(self) -> None:
        self.respondent_positions = np.asarray(self.respondent_positions, dtype=np.float64)
        self.item_positions = np.asarray(self.item_positions, dtype=np.float64)
        if self.respondent_positions.ndim != 2 or self.item_positions.ndim != 2:
            raise InputError("positions must be 2-D arrays")
        if self.respondent_positions.shape[1] != self.item_positions.shape[1]:
            raise InputError("respondent and item positions must share one dimension")
        if self.dimension < 1:
            raise InputError("latent dimension must be >= 1")
        if not (np.isfinite(self.respondent_positions).all()
                and np.isfinite(self.item_positions).all()):
            raise InputError("positions must be finite")

    @property
    def dimension(self) -> int:
        return self.respondent_positions.shape[1]

    def copy(self) -> "LatentConfiguration":
        return LatentConfiguration(self.respondent_positions.copy(),
                                   self.item_positions.copy())


@dataclass
class MainEffects:
    """Respondent abilities and item easiness parameters."""

    alpha: np.ndarray  # (N,)
    beta: np.ndarray   # (I,)

    def __post_init__(self) -> None:
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.alpha.ndim != 1 or self.beta.ndim != 1:
            raise InputError("main effects must be 1-D arrays")
        if not (np.isfinite(self.alpha).all() and np.isfinite(self.beta).all()):
            raise InputError("main effects must be finite")

    def copy(self) -> "MainEffects":
        return MainEffects(self.alpha.copy(), self.beta.copy())


@dataclass
class InteractionKernel:
    """Interaction term specification.

    kind="distance" uses g = -gamma * d(a, b) under the chosen metric;
    kind="multiplicative" uses the inner product (no gamma);
    kind="none" drops the term, reducing the model to the Rasch model.
    """

    kind: str
    metric: Optional[str] = None
    gamma: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise InputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "distance":
            if self.metric not in METRICS:
                raise InputError(f"distance kernel needs a metric in {METRICS}")
            if self.gamma is None or not (self.gamma >= 0.0):
                raise InputError("distance kernel needs gamma >= 0")
        else:
            if self.gamma is not None:
                raise InputError(f"gamma is undefined for kind={self.kind!r}")
            if self.kind == "none" and self.metric is not None:
                raise InputError("metric is undefined for kind='none'")

    def copy(self) -> "InteractionKernel":
        return InteractionKernel(self.kind, self.metric, self.gamma)


@dataclass
class Hyperparameters:
    """Prior hyperparameters.

    sigma2_a/sigma2_b parameterize the Inv-Gamma prior on the ability
    variance; tau2_beta the easiness prior variance; mu_gamma/tau2_gamma
    the normal prior on log(gamma).  spike_*/slab_* give the two
    components of the selection-run prior on log(gamma).
    """

    sigma2_a: float = 1.0
    sigma2_b: float = 1.0
    tau2_beta: float = 4.0
    mu_gamma: float = 0.5
    tau2_gamma: float = 1.0
    spike_mean: float = -3.0
    spike_var: float = 1.0
    slab_mean: float = 0.5
    slab_var: float = 1.0

    def __post_init__(self) -> None:
        for name in ("sigma2_a", "sigma2_b", "tau2_beta", "tau2_gamma",
                     "spike_var", "slab_var"):
            if not getattr(self, name) > 0.0:
                raise InputError(f"{name} must be strictly positive")


@dataclass
class ParameterState:
    """One point in parameter space (a Markov chain state)."""

    main_effects: MainEffects
    latent: LatentConfiguration
    kernel: InteractionKernel
    sigma2: float
    delta: Optional[int] = None   # selection runs only
    omega: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.sigma2 > 0.0:
            raise InputError("sigma2 must be strictly positive")
        if self.delta is not None and self.delta not in (0, 1):
            raise InputError("delta must be 0 or 1")
        if self.omega is not None and not (0.0 <= self.omega <= 1.0):
            raise InputError("omega must lie in [0, 1]")

    def copy(self) -> "ParameterState":
        return ParameterState(self.main_effects.copy(), self.latent.copy(),
                              self.kernel.copy(), self.sigma2,
                              self.delta, self.omega)


def distance(a, b, metric: str) -> float:
    """Distance between two p-vectors under the l1, l2, or linf norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise InputError("distance needs two 1-D vectors of equal length")
    diff = a - b
    if metric == "l1":
        return float(np.sum(np.abs(diff)))
    if metric == "l2":
        return float(np.sqrt(np.sum(diff * diff)))
    if metric == "linf":
        return float(np.max(np.abs(diff)))
    raise InputError(f"unknown metric {metric!r}")


def distance_matrix(respondent_positions: np.ndarray,
                    item_positions: np.ndarray, metric: str) -> np.ndarray:
    """All respondent-item distances, shape (N, I).

    l2 distances use sqrt of the summed squared differences (not the
    inner-product identity), keeping full relative accuracy for small
    distances.
    """
    diff = respondent_positions[:, None, :] - item_positions[None, :, :]
    if metric == "l1":
        return np.sum(np.abs(diff), axis=2)
    if metric == "l2":
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "linf":
        return np.max(np.abs(diff), axis=2)
    raise InputError(f"unknown metric {metric!r}")


def interaction_matrix(latent: LatentConfiguration,
                       kernel: InteractionKernel) -> np.ndarray:
    """Kernel term g(a_j, b_i) for every cell, shape (N, I)."""
    n = latent.respondent_positions.shape[0]
    i = latent.item_positions.shape[0]
    if kernel.kind == "none":
        return np.zeros((n, i))
    if kernel.kind == "multiplicative":
        return latent.respondent_positions @ latent.item_positions.T
    d = distance_matrix(latent.respondent_positions, latent.item_positions,
                        kernel.metric)
    return -kernel.gamma * d


def log_odds(j: int, i: int, state: ParameterState) -> float:
    """Log odds of a correct response by respondent j to item i."""
    base = state.main_effects.alpha[j] + state.main_effects.beta[i]
    kernel = state.kernel
    if kernel.kind == "none":
        return float(base)
    a = state.latent.respondent_positions[j]
    b = state.latent.item_positions[i]
    if kernel.kind == "multiplicative":
        return float(base + a @ b)
    return float(base + (-kernel.gamma) * distance(a, b, kernel.metric))


def log_odds_matrix(state: ParameterState) -> np.ndarray:
    """Log odds for every cell, shape (N, I)."""
    base = state.main_effects.alpha[:, None] + state.main_effects.beta[None, :]
    return base + interaction_matrix(state.latent, state.kernel)


def log_likelihood(data: ResponseMatrix, state: ParameterState) -> float:
    """Bernoulli log-likelihood over observed cells.

    Each observed cell contributes y*eta - log(1 + exp(eta)); the log term
    is evaluated with ``np.logaddexp`` so the result stays finite for
    |eta| up to 700.  Unobserved cells contribute 0.
    """
    if data.n_respondents != state.main_effects.alpha.shape[0]:
        raise InputError("data and state disagree on the number of respondents")
    if data.n_items != state.main_effects.beta.shape[0]:
        raise InputError("data and state disagree on the number of items")
    with np.errstate(invalid="ignore", over="ignore"):
        eta = log_odds_matrix(state)
        terms = data.values * eta - np.logaddexp(0.0, eta)
    if not data.fully_observed:
        terms = np.where(data.observed, terms, 0.0)
    total = float(np.sum(terms))
    if not math.isfinite(total):
        raise NumericError("log-likelihood is non-finite")
    return total


def _normal_logpdf(x, mean: float, var: float):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def _invgamma_logpdf(x: float, shape: float, scale: float) -> float:
    return (shape * math.log(scale) - float(gammaln(shape))
            - (shape + 1.0) * math.log(x) - scale / x)


def log_prior(state: ParameterState, hyper: Hyperparameters) -> float:
    """Joint log prior density of a parameter state.

    Includes the ability, easiness, and sigma2 terms always; the
    log(gamma) term (plain normal, or the delta-selected spike/slab
    component when ``state.delta`` is set) and standard-normal position
    terms only when the kernel has a latent space.  The delta/omega
    hyperprior terms are constant across the blocks sampled here and are
    handled by their own conditional updates.
    """
    if not state.sigma2 > 0.0:
        raise InputError("sigma2 must be strictly positive")
    alpha = state.main_effects.alpha
    beta = state.main_effects.beta
    total = float(np.sum(_normal_logpdf(alpha, 0.0, state.sigma2)))
    total += float(np.sum(_normal_logpdf(beta, 0.0, hyper.tau2_beta)))
    total += _invgamma_logpdf(state.sigma2, hyper.sigma2_a, hyper.sigma2_b)
    kernel = state.kernel
    if kernel.kind == "none":
        return total
    total += float(np.sum(_normal_logpdf(state.latent.respondent_positions, 0.0, 1.0)))
    total += float(np.sum(_normal_logpdf(state.latent.item_positions, 0.0, 1.0)))
    if kernel.kind == "distance":
        if kernel.gamma == 0.0:
            return float("-inf")  # the log-normal prior has no mass at zero
        total += float(log_gamma_prior_logpdf(math.log(kernel.gamma), hyper,
                                              state.delta))
    return total


def log_gamma_prior_logpdf(log_gamma: float, hyper: Hyperparameters,
                           delta: Optional[int]) -> float:
    """Prior log-density of log(gamma): plain, or the delta-selected component."""
    if delta is None:
        return float(_normal_logpdf(log_gamma, hyper.mu_gamma, hyper.tau2_gamma))
    if delta == 1:
        return float(_normal_logpdf(log_gamma, hyper.slab_mean, hyper.slab_var))
    return float(_normal_logpdf(log_gamma, hyper.spike_mean, hyper.spike_var))


def log_posterior_unnorm(data: ResponseMatrix, state: ParameterState,
                         hyper: Hyperparameters) -> float:
    """Unnormalized log posterior: log-likelihood plus log prior."""
    return log_likelihood(data, state) + log_prior(state, hyper)
