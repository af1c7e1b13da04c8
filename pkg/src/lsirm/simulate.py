"""Synthetic response-matrix generators.

Every generator is deterministic given its generator instance and records
the planted parameters in a GroundTruth sidecar so recovery can be scored
later.  Scenarios:

  rasch              main effects only
  local_dependence   Rasch baseline plus a log-odds boost on
                     (respondent block x item block) pairs
  two_cluster        deterministic complementary block patterns, with an
                     optional tail of respondents answering at random
  lsirm              main effects plus a planted distance interaction
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .model import InputError, ResponseMatrix, distance_matrix

__all__ = [
    "GroundTruth",
    "Scenario",
    "generate_rasch",
    "generate_local_dependence",
    "generate_two_cluster",
    "generate_lsirm",
]

SCENARIO_KINDS = ("rasch", "local_dependence", "two_cluster",
                  "two_cluster_noisy", "lsirm")


@dataclass
class GroundTruth:
    """Planted parameters behind a generated dataset."""

    kind: str
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    respondent_positions: Optional[np.ndarray] = None
    item_positions: Optional[np.ndarray] = None
    boost: Optional[float] = None
    blocks: Optional[list] = None
    n_random: Optional[int] = None

    def to_json(self) -> str:
        payload = {}
        for name, value in self.__dict__.items():
            if value is None:
                continue
            if isinstance(value, np.ndarray):
                payload[name] = value.tolist()
            else:
                payload[name] = value
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        payload = json.loads(text)
        for name in ("alpha", "beta", "respondent_positions", "item_positions"):
            if name in payload:
                payload[name] = np.asarray(payload[name], dtype=np.float64)
        return cls(**payload)


def _bernoulli_matrix(eta: np.ndarray, rng: np.random.Generator) -> ResponseMatrix:
    values = (rng.random(eta.shape) < expit(eta)).astype(np.float64)
    return ResponseMatrix(values, np.ones(eta.shape, dtype=bool))


def generate_rasch(n_respondents: int, n_items: int, rng: np.random.Generator,
                   alpha_var: float = 1.0, beta_var: float = 1.0):
    """Rasch-model data: logit P = alpha_j + beta_i."""
    alpha = np.sqrt(alpha_var) * rng.standard_normal(n_respondents)
    beta = np.sqrt(beta_var) * rng.standard_normal(n_items)
    data = _bernoulli_matrix(alpha[:, None] + beta[None, :], rng)
    return data, GroundTruth("rasch", alpha=alpha, beta=beta)


def _default_blocks(n_respondents: int, n_items: int):
    half_r, half_i = n_respondents // 2, n_items // 2
    return [(list(range(half_r)), list(range(half_i))),
            (list(range(half_r, n_respondents)), list(range(half_i, n_items)))]


def generate_local_dependence(n_respondents: int, n_items: int,
                              rng: np.random.Generator,
                              blocks: Optional[list] = None, boost: float = 2.0,
                              alpha_var: float = 1.0, beta_var: float = 1.0):
    """Rasch baseline with a log-odds boost inside respondent x item blocks.

    ``blocks`` is a list of (respondent indices, item indices) pairs;
    respondent blocks must be pairwise disjoint, and likewise item
    blocks.  Defaults to the first/last halves of both axes.
    """
    if blocks is None:
        blocks = _default_blocks(n_respondents, n_items)
    seen_r, seen_i = set(), set()
    for rows, cols in blocks:
        rows, cols = set(rows), set(cols)
        if rows & seen_r or cols & seen_i:
            raise InputError("local-dependence blocks must be disjoint")
        if not rows <= set(range(n_respondents)) or not cols <= set(range(n_items)):
            raise InputError("block indices out of range")
        seen_r |= rows
        seen_i |= cols
    alpha = np.sqrt(alpha_var) * rng.standard_normal(n_respondents)
    beta = np.sqrt(beta_var) * rng.standard_normal(n_items)
    eta = alpha[:, None] + beta[None, :]
    bumped = eta.copy()
    for rows, cols in blocks:
        bumped[np.ix_(sorted(rows), sorted(cols))] += boost
    data = _bernoulli_matrix(bumped if boost != 0.0 else eta, rng)
    truth = GroundTruth("local_dependence", alpha=alpha, beta=beta, boost=boost,
                        blocks=[[sorted(r), sorted(c)] for r, c in blocks])
    return data, truth


def generate_two_cluster(n_respondents: int, n_items: int,
                         rng: np.random.Generator, n_random: int = 0):
    """Complementary deterministic response patterns plus random respondents.

    The first half of the structured respondents answer the first
    n_items//2 items correctly and the rest incorrectly; the second half
    answer complementarily.  The final ``n_random`` respondents answer
    every item Bernoulli(0.5).
    """
    if not 0 <= n_random <= n_respondents:
        raise InputError("n_random must lie in [0, n_respondents]")
    structured = n_respondents - n_random
    first_group = structured // 2
    split = n_items // 2
    values = np.zeros((n_respondents, n_items))
    values[:first_group, :split] = 1.0
    values[first_group:structured, split:] = 1.0
    if n_random:
        values[structured:] = (rng.random((n_random, n_items)) < 0.5).astype(np.float64)
    data = ResponseMatrix(values, np.ones_like(values, dtype=bool))
    kind = "two_cluster_noisy" if n_random else "two_cluster"
    return data, GroundTruth(kind, n_random=n_random)


def generate_lsirm(n_respondents: int, n_items: int, rng: np.random.Generator,
                   gamma: float = 1.7, dimension: int = 2, metric: str = "l2",
                   alpha_var: float = 1.0, beta_var: float = 1.0):
    """Latent space data: logit P = alpha_j + beta_i - gamma * d(a_j, b_i)."""
    if gamma < 0.0:
        raise InputError("gamma must be nonnegative")
    alpha = np.sqrt(alpha_var) * rng.standard_normal(n_respondents)
    beta = np.sqrt(beta_var) * rng.standard_normal(n_items)
    a = rng.standard_normal((n_respondents, dimension))
    b = rng.standard_normal((n_items, dimension))
    eta = alpha[:, None] + beta[None, :] - gamma * distance_matrix(a, b, metric)
    data = _bernoulli_matrix(eta, rng)
    truth = GroundTruth("lsirm", alpha=alpha, beta=beta, gamma=gamma,
                        respondent_positions=a, item_positions=b)
    return data, truth


@dataclass
class Scenario:
    """A named generation setting, as driven from the command line."""

    kind: str
    n_respondents: int
    n_items: int
    gamma: float = 1.7
    dimension: int = 2
    boost: float = 2.0
    n_random: int = 20
    blocks: Optional[list] = None
    alpha_var: float = 1.0
    beta_var: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise InputError(f"unknown scenario kind {self.kind!r}")
        if self.n_respondents < 1 or self.n_items < 1:
            raise InputError("scenario needs positive dimensions")

    def generate(self, rng: np.random.Generator):
        if self.kind == "rasch":
            return generate_rasch(self.n_respondents, self.n_items, rng,
                                  self.alpha_var, self.beta_var)
        if self.kind == "local_dependence":
            return generate_local_dependence(self.n_respondents, self.n_items, rng,
                                             self.blocks, self.boost,
                                             self.alpha_var, self.beta_var)
        if self.kind == "two_cluster":
            return generate_two_cluster(self.n_respondents, self.n_items, rng, 0)
        if self.kind == "two_cluster_noisy":
            return generate_two_cluster(self.n_respondents, self.n_items, rng,
                                        self.n_random)
        return generate_lsirm(self.n_respondents, self.n_items, rng,
                              self.gamma, self.dimension,
                              alpha_var=self.alpha_var, beta_var=self.beta_var)
