"""Posterior post-processing: alignment, diagnostics, and summaries.

The likelihood only sees positions through distances, so every draw's
configuration is defined up to translation, rotation, and reflection.
Draws are identified by orthogonal Procrustes matching against a
reference configuration (by convention the draw with the highest log
posterior): respondent and item positions are stacked, centered, and
rotated/reflected to minimize the Frobenius distance to the centered
reference.  No scaling is applied, because the likelihood is not
scale-invariant.

Quantiles throughout use linear interpolation between order statistics
(numpy's default), so identical inputs summarize identically everywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import InputError, LatentConfiguration

__all__ = [
    "AlignedDraws",
    "ScalarSummary",
    "VectorSummary",
    "PositionSummary",
    "PosteriorSummary",
    "procrustes_align",
    "align_chains",
    "gelman_rubin",
    "summarize",
    "cosine_similarity",
    "group_center_similarity",
    "apply_rotation",
]

ORTHOGONALITY_TOL = 1e-9


@dataclass
class AlignedDraws:
    """Procrustes-aligned position draws.

    ``transform_log[t]`` holds the pair (translation, rotation) with
    aligned = stacked_positions @ rotation + translation; each rotation
    is orthogonal, so within-draw distances are preserved.
    """

    reference: LatentConfiguration
    aligned: list            # list[LatentConfiguration]
    transform_log: list      # list[(translation (p,), rotation (p, p))]

    @property
    def n_draws(self) -> int:
        return len(self.aligned)

    def respondent_stack(self) -> np.ndarray:
        return np.stack([cfg.respondent_positions for cfg in self.aligned])

    def item_stack(self) -> np.ndarray:
        return np.stack([cfg.item_positions for cfg in self.aligned])


def _align_one(stacked: np.ndarray, ref_centered: np.ndarray,
               ref_mean: np.ndarray):
    """Orthogonal Procrustes solution for one stacked (N+I, p) draw."""
    p = stacked.shape[1]
    mean = stacked.mean(axis=0)
    centered = stacked - mean
    cross = centered.T @ ref_centered
    if not np.isfinite(cross).all() or np.linalg.matrix_rank(cross) < p:
        warnings.warn("rank-deficient Procrustes cross-product; keeping draw unaligned")
        return stacked, np.zeros(p), np.eye(p)
    u, _, vt = np.linalg.svd(cross)
    rotation = u @ vt
    translation = ref_mean - mean @ rotation
    return stacked @ rotation + translation, translation, rotation


def procrustes_align(draws: Sequence[LatentConfiguration],
                     reference: LatentConfiguration) -> AlignedDraws:
    """Align each draw to the reference by translation plus rotation/reflection."""
    n = reference.respondent_positions.shape[0]
    ref_stack = np.vstack([reference.respondent_positions, reference.item_positions])
    ref_mean = ref_stack.mean(axis=0)
    ref_centered = ref_stack - ref_mean
    aligned = []
    log = []
    for cfg in draws:
        if cfg.dimension != reference.dimension:
            raise InputError("draws and reference disagree on latent dimension")
        stacked = np.vstack([cfg.respondent_positions, cfg.item_positions])
        moved, translation, rotation = _align_one(stacked, ref_centered, ref_mean)
        aligned.append(LatentConfiguration(moved[:n], moved[n:]))
        log.append((translation, rotation))
    return AlignedDraws(reference.copy(), aligned, log)


def align_chains(chains: Sequence) -> AlignedDraws:
    """Align all kept draws across chains to the highest-posterior draw."""
    logpost = np.concatenate([c.log_posterior for c in chains])
    a = np.concatenate([c.a_positions for c in chains])
    b = np.concatenate([c.b_positions for c in chains])
    best = int(np.argmax(logpost))
    reference = LatentConfiguration(a[best], b[best])
    draws = [LatentConfiguration(a[t], b[t]) for t in range(a.shape[0])]
    if chains[0].kernel_kind == "none":
        # Rasch fits carry no latent geometry; nothing to align.
        p = reference.dimension
        identity = [(np.zeros(p), np.eye(p)) for _ in draws]
        return AlignedDraws(reference, draws, identity)
    return procrustes_align(draws, reference)


def gelman_rubin(chains: Sequence[np.ndarray]) -> float:
    """Potential scale reduction factor of >= 2 equal-length scalar traces.

    psrf = sqrt((n-1)/n + B/(n*W)) with W the mean within-chain variance
    and B/n the variance of the chain means.  All-equal chains give 1;
    zero within-chain variance with differing means reports +inf
    (diverged).
    """
    traces = [np.asarray(c, dtype=np.float64) for c in chains]
    if len(traces) < 2:
        raise InputError("need at least two chains")
    n = traces[0].shape[0]
    if n < 2 or any(t.ndim != 1 or t.shape[0] != n for t in traces):
        raise InputError("chains must be equal-length 1-D traces with n >= 2")
    stacked = np.stack(traces)
    w = float(stacked.var(axis=1, ddof=1).mean())
    means_var = float(stacked.mean(axis=1).var(ddof=1))
    if w == 0.0:
        return 1.0 if means_var == 0.0 else float("inf")
    return float(np.sqrt((n - 1.0) / n + means_var / w))


@dataclass
class ScalarSummary:
    mean: float
    median: float
    lower: float
    upper: float
    psrf: Optional[float] = None

    def __post_init__(self) -> None:
        if not (self.lower <= self.median <= self.upper):
            raise InputError("quantiles out of order")


@dataclass
class VectorSummary:
    """Per-component posterior summaries of a vector parameter."""

    mean: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    psrf: Optional[np.ndarray] = None


@dataclass
class PositionSummary:
    """Posterior mean positions with a per-coordinate 95% credible box."""

    mean: np.ndarray    # (n, p)
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class PosteriorSummary:
    alpha: VectorSummary
    beta: VectorSummary
    sigma2: ScalarSummary
    respondents: PositionSummary
    items: PositionSummary
    gamma: Optional[ScalarSummary] = None
    acceptance: Optional[dict] = None


def _scalar_summary(pooled: np.ndarray, per_chain: Optional[list] = None) -> ScalarSummary:
    lo, med, hi = np.quantile(pooled, [0.025, 0.5, 0.975], method="linear")
    psrf = None
    if per_chain is not None and len(per_chain) >= 2:
        psrf = gelman_rubin(per_chain)
    return ScalarSummary(float(pooled.mean()), float(med), float(lo), float(hi), psrf)


def _vector_summary(pooled: np.ndarray, per_chain: Optional[list] = None) -> VectorSummary:
    lo, med, hi = np.quantile(pooled, [0.025, 0.5, 0.975], axis=0, method="linear")
    psrf = None
    if per_chain is not None and len(per_chain) >= 2:
        psrf = np.array([gelman_rubin([c[:, j] for c in per_chain])
                         for j in range(pooled.shape[1])])
    return VectorSummary(pooled.mean(axis=0), med, lo, hi, psrf)


def _position_summary(stack: np.ndarray) -> PositionSummary:
    lo, hi = np.quantile(stack, [0.025, 0.975], axis=0, method="linear")
    return PositionSummary(stack.mean(axis=0), lo, hi)


def summarize(chains: Sequence, aligned: Optional[AlignedDraws] = None) -> PosteriorSummary:
    """Reduce chains (and aligned positions) to a PosteriorSummary.

    Scalar/vector traces are pooled across chains for point estimates and
    95% intervals; PSRF is computed across chains when two or more are
    given.  Position summaries use aligned draws (alignment is computed
    here when not supplied).
    """
    if aligned is None:
        aligned = align_chains(chains)
    alpha_chains = [c.alpha for c in chains]
    beta_chains = [c.beta for c in chains]
    sigma2_chains = [c.sigma2 for c in chains]
    summary = PosteriorSummary(
        alpha=_vector_summary(np.concatenate(alpha_chains), alpha_chains),
        beta=_vector_summary(np.concatenate(beta_chains), beta_chains),
        sigma2=_scalar_summary(np.concatenate(sigma2_chains), sigma2_chains),
        respondents=_position_summary(aligned.respondent_stack()),
        items=_position_summary(aligned.item_stack()),
    )
    if chains[0].kernel_kind == "distance" and np.isfinite(chains[0].gamma).all():
        gamma_chains = [c.gamma for c in chains]
        summary.gamma = _scalar_summary(np.concatenate(gamma_chains), gamma_chains)
    acc = {}
    for block in chains[0].acceptance:
        accepted = sum(c.acceptance[block].accepted for c in chains)
        proposed = sum(c.acceptance[block].proposed for c in chains)
        acc[block] = accepted / proposed if proposed else float("nan")
    summary.acceptance = acc
    return summary


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two nonzero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise InputError("cosine similarity needs nonzero vectors")
    return float(a @ b / (norm_a * norm_b))


def group_center_similarity(positions: np.ndarray,
                            groups: Sequence[Sequence[int]]) -> np.ndarray:
    """Pairwise cosine similarities between group-center positions."""
    centers = [np.asarray(positions)[np.asarray(idx, dtype=int)].mean(axis=0)
               for idx in groups]
    k = len(centers)
    out = np.eye(k)
    for r in range(k):
        for c in range(r + 1, k):
            out[r, c] = out[c, r] = cosine_similarity(centers[r], centers[c])
    return out


def apply_rotation(latent: LatentConfiguration, rotation: np.ndarray) -> LatentConfiguration:
    """Apply one p x p invertible matrix to respondent and item positions.

    Non-orthogonal matrices are accepted but flagged with a warning,
    since they do not preserve distances.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    p = latent.dimension
    if rotation.shape != (p, p):
        raise InputError(f"rotation must be {p} x {p}")
    if not np.isfinite(rotation).all() or np.linalg.det(rotation) == 0.0:
        raise InputError("rotation must be invertible")
    if np.abs(rotation.T @ rotation - np.eye(p)).max() > ORTHOGONALITY_TOL:
        warnings.warn("rotation is not orthogonal: distances not preserved")
    return LatentConfiguration(latent.respondent_positions @ rotation,
                               latent.item_positions @ rotation)
