"""File formats for the command-line tools.

Input responses are comma-separated 0/1/NA cells, one respondent per
row; a header row is auto-detected.  Fit bundles consist of
summary.json (schema 1), positions.csv (plot-ready aligned positions),
traces.csv (scalar traces per chain), draws.npz (raw kept draws), and
manifest.json (enough to re-run the command bit-identically).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import platform
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .model import InputError, ResponseMatrix
from .postproc import PosteriorSummary
from .sampler import BlockAcceptance, ChainOutput
from .simulate import GroundTruth

SCHEMA_VERSION = 1

MISSING_TOKENS = {"", "na", "nan", "n/a", "."}


def load_response_csv(path) -> ResponseMatrix:
    """Read a response matrix; cells are 0, 1, or NA (missing)."""
    rows = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        raw = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not raw:
        raise InputError(f"{path}: empty response file")

    def parse_cell(cell: str) -> float:
        token = cell.strip().lower()
        if token in MISSING_TOKENS:
            return np.nan
        if token in ("0", "1"):
            return float(token)
        raise ValueError(token)

    def looks_like_header(row) -> bool:
        # A label row has at least one token that is not numeric at all;
        # numeric tokens outside {0, 1, NA} are data errors, not headers.
        for cell in row:
            token = cell.strip().lower()
            if token in MISSING_TOKENS or token in ("0", "1"):
                continue
            try:
                float(token)
            except ValueError:
                return True
        return False

    start = 0
    first = None
    if looks_like_header(raw[0]):
        start = 1
    else:
        try:
            first = [parse_cell(c) for c in raw[0]]
        except ValueError as err:
            raise InputError(f"{path}:1: cell {err} is not 0, 1, or NA") from None
    width = len(raw[start])
    parsed = [] if first is None else [first]
    for lineno, row in enumerate(raw[start + (0 if first is None else 1):],
                                 start=start + (1 if first is None else 2)):
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} cells, got {len(row)}")
        try:
            parsed.append([parse_cell(c) for c in row])
        except ValueError as err:
            raise InputError(f"{path}:{lineno}: cell {err} is not 0, 1, or NA") from None
    try:
        return ResponseMatrix.from_array(np.asarray(parsed))
    except InputError as err:
        raise InputError(f"{path}: {err}") from None


def save_response_csv(path, data: ResponseMatrix) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"item_{i + 1}" for i in range(data.n_items)])
        for j in range(data.n_respondents):
            writer.writerow([
                "NA" if not data.observed[j, i] else str(int(data.values[j, i]))
                for i in range(data.n_items)
            ])


def _round_trip(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _summary_block(block) -> Optional[dict]:
    if block is None:
        return None
    out = {}
    for field in dataclasses.fields(block):
        out[field.name] = _round_trip(getattr(block, field.name))
    return out


def write_summary_json(path, summary: PosteriorSummary, model_meta: dict,
                       data_meta: dict) -> None:
    payload = {
        "schema": SCHEMA_VERSION,
        "model": model_meta,
        "data": data_meta,
        "alpha": _summary_block(summary.alpha),
        "beta": _summary_block(summary.beta),
        "gamma": _summary_block(summary.gamma),
        "sigma2": _summary_block(summary.sigma2),
        "respondent_positions": _summary_block(summary.respondents),
        "item_positions": _summary_block(summary.items),
        "acceptance": summary.acceptance,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=1)
        handle.write("\n")


def _coordinate_names(p: int) -> list:
    return ["x", "y"] if p == 2 else [f"x{k + 1}" for k in range(p)]


def write_positions_csv(path, summary: PosteriorSummary) -> None:
    """Plot-ready aligned positions with per-coordinate credible bounds."""
    p = summary.respondents.mean.shape[1]
    names = _coordinate_names(p)
    header = ["id", "type"] + names
    for name in names:
        header += [f"{name}_lower", f"{name}_upper"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for kind, block in (("respondent", summary.respondents),
                            ("item", summary.items)):
            for idx in range(block.mean.shape[0]):
                row = [idx + 1, kind] + [repr(float(v)) for v in block.mean[idx]]
                for k in range(p):
                    row += [repr(float(block.lower[idx, k])),
                            repr(float(block.upper[idx, k]))]
                writer.writerow(row)


def write_traces_csv(path, chains: Sequence[ChainOutput]) -> None:
    selection = chains[0].delta is not None
    header = ["chain", "draw", "gamma", "sigma2", "log_posterior"]
    if selection:
        header += ["delta", "omega"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for chain in chains:
            for t in range(chain.n_draws):
                row = [chain.chain_id, t, repr(float(chain.gamma[t])),
                       repr(float(chain.sigma2[t])),
                       repr(float(chain.log_posterior[t]))]
                if selection:
                    row += [int(chain.delta[t]), repr(float(chain.omega[t]))]
                writer.writerow(row)


def save_draws(path, chains: Sequence[ChainOutput], n_observed: Optional[int] = None,
               gamma_fixed: Optional[float] = None) -> None:
    """Persist kept draws (all chains stacked) for later ppc/summarize runs."""
    blocks = sorted(chains[0].acceptance)
    arrays = {
        "n_observed": np.array(-1 if n_observed is None else n_observed),
        "gamma_fixed": np.array(np.nan if gamma_fixed is None else gamma_fixed),
        "alpha": np.stack([c.alpha for c in chains]),
        "beta": np.stack([c.beta for c in chains]),
        "gamma": np.stack([c.gamma for c in chains]),
        "sigma2": np.stack([c.sigma2 for c in chains]),
        "a_positions": np.stack([c.a_positions for c in chains]),
        "b_positions": np.stack([c.b_positions for c in chains]),
        "log_posterior": np.stack([c.log_posterior for c in chains]),
        "kernel_kind": np.array(chains[0].kernel_kind),
        "metric": np.array(chains[0].metric or "none"),
        "seed": np.array(-1 if chains[0].seed_used is None else chains[0].seed_used),
        "acc_blocks": np.array(blocks),
        "acc_accepted": np.array([[c.acceptance[b].accepted for b in blocks] for c in chains]),
        "acc_proposed": np.array([[c.acceptance[b].proposed for b in blocks] for c in chains]),
        "acc_accepted_post": np.array([[c.acceptance_post[b].accepted for b in blocks] for c in chains]),
        "acc_proposed_post": np.array([[c.acceptance_post[b].proposed for b in blocks] for c in chains]),
    }
    if chains[0].delta is not None:
        arrays["delta"] = np.stack([c.delta for c in chains])
        arrays["omega"] = np.stack([c.omega for c in chains])
    np.savez(path, **arrays)


def load_draws(path, with_meta: bool = False):
    """Rebuild ChainOutput objects (and optionally bundle metadata) from draws.npz."""
    with np.load(path, allow_pickle=False) as bundle:
        n_observed = int(bundle["n_observed"]) if "n_observed" in bundle else -1
        gamma_fixed = float(bundle["gamma_fixed"]) if "gamma_fixed" in bundle else np.nan
        n_chains = bundle["alpha"].shape[0]
        kernel_kind = str(bundle["kernel_kind"])
        metric = str(bundle["metric"])
        metric_opt = None if metric == "none" else metric
        blocks = [str(b) for b in bundle["acc_blocks"]]
        seed = int(bundle["seed"])
        chains = []
        for c in range(n_chains):
            acceptance = {
                b: BlockAcceptance(int(bundle["acc_accepted"][c, k]),
                                   int(bundle["acc_proposed"][c, k]))
                for k, b in enumerate(blocks)
            }
            acceptance_post = {
                b: BlockAcceptance(int(bundle["acc_accepted_post"][c, k]),
                                   int(bundle["acc_proposed_post"][c, k]))
                for k, b in enumerate(blocks)
            }
            chains.append(ChainOutput(
                alpha=bundle["alpha"][c], beta=bundle["beta"][c],
                gamma=bundle["gamma"][c], sigma2=bundle["sigma2"][c],
                a_positions=bundle["a_positions"][c],
                b_positions=bundle["b_positions"][c],
                log_posterior=bundle["log_posterior"][c],
                acceptance=acceptance, acceptance_post=acceptance_post,
                kernel_kind=kernel_kind, metric=metric_opt, chain_id=c,
                seed_used=None if seed < 0 else seed,
                delta=bundle["delta"][c] if "delta" in bundle else None,
                omega=bundle["omega"][c] if "omega" in bundle else None,
            ))
    if with_meta:
        meta = {"n_observed": None if n_observed < 0 else n_observed,
                "gamma_fixed": None if np.isnan(gamma_fixed) else gamma_fixed}
        return chains, meta
    return chains


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, command: str, config: dict, inputs,
                   outputs: list, seconds: float) -> None:
    payload = {
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "inputs": {str(k): sha256_of(k) for k in inputs},
        "outputs": sorted(str(o) for o in outputs),
        "timing_seconds": seconds,
        "versions": {
            "lsirm": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=1)
        handle.write("\n")


def write_truth_json(path, truth: GroundTruth) -> None:
    Path(path).write_text(truth.to_json() + "\n")
