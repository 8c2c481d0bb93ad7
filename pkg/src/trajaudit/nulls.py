"""Permutation-null calibration and evaluation statistics.

The null model independently shuffles each agent's action sequence within
each episode, destroying temporal and cross-agent dependence while exactly
preserving per-(episode, agent) action multisets.  A diagnostic is flagged
when its value on the original trajectories strictly exceeds the mean of the
values recomputed on permuted data (optionally their 95th percentile under
the stricter opt-in rule).

Also here: the one-sided Wilcoxon signed-rank test (exact for small n),
interquartile means, stratified bootstrap confidence intervals and min-max
normalization used by the evaluation protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .diagnostics import (DiagnosticConfig, DiagnosticPipeline, DiagnosticResult,
                          NullSummary)
from .store import Episode, TrajectoryDataset
from .util import derive_rng, derive_seed

DEFAULT_PERMUTATIONS = 20
ALPHA = 0.05
_EXACT_WILCOXON_MAX_N = 25


class NullCalibrationError(RuntimeError):
    """A diagnostic failed while being recomputed on permuted data."""


# ---------------------------------------------------------------------------
# Permutation machinery
# ---------------------------------------------------------------------------

def _episode_permutations(dataset: TrajectoryDataset, seed: int) -> list[list[np.ndarray]]:
    """One action-order permutation per (episode, agent), keyed by position."""
    out = []
    for ep_index, ep in enumerate(dataset.episodes):
        out.append([
            derive_rng(seed, "perm", ep_index, agent).permutation(ep.length)
            for agent in range(dataset.num_agents)
        ])
    return out


def permute_actions(dataset: TrajectoryDataset, seed: int) -> TrajectoryDataset:
    """Shuffle each agent's action sequence independently within each episode."""
    perms = _episode_permutations(dataset, seed)
    episodes = []
    for ep, ep_perms in zip(dataset.episodes, perms):
        actions = tuple(ep.actions[a][ep_perms[a]] for a in range(dataset.num_agents))
        episodes.append(Episode(episode_id=ep.episode_id, length=ep.length,
                                obs=ep.obs, actions=actions, hidden=ep.hidden))
    return TrajectoryDataset(manifest=dataset.manifest, episodes=tuple(episodes))


def _permuted_pooled_actions(pipeline: DiagnosticPipeline, seed: int) -> list[np.ndarray]:
    """Pooled permuted action channels; identical to permute_actions + re-pooling."""
    dataset = pipeline.dataset
    perms = _episode_permutations(dataset, seed)
    out = []
    for agent in range(dataset.num_agents):
        pieces = [ep.actions[agent][perms[i][agent]]
                  for i, ep in enumerate(dataset.episodes)]
        out.append(np.concatenate(pieces))
    return out


def null_distribution(metric_fn, dataset: TrajectoryDataset, n_perms: int,
                      seed: int) -> NullSummary:
    """Evaluate ``metric_fn`` on ``n_perms`` independently permuted datasets."""
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    samples = []
    for p in range(n_perms):
        permuted = permute_actions(dataset, derive_seed(seed, "null", p))
        try:
            samples.append(float(metric_fn(permuted)))
        except Exception as exc:
            raise NullCalibrationError(f"metric failed on permutation {p}: {exc}") from exc
    return NullSummary(samples=tuple(samples), mean=float(np.mean(samples)),
                       n_permutations=n_perms, seed=seed, basis="raw")


def _null_quantile(samples: tuple[float, ...]) -> float:
    return float(np.percentile(samples, 95, method="higher"))


def _flag(original: float, summary: NullSummary, quantile_rule: bool) -> bool:
    if quantile_rule:
        return original > _null_quantile(summary.samples)
    return original > summary.mean


def calibrate_run(dataset: TrajectoryDataset, config: DiagnosticConfig,
                  n_perms: int = DEFAULT_PERMUTATIONS,
                  quantile_rule: bool = False) -> list[DiagnosticResult]:
    """All diagnostics of one dataset with permutation nulls and flag decisions.

    The full metric, including its normalization denominator, is recomputed on
    each permuted dataset.  Comparison happens on normalized values whenever
    the original and at least half of the permutations define one; otherwise
    it falls back to raw values (degenerate denominators).
    """
    pipeline = DiagnosticPipeline(dataset, config)
    original = pipeline.compute_all(pipeline.original_actions())
    permuted: list[dict] = []
    for p in range(n_perms):
        actions = _permuted_pooled_actions(pipeline, derive_seed(config.seed, "null", p))
        try:
            permuted.append(pipeline.compute_all(actions))
        except Exception as exc:
            raise NullCalibrationError(f"diagnostics failed on permutation {p}: {exc}") from exc

    results = []
    for key, result in original.items():
        norm_samples = [perm[key].normalized for perm in permuted]
        defined = [v for v in norm_samples if v is not None]
        use_normalized = (result.normalized is not None
                          and len(defined) * 2 >= n_perms)
        if use_normalized:
            samples = tuple(defined)
            basis = "normalized"
            original_value = result.normalized
        else:
            samples = tuple(perm[key].raw.value for perm in permuted)
            basis = "raw"
            original_value = result.raw.value
        summary = NullSummary(samples=samples, mean=float(np.mean(samples)),
                              n_permutations=len(samples), seed=config.seed,
                              basis=basis, n_undefined=n_perms - len(samples)
                              if use_normalized else 0)
        results.append(replace(result, null=summary,
                               flagged=_flag(original_value, summary, quantile_rule)))
    return results


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank (one-sided, H1: median > 0)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapResult:
    deltas: tuple[float, ...]
    statistic: float
    p_value: float
    significant: bool
    method: str                 # "exact" | "normal" | "degenerate"

    def __post_init__(self):
        if self.significant != (self.p_value < ALPHA):
            raise ValueError("significance must equal p_value < 0.05")


def _exact_upper_tail(ranks: np.ndarray, w_observed: float) -> float:
    """P(W+ >= observed) under uniform signs; DP over doubled (tie-averaged) ranks."""
    doubled = np.round(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    top = 0
    for r in doubled:
        nxt = counts.copy()
        nxt[r:top + r + 1] += counts[:top + 1]
        counts = nxt
        top += r
    threshold = int(math.ceil(round(2.0 * w_observed, 8)))
    tail = counts[threshold:].sum()
    return float(tail / (2.0 ** len(ranks)))


def wilcoxon_one_sided(deltas) -> GapResult:
    """Test H0: median(delta) <= 0 against H1: median(delta) > 0.

    Zeros are discarded (Wilcoxon's rule), ties among |delta| get average
    ranks.  The null distribution is exact for n <= 25 and a continuity- and
    tie-corrected normal approximation beyond.
    """
    deltas = tuple(float(d) for d in deltas)
    if not deltas:
        raise ValueError("need at least one delta")
    nonzero = np.array([d for d in deltas if d != 0.0])
    if nonzero.size == 0:
        return GapResult(deltas=deltas, statistic=0.0, p_value=1.0,
                         significant=False, method="degenerate")
    ranks = rankdata(np.abs(nonzero))
    w_plus = float(ranks[nonzero > 0].sum())
    n = nonzero.size
    if n <= _EXACT_WILCOXON_MAX_N:
        p = _exact_upper_tail(ranks, w_plus)
        method = "exact"
    else:
        mu = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
        z = (w_plus - mu - 0.5) / sigma
        p = 0.5 * math.erfc(z / math.sqrt(2.0))
        method = "normal"
    return GapResult(deltas=deltas, statistic=w_plus, p_value=p,
                     significant=p < ALPHA, method=method)


# ---------------------------------------------------------------------------
# IQM, stratified bootstrap, min-max normalization
# ---------------------------------------------------------------------------

def iqm(values) -> float:
    """Interquartile mean: mean of the middle half, floor(n/4) trimmed per side."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("iqm of empty input")
    trim = arr.size // 4
    if arr.size < 4:
        return float(arr.mean())
    return float(arr[trim:arr.size - trim].mean())


def stratified_bootstrap_ci(per_run_curves, n_boot: int, seed: int,
                            level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """95% stratified bootstrap CI of the per-point IQM across runs.

    Runs are the strata: each replicate resamples whole runs with replacement
    and recomputes the IQM at every evaluation point.
    """
    curves = np.asarray(per_run_curves, dtype=np.float64)
    if curves.ndim == 1:
        curves = curves.reshape(curves.shape[0], 1)
    n_runs = curves.shape[0]
    if n_runs < 2:
        raise ValueError("CI undefined: need at least 2 runs")
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    rng = derive_rng(seed, "bootstrap")
    stats = np.empty((n_boot, curves.shape[1]))
    for b in range(n_boot):
        chosen = curves[rng.integers(0, n_runs, size=n_runs)]
        stats[b] = np.apply_along_axis(iqm, 0, chosen)
    lo = np.percentile(stats, 100 * (1 - level) / 2, axis=0)
    hi = np.percentile(stats, 100 * (1 + level) / 2, axis=0)
    return lo, hi


def minmax_normalize(values, lo: float, hi: float) -> np.ndarray:
    """(v - lo) / (hi - lo) elementwise; requires hi > lo."""
    if not hi > lo:
        raise ValueError(f"minmax_normalize needs hi > lo (got {lo}, {hi})")
    return (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
