"""Entropy, mutual information and conditional MI over discrete, continuous
and mixed samples.

Discrete quantities are plug-in estimates of the empirical distribution and
exactly reproduce brute-force computation on the enumerated joint.  Continuous
and mixed quantities use nearest-neighbor estimators with the max-norm:
Kraskov-Stoegbauer-Grassberger (variant 1) for MI, the Ross neighbor-count
estimator for discrete-continuous pairs, and the Frenzel-Pompe digamma form
for conditional MI.  All values are in nats.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .util import derive_rng, encode_rows

DEFAULT_NEIGHBORS = 3
_JITTER_MAGNITUDE = 1e-10


class EstimatorInputError(ValueError):
    """Raised for malformed estimator inputs (length mismatch, NaN, n <= k)."""


class EstimationInfeasibleError(RuntimeError):
    """Raised when no estimate can be produced from the given samples."""


@dataclass(frozen=True)
class SampleColumn:
    """A column of aligned samples: integer labels or fixed-width real vectors."""

    kind: str                # "discrete" | "continuous"
    values: np.ndarray       # discrete: (n,) int64; continuous: (n, d) float64

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise EstimatorInputError(f"unknown column kind {self.kind!r}")
        if self.n < 1:
            raise EstimatorInputError("column must hold at least one sample")
        if self.kind == "continuous" and not np.isfinite(self.values).all():
            raise EstimatorInputError("continuous column contains NaN/Inf")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"


def discrete_column(labels) -> SampleColumn:
    values = np.asarray(labels)
    if values.ndim != 1:
        raise EstimatorInputError("discrete column must be one-dimensional labels")
    if not np.issubdtype(values.dtype, np.integer):
        raise EstimatorInputError("discrete column must hold integer labels")
    return SampleColumn(kind="discrete", values=values.astype(np.int64))


def continuous_column(matrix) -> SampleColumn:
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.ndim != 2:
        raise EstimatorInputError("continuous column must be (n,) or (n, d)")
    return SampleColumn(kind="continuous", values=values)


def combine_discrete(*columns: SampleColumn) -> SampleColumn:
    """Joint labels of several aligned discrete columns."""
    _check_lengths(*columns)
    stacked = np.stack([c.values for c in columns], axis=1)
    codes, _ = encode_rows(stacked)
    return SampleColumn(kind="discrete", values=codes)


@dataclass(frozen=True)
class EstimateNats:
    value: float
    n_samples: int
    estimator_id: str
    k_neighbors: int = 0     # 0 marks plug-in estimates


def _check_lengths(*columns: SampleColumn) -> None:
    ns = {c.n for c in columns}
    if len(ns) != 1:
        raise EstimatorInputError(f"column length mismatch: {sorted(ns)}")


def _entropy_from_labels(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = np.sort(counts) / labels.shape[0]    # canonical summation order
    return float(max(0.0, -np.sum(p * np.log(p))))


def _joint_labels(*label_arrays: np.ndarray) -> np.ndarray:
    codes, _ = encode_rows(np.stack(label_arrays, axis=1))
    return codes


# ---------------------------------------------------------------------------
# Discrete plug-in estimators
# ---------------------------------------------------------------------------

def entropy_discrete(x: SampleColumn) -> EstimateNats:
    """Plug-in Shannon entropy of the empirical label distribution."""
    if not x.is_discrete:
        raise EstimatorInputError("entropy_discrete needs a discrete column")
    return EstimateNats(_entropy_from_labels(x.values), x.n, "plugin.entropy")


def mi_discrete(x: SampleColumn, y: SampleColumn) -> EstimateNats:
    """Plug-in mutual information of the empirical joint, in nats."""
    if not (x.is_discrete and y.is_discrete):
        raise EstimatorInputError("mi_discrete needs discrete columns")
    _check_lengths(x, y)
    hx = _entropy_from_labels(x.values)
    hy = _entropy_from_labels(y.values)
    hxy = _entropy_from_labels(_joint_labels(x.values, y.values))
    return EstimateNats(max(0.0, hx + hy - hxy), x.n, "plugin.mi")


def cmi_discrete(x: SampleColumn, y: SampleColumn, z: SampleColumn) -> EstimateNats:
    """Plug-in conditional MI: the z-weighted MI of the per-cell empirical joints."""
    if not (x.is_discrete and y.is_discrete and z.is_discrete):
        raise EstimatorInputError("cmi_discrete needs discrete columns")
    _check_lengths(x, y, z)
    hxz = _entropy_from_labels(_joint_labels(x.values, z.values))
    hyz = _entropy_from_labels(_joint_labels(y.values, z.values))
    hz = _entropy_from_labels(z.values)
    hxyz = _entropy_from_labels(_joint_labels(x.values, y.values, z.values))
    return EstimateNats(max(0.0, hxz + hyz - hz - hxyz), x.n, "plugin.cmi")


# ---------------------------------------------------------------------------
# Nearest-neighbor machinery
# ---------------------------------------------------------------------------

def _one_hot(labels: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(labels, return_inverse=True)
    width = inverse.max() + 1
    out = np.zeros((labels.shape[0], width), dtype=np.float64)
    out[np.arange(labels.shape[0]), inverse] = 1.0
    return out


def as_matrix(column: SampleColumn) -> np.ndarray:
    """Metric-space embedding: identity for continuous, unit-spaced one-hot for discrete."""
    if column.is_discrete:
        return _one_hot(column.values)
    return column.values


def _jitter(matrix: np.ndarray, seed: int, block: int) -> np.ndarray:
    """Deterministic tie-breaking noise, 1e-10 of each feature's range."""
    rng = derive_rng(seed, "jitter", block)
    span = matrix.max(axis=0) - matrix.min(axis=0)
    noise = rng.uniform(-1.0, 1.0, size=matrix.shape) * (_JITTER_MAGNITUDE * span)
    return matrix + noise


def _kth_distance(points: np.ndarray, k: int) -> np.ndarray:
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=[k + 1], p=np.inf)
    return dist[:, 0]


def _strict_ball_counts(points: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Points strictly inside each radius, including the query point itself."""
    tree = cKDTree(points)
    return tree.query_ball_point(points, np.nextafter(radii, 0.0), p=np.inf,
                                 return_length=True)


def _require_knn_input(n: int, k: int) -> None:
    if k < 1:
        raise EstimatorInputError("k_neighbors must be >= 1")
    if n <= k:
        raise EstimatorInputError(f"need more than k={k} samples (got {n})")


def mi_ksg(x: SampleColumn, y: SampleColumn, k: int = DEFAULT_NEIGHBORS,
           seed: int = 0) -> EstimateNats:
    """KSG (variant 1) mutual information with max-norm neighborhoods."""
    if x.is_discrete or y.is_discrete:
        raise EstimatorInputError("mi_ksg needs continuous columns")
    _check_lengths(x, y)
    n = x.n
    _require_knn_input(n, k)
    xm = _jitter(x.values, seed, 0)
    ym = _jitter(y.values, seed, 1)
    eps = _kth_distance(np.hstack([xm, ym]), k)
    cx = _strict_ball_counts(xm, eps)
    cy = _strict_ball_counts(ym, eps)
    value = digamma(k) + digamma(n) - float(np.mean(digamma(cx) + digamma(cy)))
    return EstimateNats(value, n, "ksg1.mi", k)


def mi_mixed(x: SampleColumn, y: SampleColumn, k: int = DEFAULT_NEIGHBORS,
             seed: int = 0) -> EstimateNats:
    """Ross nearest-neighbor MI between a continuous and a discrete variable.

    Classes with at most k members cannot anchor a k-th neighbor; their points
    are skipped with a warning.
    """
    if x.is_discrete and not y.is_discrete:
        x, y = y, x
    if x.is_discrete or not y.is_discrete:
        raise EstimatorInputError("mi_mixed needs one continuous and one discrete column")
    _check_lengths(x, y)
    n_total = x.n
    _require_knn_input(n_total, k)

    labels = y.values
    keep = np.zeros(n_total, dtype=bool)
    for label in np.unique(labels):
        mask = labels == label
        if mask.sum() > k:
            keep[mask] = True
    if not keep.any():
        raise EstimationInfeasibleError(
            f"every class has <= k={k} members; mixed MI is not estimable"
        )
    if not keep.all():
        warnings.warn(
            f"mi_mixed: skipping {int((~keep).sum())} samples in classes with <= k members",
            RuntimeWarning,
        )

    xm = _jitter(x.values[keep], seed, 0)
    labels = labels[keep]
    n = xm.shape[0]
    if np.unique(labels).size == 1:
        return EstimateNats(0.0, n, "ross.mi_mixed", k)
    _, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    label_counts = counts[inverse]

    radius = np.empty(n)
    for label in np.unique(labels):
        mask = labels == label
        radius[mask] = _kth_distance(xm[mask], k)
    m_all = _strict_ball_counts(xm, radius)
    value = (digamma(n) + digamma(k)
             - float(np.mean(digamma(label_counts)))
             - float(np.mean(digamma(m_all))))
    return EstimateNats(value, n, "ross.mi_mixed", k)


def cmi_knn(x: SampleColumn, y: SampleColumn, z: SampleColumn,
            k: int = DEFAULT_NEIGHBORS, seed: int = 0) -> EstimateNats:
    """Frenzel-Pompe conditional MI; discrete columns are one-hot embedded."""
    _check_lengths(x, y, z)
    n = x.n
    _require_knn_input(n, k)
    xm = _jitter(as_matrix(x), seed, 0)
    ym = _jitter(as_matrix(y), seed, 1)
    zm = _jitter(as_matrix(z), seed, 2)
    eps = _kth_distance(np.hstack([xm, ym, zm]), k)
    cxz = _strict_ball_counts(np.hstack([xm, zm]), eps)
    cyz = _strict_ball_counts(np.hstack([ym, zm]), eps)
    cz = _strict_ball_counts(zm, eps)
    value = digamma(k) - float(np.mean(digamma(cxz) + digamma(cyz) - digamma(cz)))
    return EstimateNats(value, n, "fp.cmi", k)


def _kl_entropy(matrix: np.ndarray, k: int) -> float:
    """Kozachenko-Leonenko differential entropy under the max-norm."""
    n, d = matrix.shape
    eps = _kth_distance(matrix, k)
    return float(digamma(n) - digamma(k) + d * np.mean(np.log(2.0 * eps)))


def marginal_entropy(x: SampleColumn, k: int = DEFAULT_NEIGHBORS,
                     seed: int = 0) -> EstimateNats:
    """Entropy of a single column: plug-in for discrete, Kozachenko-Leonenko else."""
    if x.is_discrete:
        return entropy_discrete(x)
    _require_knn_input(x.n, k)
    value = _kl_entropy(_jitter(x.values, seed, 0), k)
    return EstimateNats(value, x.n, "kl.entropy", k)


def cond_entropy(y: SampleColumn, z: SampleColumn, k: int = DEFAULT_NEIGHBORS,
                 seed: int = 0) -> EstimateNats:
    """Conditional entropy H(Y | Z) in nats.

    Discrete y uses the plug-in chain rule H(Y) - I(Y; Z) with the estimator
    matching z's kind.  Continuous y uses the difference of Kozachenko-Leonenko
    joint entropies and may legitimately be negative.
    """
    _check_lengths(y, z)
    if y.is_discrete:
        hy = _entropy_from_labels(y.values)
        if z.is_discrete:
            hyz = _entropy_from_labels(_joint_labels(y.values, z.values))
            hz = _entropy_from_labels(z.values)
            value = max(0.0, hyz - hz)
            return EstimateNats(value, y.n, "plugin.cond_entropy")
        mi = mi_mixed(z, y, k=k, seed=seed)
        return EstimateNats(hy - mi.value, y.n, "ross.cond_entropy", k)
    _require_knn_input(y.n, k)
    ym = _jitter(as_matrix(y), seed, 0)
    zm = _jitter(as_matrix(z), seed, 1)
    value = _kl_entropy(np.hstack([ym, zm]), k) - _kl_entropy(zm, k)
    return EstimateNats(value, y.n, "kl.cond_entropy", k)
