"""Quality metrics: SWISS, residual common variation, orthogonal pairs, PVE ranking."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import stats as sps

from dgcca import stats as tests
from dgcca.dataset import Matrix
from dgcca.errors import DegenerateInput, ShapeError
from dgcca.gcca import sample_gcca
from dgcca.params import Pair, all_pairs
from dgcca.signal import signal_from_matrix

logger = logging.getLogger(__name__)

FACTOR_SCALING = "unit sample variance (sqrt(n) * right singular vector)"


@dataclass(frozen=True, eq=False)
class LabeledMatrix:
    """Matrix whose columns carry group labels."""

    matrix: Matrix
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        labels = tuple(str(label) for label in self.labels)
        if len(labels) != self.matrix.n:
            raise ShapeError(f"{len(labels)} labels for {self.matrix.n} samples")
        object.__setattr__(self, "labels", labels)


def swiss(lm: LabeledMatrix) -> float:
    """Standardized within-group sum of squares (lower means better separation)."""
    values = lm.matrix.values
    total = float(np.sum((values - values.mean(axis=1, keepdims=True)) ** 2))
    if total == 0:
        raise DegenerateInput("matrix has no variation around its row means")
    labels = np.array(lm.labels)
    within = 0.0
    for group in np.unique(labels):
        block = values[:, labels == group]
        within += float(np.sum((block - block.mean(axis=1, keepdims=True)) ** 2))
    return within / total


def _check_widths(mats: Sequence[Matrix]) -> int:
    widths = {m.n for m in mats}
    if len(widths) != 1:
        raise ShapeError(f"matrices disagree on sample count: {sorted(widths)}")
    return widths.pop()


def rho1(d_mats: Sequence[Matrix], ranks: Sequence[int] | None = None) -> float:
    """Largest eigenvalue of the stacked factor-score covariance of the inputs.

    Ranks default to each matrix's numerical rank. Values near 1 mean no
    common variation remains; K means the inputs share one direction.
    """
    _check_widths(d_mats)
    if any(not np.any(m.values) for m in d_mats):
        raise DegenerateInput("a zero matrix has no factor scores")
    ranks = list(ranks) if ranks is not None else [None] * len(d_mats)
    signals = [signal_from_matrix(m, r) for m, r in zip(d_mats, ranks)]
    return float(sample_gcca(signals).eigenvalues[0])


@dataclass(frozen=True)
class OrthogonalityReport:
    """Per-pair share of significant factor correlations after BH."""

    has_orthogonal_pair: bool
    proportions: dict[Pair, float]
    orthogonal: dict[Pair, bool]
    fdr_level: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "has_orthogonal_pair": self.has_orthogonal_pair,
            "fdr_level": self.fdr_level,
            "factor_scaling": FACTOR_SCALING,
            "pairs": [
                {"pair": list(pair), "nonzero_share": self.proportions[pair], "orthogonal": self.orthogonal[pair]}
                for pair in sorted(self.proportions)
            ],
        }


def _factor_samples(m: Matrix, rank: int | None) -> np.ndarray:
    scores = signal_from_matrix(m, rank).factor_scores
    return scores[np.any(scores != 0, axis=1)]


def orthogonal_pair_rate(
    d_mats: Sequence[Matrix],
    fdr_level: float = 0.05,
    ranks: Sequence[int] | None = None,
) -> OrthogonalityReport:
    """Detect view pairs whose factors are all uncorrelated.

    For every pair, each factor of one view is tested against each factor of
    the other (two-sided zero-correlation test); Benjamini-Hochberg at
    fdr_level is applied within the pair. A pair with no discovery is
    orthogonal.
    """
    _check_widths(d_mats)
    ranks = list(ranks) if ranks is not None else [None] * len(d_mats)
    factors = [_factor_samples(m, r) for m, r in zip(d_mats, ranks)]
    proportions: dict[Pair, float] = {}
    orthogonal: dict[Pair, bool] = {}
    for j, k in all_pairs(len(d_mats)):
        p_values = []
        for a in factors[j]:
            for b in factors[k]:
                try:
                    p_values.append(tests.test_zero_corr(a, b, tests.Tail.TWO).p_value)
                except DegenerateInput:
                    p_values.append(1.0)
        discoveries = tests.benjamini_hochberg(np.array(p_values), fdr_level)
        proportions[(j, k)] = float(discoveries.mean()) if discoveries.size else 0.0
        orthogonal[(j, k)] = not bool(discoveries.any())
    return OrthogonalityReport(any(orthogonal.values()), proportions, orthogonal, fdr_level)


@dataclass(frozen=True)
class RankQuality:
    """Agreement between true and estimated variable rankings."""

    spearman: float
    ndcg: float
    ndcg_top: float

    def to_dict(self) -> dict[str, float]:
        return {"spearman": self.spearman, "ndcg": self.ndcg, "ndcg_top": self.ndcg_top}


def _dcg(gains: np.ndarray) -> float:
    discounts = 1.0 / np.log2(np.arange(2, gains.size + 2))
    return float(np.sum(gains * discounts))


def _ndcg(true: np.ndarray, order: np.ndarray, depth: int) -> float:
    ideal = _dcg(np.sort(true)[::-1][:depth])
    if ideal == 0:
        return 1.0
    return _dcg(true[order][:depth]) / ideal


def rank_quality(true_pve: Sequence[float], est_pve: Sequence[float], top_fraction: float = 0.1) -> RankQuality:
    """Spearman correlation and nDCG of the estimated ordering.

    The gain of position i is the true PVE of the variable ranked i-th by
    the estimate, discounted by 1/log2(i + 1). ndcg_top keeps the first
    ceil(top_fraction * p) positions.
    """
    true = np.asarray(true_pve, dtype=np.float64)
    est = np.asarray(est_pve, dtype=np.float64)
    if true.shape != est.shape or true.ndim != 1:
        raise ShapeError(f"true and estimated PVE have shapes {true.shape} and {est.shape}")
    if true.size < 2:
        raise ShapeError("ranking needs at least 2 variables")
    order = np.argsort(-est, kind="stable")
    depth = max(1, math.ceil(top_fraction * true.size))
    return RankQuality(
        spearman=float(sps.spearmanr(true, est).statistic),
        ndcg=_ndcg(true, order, true.size),
        ndcg_top=_ndcg(true, order, depth),
    )
