"""Test-based selection of the nuisance parameters.

Stages run in order: ranks, GCCA, L, I0, r_star, delta sets, signs. Every
test is recorded in a SelectionReport so the decisions can be audited.
"""

import logging
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from dgcca import linalg, rng
from dgcca import stats as tests
from dgcca.config import SelectionConfig
from dgcca.dataset import MultiViewDataset
from dgcca.decomposition import AlphaCandidate, alpha_candidates, compute_deltas
from dgcca.errors import ConfigError, DegenerateInput, DegenerateSpectrumWarning
from dgcca.gcca import GccaModel, covariance_gcca, sample_gcca
from dgcca.params import NuisanceParams, Pair, Provenance, all_pairs
from dgcca.signal import SignalEstimate, recover_all
from dgcca.stats import Tail
from dgcca.tracing import trace_op

logger = logging.getLogger(__name__)

MIN_SIGN_BOOTSTRAP = 100
RANK_TEST_NOTE = "two-step screen + bootstrap approximation of the Chen-Fang rank test"


@dataclass(frozen=True)
class TestRecord:
    """One executed test and its decision."""

    __test__ = False

    stage: str
    index: int
    subject: str
    report: tests.TestReport | None
    level: float
    rejected: bool

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "stage": self.stage,
            "index": self.index,
            "subject": self.subject,
            "level": self.level,
            "rejected": self.rejected,
        }
        if self.report is None:
            data["degenerate"] = True
        else:
            data.update(self.report.to_dict())
        return data


@dataclass
class TestLog:
    """Accumulates test records; None-safe sink for the selection functions."""

    __test__ = False

    records: list[TestRecord] = field(default_factory=list)
    notes: dict[str, Any] = field(default_factory=dict)

    def run(self, stage: str, index: int, subject: str, x: np.ndarray, y: np.ndarray, tail: Tail, level: float) -> bool:
        """Run a zero-correlation test; degenerate inputs count as not rejected."""
        try:
            report = tests.test_zero_corr(x, y, tail)
        except DegenerateInput:
            report = None
        rejected = report is not None and report.rejects(level)
        self.records.append(TestRecord(stage, index, subject, report, level, rejected))
        return rejected


def _log(log: TestLog | None) -> TestLog:
    return log if log is not None else TestLog()


# --- individual stages ------------------------------------------------------


def select_L(model: GccaModel, alpha: float, log: TestLog | None = None) -> int:
    """Largest stage where, for some view, both corr(w, z_k) and
    corr(eta_k^T f_k, sum_{j != k} eta_j^T f_j) are significantly positive.
    """
    log = _log(log)
    for l in reversed(range(model.r_f_hat)):
        w = model.w_scores[l]
        partial = model.partial_scores(l)
        combined = np.sqrt(model.eigenvalues[l]) * w
        for k in range(model.k):
            if not log.run("L", l, f"w~z{k}", w, model.z_scores[k, l], Tail.RIGHT, alpha):
                continue
            if log.run("L", l, f"u{k}~rest", partial[k], combined - partial[k], Tail.RIGHT, alpha):
                logger.debug("L selected: %d", l + 1)
                return l + 1
    return 0


def select_I0(model: GccaModel, L_hat: int, alpha: float, log: TestLog | None = None) -> tuple[int, ...]:
    """Stages below L_hat whose w correlates with every z_k and whose z's are pairwise correlated."""
    log = _log(log)
    kept = []
    for l in range(L_hat):
        w = model.w_scores[l]
        z = model.z_scores[:, l]
        keep = all(log.run("I0", l, f"w~z{k}", w, z[k], Tail.RIGHT, alpha) for k in range(model.k))
        keep = keep and all(
            log.run("I0", l, f"z{j}~z{k}", z[j], z[k], Tail.TWO, alpha) for j, k in all_pairs(model.k)
        )
        if keep:
            kept.append(l)
    logger.debug("I0 selected: %s", kept)
    return tuple(kept)


def select_r_star(
    model: GccaModel,
    I0: Sequence[int],
    config: SelectionConfig | None = None,
    log: TestLog | None = None,
) -> tuple[int, ...]:
    """Rank of each view's canonical-variable covariance over the I0 stages.

    Eigenvalues of H H^T above c * sqrt(log n / n) give a first estimate r1;
    the r1-th eigenvalue is then bootstrapped over resampled canonical scores
    and r1 is kept only when its lower quantile stays above the threshold.
    """
    config = config or SelectionConfig()
    log = _log(log)
    stages = list(I0)
    if not stages:
        return tuple(0 for _ in range(model.k))
    if len(stages) == 1:
        return tuple(1 for _ in range(model.k))

    n = model.n
    threshold = config.rank_threshold_c * np.sqrt(np.log(n) / n)
    log.notes["r_star"] = {"method": RANK_TEST_NOTE, "threshold": threshold}
    estimates = []
    for k in range(model.k):
        h = np.array([model.unit_eta(l, k) for l in stages]).reshape(len(stages), model.block_sizes[k])
        values = linalg.eigh_desc(h @ h.T)[0]
        r1 = int(np.count_nonzero(values > threshold))
        if r1 == 0:
            estimates.append(1)
            continue
        scores = model.z_scores[k, stages]

        def boundary(indices: np.ndarray, scores: np.ndarray = scores, r1: int = r1) -> float:
            sample = scores[:, indices]
            return float(linalg.eigh_desc(sample @ sample.T / indices.size)[0][r1 - 1])

        replicates = tests.bootstrap_replicates(
            boundary, n, config.rank_bootstrap, config.seed, (rng.STREAM_RANK_BOOTSTRAP, k), config.threads
        )
        lower = float(np.quantile(replicates, config.rank_quantile))
        estimate = r1 if lower > threshold else r1 - 1
        estimates.append(int(np.clip(estimate, 1, len(stages))))
        logger.debug("r_star view %d: screen %d, boundary lower quantile %.4g -> %d", k, r1, lower, estimates[-1])
    return tuple(estimates)


def select_delta_sets(
    model: GccaModel,
    I0: Sequence[int],
    alpha: float,
    log: TestLog | None = None,
) -> tuple[dict[int, tuple[Pair, ...]], dict[int, tuple[Pair, ...]]]:
    """Split view pairs by the sign of the stage discriminant.

    With m = (cos(w,z_j) + cos(w,z_k)) / 2 the residuals z_j - m w and
    z_k - m w have covariance -delta / 4. A left-tailed rejection puts the
    pair in the positive set; otherwise a right-tailed non-rejection puts it in
    the zero set. Degenerate residuals (identical z's) go to the zero set.
    """
    log = _log(log)
    delta_pos: dict[int, tuple[Pair, ...]] = {}
    delta_zero: dict[int, tuple[Pair, ...]] = {}
    for l in I0:
        w = model.w_scores[l]
        cosines = model.cos_wz(l)
        pos, zero = [], []
        for j, k in all_pairs(model.k):
            m = 0.5 * (cosines[j] + cosines[k])
            a = model.z_scores[j, l] - m * w
            b = model.z_scores[k, l] - m * w
            subject = f"z{j}-mw~z{k}-mw"
            try:
                tests.test_zero_corr(a, b)
            except DegenerateInput:
                warnings.warn(
                    f"stage {l} pair ({j}, {k}): degenerate residuals, placed in the zero set",
                    DegenerateSpectrumWarning,
                    stacklevel=2,
                )
                log.run("delta", l, subject, a, b, Tail.LEFT, alpha)
                zero.append((j, k))
                continue
            if log.run("delta", l, subject, a, b, Tail.LEFT, alpha):
                pos.append((j, k))
            elif not log.run("delta", l, subject, a, b, Tail.RIGHT, alpha):
                zero.append((j, k))
        delta_pos[l], delta_zero[l] = tuple(pos), tuple(zero)
    return delta_pos, delta_zero


def _stage_alpha_gap(model: GccaModel, l: int, plus: Sequence[Pair], minus: Sequence[Pair], delta_pos: Sequence[Pair], delta_zero: Sequence[Pair]) -> float:
    candidates = alpha_candidates(compute_deltas(model, l), model.cos_wz(l), delta_pos, delta_zero)
    return min(abs(candidates[p].alpha) for p in plus) - min(abs(candidates[p].alpha) for p in minus)


def select_sign(
    model: GccaModel,
    I0: Sequence[int],
    candidates: Mapping[int, Mapping[Pair, AlphaCandidate]],
    B: int,
    config: SelectionConfig | None = None,
    log: TestLog | None = None,
) -> dict[int, int]:
    """Sign of each stage's alpha.

    With only one sign among the candidates that sign is returned. Otherwise a
    BCa interval for |alpha_+| - |alpha_-| is built by resampling samples of
    the factor scores; the sign is +1 only when the interval excludes zero and
    |alpha_+| < |alpha_-|.

    Raises:
        ConfigError: fewer than 100 bootstrap resamples.
    """
    if B < MIN_SIGN_BOOTSTRAP:
        raise ConfigError(f"sign selection needs at least {MIN_SIGN_BOOTSTRAP} resamples, got {B}")
    config = config or SelectionConfig()
    log = _log(log)
    level = config.level("sign")
    stacked = np.vstack(model.factor_blocks) if model.factor_blocks is not None else None
    signs: dict[int, int] = {}
    intervals: dict[str, Any] = {}

    for l in I0:
        stage = candidates[l]
        plus = [p for p, c in stage.items() if c.alpha > 0]
        minus = [p for p, c in stage.items() if c.alpha < 0]
        if not minus:
            signs[l] = 1
            continue
        if not plus:
            signs[l] = -1
            continue

        pos = [p for p, c in stage.items() if c.in_delta_pos]
        zero = [p for p, c in stage.items() if not c.in_delta_pos]
        theta_hat = min(abs(stage[p].alpha) for p in plus) - min(abs(stage[p].alpha) for p in minus)

        def gap(indices: np.ndarray, l: int = l, plus=plus, minus=minus, pos=pos, zero=zero) -> float:
            sample = stacked[:, indices]
            resampled = covariance_gcca(sample @ sample.T / indices.size, model.block_sizes)
            return _stage_alpha_gap(resampled, l, plus, minus, pos, zero)

        n = stacked.shape[1]
        replicates = tests.bootstrap_replicates(gap, n, B, config.seed, (rng.STREAM_SIGN_BOOTSTRAP, l), config.threads)
        low, high = tests.bca_interval(theta_hat, replicates, tests.jackknife_values(gap, n), level)
        excludes_zero = low > 0 or high < 0
        signs[l] = 1 if excludes_zero and theta_hat < 0 else -1
        intervals[str(l)] = {"gap": theta_hat, "interval": [low, high], "level": level, "resamples": B}
        logger.debug("sign stage %d: gap %.4g, BCa [%.4g, %.4g] -> %+d", l, theta_hat, low, high, signs[l])
    if intervals:
        log.notes["sign"] = intervals
    return signs


# --- composite --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SelectionReport:
    """Selected parameters with the signals, model and tests behind them."""

    params: NuisanceParams
    signals: tuple[SignalEstimate, ...]
    model: GccaModel
    tests: tuple[TestRecord, ...] = ()
    notes: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "seed": self.seed,
            "generator": rng.GENERATOR_NAME,
            "notes": self.notes,
            "tests": [record.to_dict() for record in self.tests],
        }


_FULL_OVERRIDE = {"ranks", "L", "I0", "r_star", "delta_pos", "delta_zero", "alpha_signs"}


def select_from_signals(
    signals: Sequence[SignalEstimate],
    config: SelectionConfig | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> SelectionReport:
    """Run every selection stage after the ranks on already recovered signals."""
    config = config or SelectionConfig()
    overrides = dict(overrides or {})
    log = TestLog()
    model = sample_gcca(signals)

    L_hat = overrides["L"] if "L" in overrides else select_L(model, config.level("L"), log)
    I0 = tuple(overrides["I0"]) if "I0" in overrides else select_I0(model, L_hat, config.level("I0"), log)
    if "r_star" in overrides:
        r_star = tuple(overrides["r_star"])
    else:
        r_star = select_r_star(model, I0, config, log)
    if "delta_pos" in overrides or "delta_zero" in overrides:
        delta_pos = {int(l): v for l, v in overrides.get("delta_pos", {}).items()}
        delta_zero = {int(l): v for l, v in overrides.get("delta_zero", {}).items()}
    else:
        delta_pos, delta_zero = select_delta_sets(model, I0, config.level("delta"), log)
        empty = [l for l in I0 if not delta_pos[l] and not delta_zero[l]]
        if empty:
            logger.warning("stages %s have no admissible pair and leave I0", empty)
            I0 = tuple(l for l in I0 if l not in empty)
            if "r_star" not in overrides:
                r_star = select_r_star(model, I0, config, log)

    if "alpha_signs" in overrides:
        signs = {int(l): int(s) for l, s in overrides["alpha_signs"].items()}
    else:
        candidates = {
            l: alpha_candidates(compute_deltas(model, l), model.cos_wz(l), delta_pos.get(l, ()), delta_zero.get(l, ())) for l in I0
        }
        signs = select_sign(model, I0, candidates, config.bootstrap, config, log)

    ranks = tuple(overrides.get("ranks", [s.rank for s in signals]))
    provenance = Provenance.USER if _FULL_OVERRIDE <= overrides.keys() else Provenance.SELECTED
    params = NuisanceParams(
        ranks=ranks,
        L=L_hat,
        I0=I0,
        r_star=r_star,
        delta_pos={l: delta_pos.get(l, ()) for l in I0},
        delta_zero={l: delta_zero.get(l, ()) for l in I0},
        alpha_signs={l: signs.get(l, 0) for l in I0},
        alpha_level=None if provenance is Provenance.USER else config.alpha,
        provenance=provenance,
    )
    logger.info("selected parameters: L=%d I0=%s r_star=%s", params.L, list(params.I0), list(params.r_star))
    return SelectionReport(params, tuple(signals), model, tuple(log.records), log.notes, config.seed)


@trace_op("dgcca.select_all")
def select_all(
    ds: MultiViewDataset,
    config: SelectionConfig | None = None,
    overrides: Mapping[str, Any] | None = None,
    k_max: int | None = None,
) -> SelectionReport:
    """Select ranks by ED (unless overridden) and then every remaining parameter."""
    config = config or SelectionConfig()
    overrides = dict(overrides or {})
    ranks = list(overrides["ranks"]) if "ranks" in overrides else None
    signals = recover_all(ds, ranks, k_max=k_max, threads=config.threads)
    return select_from_signals(signals, config, overrides)
