"""Common/distinctive decomposition built on the GCCA stages.

For each retained stage l the common latent variable is c^(l) = alpha^(l) w^(l),
where alpha^(l) is the smallest-magnitude root making one distinctive pair
(z_j - alpha w, z_k - alpha w) uncorrelated. Each view's common matrix is the
regression of its signal on its canonical variables, applied to the common
latent variables; the distinctive matrix is the remainder.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np

from dgcca import linalg
from dgcca.dataset import Matrix, MultiViewDataset
from dgcca.errors import ConfigError, RankError, SignSelectionError
from dgcca.gcca import GccaModel, sample_gcca
from dgcca.params import NuisanceParams, Pair, Provenance, all_pairs
from dgcca.signal import SignalEstimate, recover_all, select_rank_ed, signal_from_matrix
from dgcca.tracing import trace_op

if TYPE_CHECKING:
    from dgcca.config import SelectionConfig
    from dgcca.nuisance import SelectionReport

logger = logging.getLogger(__name__)

POPULATION_TOLERANCE = 1e-8


# --- stage alphas ---------------------------------------------------------


@dataclass(frozen=True)
class AlphaCandidate:
    """One pair's root: alpha_jk = (cos_j + cos_k - sqrt(delta)) / 2."""

    pair: Pair
    delta_raw: float
    delta: float
    alpha: float
    in_delta_pos: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair": list(self.pair),
            "delta_raw": self.delta_raw,
            "delta": self.delta,
            "alpha": self.alpha,
            "set": "pos" if self.in_delta_pos else "zero",
        }


@dataclass(frozen=True)
class StageAlpha:
    """Selected alpha for one stage with every candidate it was chosen from."""

    stage: int
    alpha: float
    chosen_pair: Pair
    sign: int
    candidates: dict[Pair, AlphaCandidate]

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "alpha": self.alpha,
            "chosen_pair": list(self.chosen_pair),
            "sign": self.sign,
            "candidates": [c.to_dict() for _, c in sorted(self.candidates.items())],
        }


@dataclass(frozen=True)
class AlphaSolution:
    """Stage alphas keyed by stage index (the I0 stages)."""

    stages: dict[int, StageAlpha] = field(default_factory=dict)

    @property
    def I0(self) -> tuple[int, ...]:
        return tuple(sorted(self.stages))

    def values(self) -> np.ndarray:
        """Alphas in I0 order."""
        return np.array([self.stages[l].alpha for l in self.I0])

    def to_dict(self) -> dict[str, Any]:
        return {str(l): self.stages[l].to_dict() for l in self.I0}


def compute_deltas(model: GccaModel, l: int) -> dict[Pair, float]:
    """Discriminants (cos(w,z_j) + cos(w,z_k))^2 - 4 cos(z_j,z_k) for every pair.

    Uses the sample score vectors when present, the exact eigensystem otherwise.
    """
    if not 0 <= l < model.eigenvalues.size:
        raise RankError(f"stage {l} outside 0..{model.eigenvalues.size - 1}")
    cos_wz = model.cos_wz(l)
    cos_zz = model.cos_zz(l)
    return {
        (j, k): float((cos_wz[j] + cos_wz[k]) ** 2 - 4.0 * cos_zz[j, k])
        for j, k in all_pairs(model.k)
    }


def alpha_candidates(
    deltas: dict[Pair, float],
    cosines: np.ndarray,
    delta_pos: Sequence[Pair],
    delta_zero: Sequence[Pair],
) -> dict[Pair, AlphaCandidate]:
    """Roots for every pair in either delta set; zero-set pairs use delta = 0."""
    positive = set(delta_pos)
    candidates = {}
    for pair in sorted(positive | set(delta_zero)):
        j, k = pair
        raw = deltas[pair]
        delta = max(raw, 0.0) if pair in positive else 0.0
        alpha = 0.5 * (cosines[j] + cosines[k] - np.sqrt(delta))
        candidates[pair] = AlphaCandidate(pair, raw, delta, float(alpha), pair in positive)
    return candidates


def solve_alpha(
    deltas: dict[Pair, float],
    cosines: np.ndarray,
    sets: tuple[Sequence[Pair], Sequence[Pair]],
    sign: int,
    stage: int = 0,
) -> StageAlpha:
    """Smallest-|alpha| candidate carrying the required sign.

    Ties in |alpha| go to the lexicographically smallest pair.

    Raises:
        SignSelectionError: no candidate has the required sign.
    """
    candidates = alpha_candidates(deltas, cosines, *sets)
    matching = [c for c in candidates.values() if c.alpha * sign > 0]
    if not matching:
        raise SignSelectionError(
            f"stage {stage}: no candidate alpha with sign {sign:+d}",
            stage=stage,
            candidates={str(p): c.alpha for p, c in candidates.items()},
        )
    best = min(matching, key=lambda c: (abs(c.alpha), c.pair))
    return StageAlpha(stage, best.alpha, best.pair, sign, candidates)


def solve_stages(model: GccaModel, params: NuisanceParams) -> AlphaSolution:
    """Alpha for every I0 stage using the parameter sets and signs."""
    stages = {}
    for l in params.I0:
        sets = (params.delta_pos.get(l, ()), params.delta_zero.get(l, ()))
        stages[l] = solve_alpha(compute_deltas(model, l), model.cos_wz(l), sets, params.alpha_signs[l], stage=l)
    return AlphaSolution(stages)


# --- common source --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CommonSourceParts:
    """Intermediates of one view's common-source estimate."""

    h_tilde: np.ndarray
    cov_xz: np.ndarray
    cov_z: np.ndarray
    r_check: int
    coefficients: np.ndarray


def _h_tilde(model: GccaModel, k: int, stages: Sequence[int]) -> np.ndarray:
    return np.array([model.unit_eta(l, k) for l in stages]).reshape(len(stages), model.block_sizes[k])


def latent_common(model: GccaModel, alphas: AlphaSolution) -> np.ndarray:
    """Rows alpha^(l) w^(l) for l in I0 (|I0| x n)."""
    if not alphas.I0:
        return np.zeros((0, model.n or 0))
    return alphas.values()[:, None] * model.w_scores[list(alphas.I0)]


def common_source(
    signal: SignalEstimate,
    model: GccaModel,
    params: NuisanceParams,
    k: int,
    alphas: AlphaSolution | None = None,
) -> tuple[np.ndarray, CommonSourceParts]:
    """Common-source matrix of view k.

    C_k = cov(x_k, z_k^{I0}) cov(z_k^{I0})^+ C^{I0}, with the pseudoinverse
    truncated to min(r_k*, rank) eigenpairs. Returns the zero matrix when I0
    is empty.

    Raises:
        RankError: r_k* exceeds |I0|.
    """
    stages = params.I0
    r_star = params.r_star[k] if params.r_star else len(stages)
    if r_star > len(stages):
        raise RankError(f"view {k}: r_star={r_star} exceeds |I0|={len(stages)}", view=k)
    if not stages:
        empty = np.zeros((signal.p, 0))
        parts = CommonSourceParts(np.zeros((0, signal.rank)), empty, np.zeros((0, 0)), 0, empty)
        return np.zeros((signal.p, signal.n)), parts

    alphas = alphas or solve_stages(model, params)
    h_tilde = _h_tilde(model, k, stages)
    cov_xz = (signal.left_vectors * np.sqrt(signal.eigenvalues)) @ h_tilde.T
    cov_z = h_tilde @ h_tilde.T
    r_check = min(r_star, linalg.numerical_rank(linalg.eigh_desc(cov_z)[0], len(stages)))
    coefficients = cov_xz @ linalg.pinv_psd(cov_z, r_check)
    c_hat = coefficients @ latent_common(model, alphas)
    return c_hat, CommonSourceParts(h_tilde, cov_xz, cov_z, r_check, coefficients)


# --- results --------------------------------------------------------------


def pve_ratios(common: np.ndarray, signal: np.ndarray) -> tuple[float, np.ndarray]:
    """View- and variable-level ||C||^2 / ||X||^2 with 0/0 := 0."""
    c_rows = np.sum(common**2, axis=1)
    x_rows = np.sum(signal**2, axis=1)
    total = float(x_rows.sum())
    view = float(c_rows.sum() / total) if total > 0 else 0.0
    var = np.divide(c_rows, x_rows, out=np.zeros_like(c_rows), where=x_rows > 0)
    return view, var


@dataclass(frozen=True, eq=False)
class ViewDecomposition:
    """One view's split X_hat = C_hat + D_hat with explained-variance shares."""

    name: str
    x_hat: Matrix
    c_hat: Matrix
    d_hat: Matrix
    rank: int
    r_star: int
    r_check: int
    pve_view_c: float
    pve_var_c: np.ndarray

    @property
    def pve_view_d(self) -> float:
        return 1.0 - self.pve_view_c if np.any(self.x_hat.values) else 0.0

    @property
    def pve_var_d(self) -> np.ndarray:
        nonzero = np.any(self.x_hat.values != 0, axis=1)
        return np.where(nonzero, 1.0 - self.pve_var_c, 0.0)


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    """Per-view decompositions plus the shared stage quantities."""

    views: tuple[ViewDecomposition, ...]
    params: NuisanceParams
    alphas: AlphaSolution
    c_common: np.ndarray
    model: GccaModel
    selection: "SelectionReport | None" = None

    @property
    def k(self) -> int:
        return len(self.views)

    @property
    def I0(self) -> tuple[int, ...]:
        return self.params.I0

    def c_hats(self) -> list[np.ndarray]:
        return [v.c_hat.values for v in self.views]

    def d_hats(self) -> list[np.ndarray]:
        return [v.d_hat.values for v in self.views]


@dataclass(frozen=True, eq=False)
class PveSummary:
    """Explained-variance shares of common and distinctive parts."""

    view_c: np.ndarray
    view_d: np.ndarray
    var_c: tuple[np.ndarray, ...]
    var_d: tuple[np.ndarray, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"view_c": self.view_c.tolist(), "view_d": self.view_d.tolist()}


def pve(result: DecompositionResult) -> PveSummary:
    """View- and variable-level PVE of the common and distinctive parts."""
    return PveSummary(
        view_c=np.array([v.pve_view_c for v in result.views]),
        view_d=np.array([v.pve_view_d for v in result.views]),
        var_c=tuple(v.pve_var_c for v in result.views),
        var_d=tuple(v.pve_var_d for v in result.views),
    )


def decompose_signals(
    signals: Sequence[SignalEstimate],
    params: NuisanceParams,
    names: Sequence[str] | None = None,
    targets: Sequence[Matrix] | None = None,
    model: GccaModel | None = None,
) -> DecompositionResult:
    """Decompose recovered signals under fixed nuisance parameters.

    Args:
        signals: One estimate per view.
        params: Nuisance parameters.
        names: View names.
        targets: Matrices the common parts are subtracted from; defaults to
            each signal's x_hat.
        model: A GCCA model already fitted on these signals.
    """
    model = model or sample_gcca(signals)
    alphas = solve_stages(model, params)
    names = list(names) if names else [f"view{k}" for k in range(len(signals))]
    targets = list(targets) if targets else [s.x_hat for s in signals]

    views = []
    for k, signal in enumerate(signals):
        c_values, parts = common_source(signal, model, params, k, alphas)
        target = targets[k]
        c_hat = target.with_values(c_values)
        d_hat = target.with_values(target.values - c_values)
        view_pve, var_pve = pve_ratios(c_values, target.values)
        views.append(
            ViewDecomposition(
                name=names[k],
                x_hat=target,
                c_hat=c_hat,
                d_hat=d_hat,
                rank=signal.rank,
                r_star=params.r_star[k] if params.r_star else 0,
                r_check=parts.r_check,
                pve_view_c=view_pve,
                pve_var_c=var_pve,
            )
        )
    logger.debug(
        "decomposed %d views: I0=%s alphas=%s pve_c=%s",
        len(views), list(params.I0), np.round(alphas.values(), 4), [round(v.pve_view_c, 4) for v in views],
    )
    return DecompositionResult(tuple(views), params, alphas, latent_common(model, alphas), model)


@trace_op("dgcca.decompose")
def decompose(
    ds: MultiViewDataset,
    params: NuisanceParams | None = None,
    config: "SelectionConfig | None" = None,
    k_max: int | None = None,
    overrides: dict[str, Any] | None = None,
) -> DecompositionResult:
    """Full pipeline: recover signals, fit GCCA, decompose.

    Nuisance parameters are selected by statistical tests when params is None;
    overrides then fixes individual parameters (for example the ranks).
    """
    if params is None:
        from dgcca.nuisance import select_all

        report = select_all(ds, config=config, overrides=overrides, k_max=k_max)
        result = decompose_signals(report.signals, report.params, ds.names, model=report.model)
        return replace(result, selection=report)

    threads = config.threads if config is not None else 1
    signals = recover_all(ds, list(params.ranks), k_max=k_max, threads=threads)
    logger.info("decomposing %d views with user parameters (I0=%s)", ds.k, list(params.I0))
    return decompose_signals(signals, params, ds.names)


# --- hierarchy ------------------------------------------------------------


class StopReason(str, Enum):
    """Why the hierarchical decomposition stopped."""

    MAX_LEVELS = "max_levels"
    EMPTY_I0 = "empty_I0"
    PVE_FLOOR = "pve_floor"


@dataclass(frozen=True, eq=False)
class HierarchyResult:
    """Successive decompositions of the distinctive parts."""

    levels: tuple[DecompositionResult, ...]
    stop_reason: StopReason
    cumulative_pve: np.ndarray

    def total_common(self, k: int) -> np.ndarray:
        """Sum of the common matrices of view k over all levels."""
        return sum(level.views[k].c_hat.values for level in self.levels)

    def final_distinctive(self, k: int) -> np.ndarray:
        return self.levels[-1].views[k].d_hat.values


def inner_rank(m: Matrix, k_max: int | None = None) -> int:
    """Rank for an inner-level input: ED estimate capped by the numerical rank.

    Exactly low-rank inputs have a flat zero tail, so the ED estimate alone
    is unreliable there.
    """
    numeric = signal_from_matrix(m).rank
    try:
        estimate = select_rank_ed(m, k_max)
    except RankError:
        return numeric
    return min(estimate, numeric)


@trace_op("dgcca.decompose_hierarchical")
def decompose_hierarchical(
    ds: MultiViewDataset,
    params_per_level: Sequence[NuisanceParams | None] | None = None,
    max_levels: int = 2,
    pve_floor: float = 0.0,
    config: "SelectionConfig | None" = None,
    k_max: int | None = None,
    overrides: dict[str, Any] | None = None,
) -> HierarchyResult:
    """Iterate the decomposition on successive distinctive parts.

    Stops after max_levels, at a level with empty I0, or once every view's
    cumulative common share PVE_c(t) * prod_{i<t} PVE_d(i) is at most pve_floor.
    The level triggering the stop is kept. overrides applies to the first
    level only.
    """
    if max_levels < 1:
        raise ConfigError(f"max_levels must be >= 1, got {max_levels}")
    if pve_floor < 0:
        raise ConfigError(f"pve_floor must be >= 0, got {pve_floor}")
    from dgcca.nuisance import select_from_signals

    given = list(params_per_level or [])
    levels: list[DecompositionResult] = []
    cumulative: list[np.ndarray] = []
    carried = np.ones(ds.k)
    reason = StopReason.MAX_LEVELS

    for t in range(max_levels):
        params = given[t] if t < len(given) else None
        if t == 0:
            result = decompose(ds, params, config=config, k_max=k_max, overrides=overrides)
        else:
            inputs = [view.d_hat for view in levels[-1].views]
            ranks = list(params.ranks) if params is not None else [inner_rank(m, k_max) for m in inputs]
            signals = [signal_from_matrix(m, r) for m, r in zip(inputs, ranks)]
            report = None
            if params is None:
                report = select_from_signals(signals, config=config)
                params = report.params
            result = decompose_signals(signals, params, ds.names, targets=inputs)
            result = replace(result, selection=report)
        levels.append(result)

        view_c = np.array([v.pve_view_c for v in result.views])
        view_d = np.array([v.pve_view_d for v in result.views])
        cumulative.append(view_c * carried)
        carried = carried * view_d
        logger.info("level %d: I0=%s cumulative pve_c=%s", t, list(result.I0), np.round(cumulative[-1], 4))

        if not result.I0:
            reason = StopReason.EMPTY_I0
            break
        if np.all(cumulative[-1] <= pve_floor):
            reason = StopReason.PVE_FLOOR
            break

    return HierarchyResult(tuple(levels), reason, np.array(cumulative))


# --- population quantities ------------------------------------------------


def derive_population_params(model: GccaModel, tol: float = POPULATION_TOLERANCE) -> NuisanceParams:
    """True nuisance parameters of an exact stacked covariance.

    A stage belongs to I0 when its smallest-magnitude real root is nonzero.
    The sign follows the smallest magnitude over both signs, ties going to
    the negative root.
    """
    I0: list[int] = []
    delta_pos: dict[int, tuple[Pair, ...]] = {}
    delta_zero: dict[int, tuple[Pair, ...]] = {}
    signs: dict[int, int] = {}
    for l in range(model.L):
        deltas = compute_deltas(model, l)
        cosines = model.cos_wz(l)
        pos = tuple(p for p, d in deltas.items() if d > tol)
        zero = tuple(p for p, d in deltas.items() if abs(d) <= tol)
        if not pos and not zero:
            continue
        candidates = alpha_candidates(deltas, cosines, pos, zero).values()
        if min(abs(c.alpha) for c in candidates) <= tol:
            continue
        plus = [abs(c.alpha) for c in candidates if c.alpha > 0]
        minus = [abs(c.alpha) for c in candidates if c.alpha < 0]
        sign = 1 if plus and (not minus or min(plus) < min(minus) - tol) else -1
        I0.append(l)
        delta_pos[l], delta_zero[l], signs[l] = pos, zero, sign

    r_star = []
    for k in range(model.k):
        if not I0:
            r_star.append(0)
            continue
        h = _h_tilde(model, k, I0)
        values = linalg.eigh_desc(h @ h.T)[0]
        r_star.append(int(np.count_nonzero(values > tol * max(float(values[0]), 1.0))))

    return NuisanceParams(
        ranks=model.block_sizes,
        L=model.L,
        I0=tuple(I0),
        r_star=tuple(r_star),
        delta_pos=delta_pos,
        delta_zero=delta_zero,
        alpha_signs=signs,
        provenance=Provenance.USER,
    )


@dataclass(frozen=True, eq=False)
class PopulationDecomposition:
    """Exact decomposition of a factor model x_k = V_k Lambda_k^{1/2} f_k.

    coefficient_maps[k] is A_k with c_k = V_k Lambda_k^{1/2} A_k f, where f
    stacks every view's factors.
    """

    model: GccaModel
    params: NuisanceParams
    alphas: AlphaSolution
    coefficient_maps: tuple[np.ndarray, ...]
    pve_view_c: np.ndarray
    pve_var_c: tuple[np.ndarray, ...] | None = None

    def common_factors(self, k: int, f: np.ndarray) -> np.ndarray:
        """A_k f: the common part of view k in its own factor coordinates."""
        return self.coefficient_maps[k] @ f


def population_decomposition(
    model: GccaModel,
    signal_eigenvalues: Sequence[np.ndarray],
    params: NuisanceParams | None = None,
    loadings: Sequence[np.ndarray] | None = None,
) -> PopulationDecomposition:
    """Population alphas, coefficient maps and PVEs.

    Args:
        model: Population GCCA of cov(f).
        signal_eigenvalues: Diagonal of Lambda_k per view.
        params: Nuisance parameters; derived from the model when omitted.
        loadings: V_k per view, needed for variable-level PVE.
    """
    params = params or derive_population_params(model)
    alphas = solve_stages(model, params)
    stages = list(params.I0)
    total = sum(model.block_sizes)
    w_map = np.zeros((len(stages), total))
    for i, l in enumerate(stages):
        w_map[i] = model.eigenvectors[:, l] / np.sqrt(model.eigenvalues[l])
    scaled_w = alphas.values()[:, None] * w_map if stages else w_map

    maps, view_pve, var_pve = [], [], []
    for k in range(model.k):
        lam = np.asarray(signal_eigenvalues[k], dtype=np.float64)
        r_k = model.block_sizes[k]
        if stages:
            h = _h_tilde(model, k, stages)
            cov_z = h @ h.T
            r_star = params.r_star[k] if params.r_star else len(stages)
            r_check = min(r_star, linalg.numerical_rank(linalg.eigh_desc(cov_z)[0], len(stages)))
            b = h.T @ linalg.pinv_psd(cov_z, r_check)
        else:
            b = np.zeros((r_k, 0))
        maps.append(b @ scaled_w)
        # cov(alpha w) is diag(alpha^2) since the w's are orthonormal.
        loading_scale = np.sqrt(lam)[:, None] * b
        common_var = np.sum(loading_scale**2 * (alphas.values() ** 2 if stages else 1.0))
        view_pve.append(float(common_var / lam.sum()) if lam.sum() > 0 else 0.0)
        if loadings is not None:
            v = np.asarray(loadings[k])
            c_rows = np.sum((v @ loading_scale) ** 2 * (alphas.values() ** 2 if stages else 1.0), axis=1)
            x_rows = (v**2) @ lam
            var_pve.append(np.divide(c_rows, x_rows, out=np.zeros_like(c_rows), where=x_rows > 0))

    return PopulationDecomposition(
        model=model,
        params=params,
        alphas=alphas,
        coefficient_maps=tuple(maps),
        pve_view_c=np.array(view_pve),
        pve_var_c=tuple(var_pve) if loadings is not None else None,
    )
