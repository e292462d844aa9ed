"""Simulated three-view factor models with known decompositions, and replication studies.

Setups 1.x are single-factor models whose canonical variables share a common
pairwise angle theta; setups 2.x are five-factor models with a fixed stacked
factor covariance. The x.2 variants fix the second and third views at
p = (300, 900) with unit noise variance.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
import pandas as pd
import scipy.linalg

from dgcca import rng
from dgcca.config import StudyConfig
from dgcca.dataset import Matrix, MultiViewDataset
from dgcca.decomposition import (
    DecompositionResult,
    PopulationDecomposition,
    decompose,
    population_decomposition,
)
from dgcca.errors import ConfigError, DegenerateInput, RankError, SignSelectionError
from dgcca.evaluation import orthogonal_pair_rate, rank_quality, rho1
from dgcca.gcca import population_gcca
from dgcca.params import STAGES, NuisanceParams
from dgcca.tracing import trace_op

logger = logging.getLogger(__name__)

SETUP_IDS = ("1.1", "1.2", "2.1", "2.2")
FIXED_DIMS = (300, 900)
FIXED_SIGMA2 = 1.0
SINGLE_FACTOR_EIGENVALUE = 500.0
MULTI_FACTOR_EIGENVALUES = (500.0, 400.0, 300.0, 200.0, 100.0)
DEFAULT_THETAS = (10, 20, 30, 40, 50, 60, 70)

# Cross-covariance blocks of the five-factor setups; cov(f_k) = I.
_COV_F1_F2 = (
    (0.02498103503160578, -0.3734791596502449, -0.1482674122573037, -0.3913807076061239, -0.05845072081373771),
    (0.1298912403724416, -0.2915966482089937, -0.703223066831662, -0.286977394728156, -0.07037562289439672),
    (-0.4691315902716665, -0.02216628581934877, -0.05789731182102772, -0.1224434530178697, 0.7359965879693088),
    (-0.005270967060252731, -0.1916047000827934, 0.1572469950904809, -0.1862928969932901, 0.0648022978041196),
    (0.3309749556233325, 0.2910731038141944, -0.2222302484678626, 0.4183644600274041, -0.09116219316544609),
)
_COV_F1_F3 = (
    (-0.1652455953442644, 0.07288409202801582, 0.4797927991048995, -0.1974810941368655, 0.2123320697504773),
    (-0.3889488816571995, 0.05377416249857463, 0.5653871787847853, 0.03845218160536631, -0.2069628634535125),
    (0.4125592431747815, -0.7372033575312142, 0.2721804829221633, -0.0862772040030661, -0.2227478031028198),
    (-0.02345535210198419, -0.1075518721538277, 0.1394751370539585, -0.1625882523272944, 0.3301641568167817),
    (-0.3328426143159536, -0.09361178321406048, -0.4483940610130605, 0.3455811570541347, -0.09767404221183135),
)
_COV_F2_F3 = (
    (-0.1234093117538375, 0.2223022967058531, -0.3593383789512091, 0.04344070064196999, 0.2617381817815529),
    (-0.09993460814692552, -0.008819786526375878, -0.4039397802979183, 0.2933537865045707, -0.2650032054127345),
    (0.5075563895372593, -0.1098865559264541, -0.4771360952896037, -0.1119099874049149, 0.2079731636733454),
    (-0.08232391689469482, -0.01395485249078317, -0.5724368834706903, 0.3121430368957581, -0.1821568224740747),
    (0.3937761144502051, -0.6998227270213208, 0.1161733947993463, -0.04568041770157075, -0.1795827017135321),
)


def multi_factor_cov() -> np.ndarray:
    """The 15 x 15 stacked factor covariance of setups 2.x, symmetrized."""
    b12, b13, b23 = (np.array(block) for block in (_COV_F1_F2, _COV_F1_F3, _COV_F2_F3))
    eye = np.eye(5)
    cov = np.block([[eye, b12, b13], [b12.T, eye, b23], [b13.T, b23.T, eye]])
    return (cov + cov.T) / 2.0


def compound_symmetric_cov(theta: float, k: int = 3) -> np.ndarray:
    """Correlation matrix with every off-diagonal entry cos(theta degrees)."""
    c = math.cos(math.radians(theta))
    return np.full((k, k), c) + (1.0 - c) * np.eye(k)


@dataclass(frozen=True)
class SetupSpec:
    """One simulation setting.

    Attributes:
        setup_id: "1.1", "1.2", "2.1" or "2.2".
        p: Variable counts per view.
        sigma2: Noise variance per view.
        theta: Pairwise angle in degrees between canonical variables (setups 1.x).
        n: Sample size.
        seed: Master seed; loadings and every replication derive from it.
    """

    setup_id: str
    p: tuple[int, int, int]
    sigma2: tuple[float, float, float]
    theta: float = 50.0
    n: int = 300
    seed: int = 0

    def __post_init__(self) -> None:
        if self.setup_id not in SETUP_IDS:
            raise ConfigError(f"unknown setup {self.setup_id!r}; expected one of {', '.join(SETUP_IDS)}")
        if len(self.p) != 3 or len(self.sigma2) != 3:
            raise ConfigError("setups have exactly three views")
        if any(p_k < self.rank for p_k in self.p):
            raise ConfigError(f"every view needs at least {self.rank} variables, got {list(self.p)}")
        if any(s < 0 for s in self.sigma2):
            raise ConfigError(f"noise variances must be nonnegative, got {list(self.sigma2)}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.single_factor and not 0.0 <= self.theta <= 90.0:
            raise ConfigError(f"theta must lie in [0, 90] degrees, got {self.theta}")
        if self.setup_id in ("1.2", "2.2") and (tuple(self.p[1:]) != FIXED_DIMS or tuple(self.sigma2[1:]) != (FIXED_SIGMA2,) * 2):
            raise ConfigError(f"setup {self.setup_id} fixes (p2, p3) = {FIXED_DIMS} and unit noise on views 2 and 3")

    @classmethod
    def create(
        cls,
        setup_id: str,
        p1: int = 600,
        sigma2: float = 1.0,
        theta: float = 50.0,
        n: int = 300,
        seed: int = 0,
    ) -> "SetupSpec":
        """Build a setting from the first view's dimension and noise level."""
        setup_id = str(setup_id)
        if setup_id in ("1.2", "2.2"):
            p = (int(p1), *FIXED_DIMS)
            noise = (float(sigma2), FIXED_SIGMA2, FIXED_SIGMA2)
        else:
            p = (int(p1),) * 3
            noise = (float(sigma2),) * 3
        return cls(setup_id, p, noise, float(theta), int(n), int(seed))

    @property
    def single_factor(self) -> bool:
        return self.setup_id.startswith("1.")

    @property
    def rank(self) -> int:
        return 1 if self.single_factor else len(MULTI_FACTOR_EIGENVALUES)

    @property
    def eigenvalues(self) -> np.ndarray:
        if self.single_factor:
            return np.array([SINGLE_FACTOR_EIGENVALUE])
        return np.array(MULTI_FACTOR_EIGENVALUES)

    def factor_cov(self) -> np.ndarray:
        return compound_symmetric_cov(self.theta) if self.single_factor else multi_factor_cov()

    def snr(self) -> tuple[float, ...]:
        """tr(Lambda_k) / (p_k sigma2_k) per view (inf when noiseless)."""
        total = float(self.eigenvalues.sum())
        return tuple(total / (p * s) if s > 0 else math.inf for p, s in zip(self.p, self.sigma2))

    def to_dict(self) -> dict[str, Any]:
        return {
            "setup": self.setup_id,
            "p": list(self.p),
            "sigma2": list(self.sigma2),
            "theta": self.theta if self.single_factor else None,
            "n": self.n,
            "seed": self.seed,
        }


@lru_cache(maxsize=32)
def _loadings(seed: int, p: int, r: int) -> np.ndarray:
    gen = rng.generator(seed, rng.STREAM_LOADINGS, p, r)
    q, upper = np.linalg.qr(gen.standard_normal((p, r)))
    q = q * np.sign(np.diag(upper))
    q.setflags(write=False)
    return q


def loadings(spec: SetupSpec) -> tuple[np.ndarray, ...]:
    """Orthonormal V_k per view, shared by views of equal size and across replications."""
    return tuple(_loadings(spec.seed, p, spec.rank) for p in spec.p)


def population_truth(spec: SetupSpec) -> PopulationDecomposition:
    """Exact decomposition of the setting's factor model."""
    model = population_gcca(spec.factor_cov(), (spec.rank,) * 3)
    return population_decomposition(model, [spec.eigenvalues] * 3, loadings=loadings(spec))


def theta_grid_pve(thetas: Sequence[float] = DEFAULT_THETAS) -> dict[float, float]:
    """Population common-source PVE of the single-factor setting for each angle.

    All three views share the value, and it does not depend on p or the noise.
    """
    out = {}
    for theta in thetas:
        spec = SetupSpec.create("1.1", p1=1, theta=theta)
        out[theta] = float(population_truth(spec).pve_view_c[0])
    return out


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Noiseless signals of one replication and their exact split."""

    x: tuple[np.ndarray, ...]
    c: tuple[np.ndarray, ...]
    d: tuple[np.ndarray, ...]
    pve_view_c: np.ndarray
    pve_var_c: tuple[np.ndarray, ...]
    params: NuisanceParams
    population: PopulationDecomposition
    loadings: tuple[np.ndarray, ...]


def _factor_root(cov: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        # singular covariance: symmetric square root instead
        values, vectors = np.linalg.eigh(cov)
        return vectors * np.sqrt(np.clip(values, 0.0, None))


def _centered(a: np.ndarray) -> np.ndarray:
    return a - a.mean(axis=1, keepdims=True)


def generate(spec: SetupSpec, replication: int = 0) -> tuple[MultiViewDataset, GroundTruth]:
    """Draw one replication: Y_k = V_k Lambda_k^{1/2} f_k + e_k with rows centered.

    Factor and noise samples are centered separately, so a noiseless setting
    returns Y_k = X_k exactly.
    """
    truth = population_truth(spec)
    gen = rng.generator(spec.seed, rng.STREAM_REPLICATION, replication)
    cov = spec.factor_cov()
    f = _centered(_factor_root(cov) @ gen.standard_normal((cov.shape[0], spec.n)))

    v = loadings(spec)
    scale = np.sqrt(spec.eigenvalues)
    views, xs, cs, ds = [], [], [], []
    for k in range(3):
        mixing = v[k] * scale
        x = mixing @ f[truth.model.block_slice(k)]
        c = mixing @ truth.common_factors(k, f)
        noise = _centered(gen.standard_normal((spec.p[k], spec.n)))
        views.append(Matrix(x + math.sqrt(spec.sigma2[k]) * noise))
        xs.append(x)
        cs.append(c)
        ds.append(x - c)

    dataset = MultiViewDataset(tuple(views), names=("view1", "view2", "view3"))
    ground = GroundTruth(
        x=tuple(xs),
        c=tuple(cs),
        d=tuple(ds),
        pve_view_c=truth.pve_view_c,
        pve_var_c=truth.pve_var_c,
        params=truth.params,
        population=truth,
        loadings=v,
    )
    return dataset, ground


# --- replication studies ----------------------------------------------------


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if np.std(a) == 0 or np.std(b) == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])


def _scaled_error(estimate: np.ndarray, truth: np.ndarray, norm: float) -> float:
    return float(np.sum((estimate - truth) ** 2) / norm) if norm > 0 else math.nan


def view_metrics(result: DecompositionResult, truth: GroundTruth, top_fraction: float = 0.1) -> list[dict[str, Any]]:
    """Per-view errors against the ground truth.

    Matrix errors are squared Frobenius distances scaled by ||X_k||^2.
    """
    rows = []
    for k, view in enumerate(result.views):
        norm = float(np.sum(truth.x[k] ** 2))
        var_error = np.abs(view.pve_var_c - truth.pve_var_c[k])
        ranking_c = rank_quality(truth.pve_var_c[k], view.pve_var_c, top_fraction)
        ranking_d = rank_quality(1.0 - truth.pve_var_c[k], view.pve_var_d, top_fraction)
        rows.append(
            {
                "view": view.name,
                "err_x": _scaled_error(view.x_hat.values, truth.x[k], norm),
                "err_c": _scaled_error(view.c_hat.values, truth.c[k], norm),
                "err_d": _scaled_error(view.d_hat.values, truth.d[k], norm),
                "err_pve_view": abs(view.pve_view_c - float(truth.pve_view_c[k])),
                "err_pve_var_max": float(var_error.max()),
                "err_pve_var_q3": float(np.quantile(var_error, 0.75)),
                "err_pve_var_median": float(np.median(var_error)),
                "pve_var_corr": _pearson(truth.pve_var_c[k], view.pve_var_c),
                "spearman": ranking_c.spearman,
                "ndcg": ranking_c.ndcg,
                "ndcg_top": ranking_c.ndcg_top,
                "ndcg_d": ranking_d.ndcg,
            }
        )
    return rows


def _distinctive_metrics(result: DecompositionResult, fdr_level: float) -> dict[str, Any]:
    d_mats = [view.d_hat for view in result.views]
    try:
        value = rho1(d_mats)
    except DegenerateInput:
        value = math.nan
    return {
        "rho1": value,
        "orthogonal_pair": orthogonal_pair_rate(d_mats, fdr_level).has_orthogonal_pair,
    }


@dataclass(frozen=True, eq=False)
class StudySummary:
    """Per-replication metrics of a study and their aggregates.

    Attributes:
        spec: The simulated setting.
        config: Study settings.
        views: One row per (replication, view).
        replications: One row per replication.
    """

    spec: SetupSpec
    config: StudyConfig
    views: pd.DataFrame
    replications: pd.DataFrame

    @property
    def reps(self) -> int:
        return len(self.replications)

    def view_means(self) -> pd.DataFrame:
        return self.views.drop(columns="rep").groupby("view", sort=False).mean()

    def view_sds(self) -> pd.DataFrame:
        return self.views.drop(columns="rep").groupby("view", sort=False).std(ddof=1).fillna(0.0)

    def selection_accuracy(self) -> dict[str, float] | None:
        """Share of replications where each selected parameter matched the truth."""
        columns = [f"correct_{name}" for name in (*STAGES, "all") if f"correct_{name}" in self.replications]
        if not columns:
            return None
        return {c.removeprefix("correct_"): float(self.replications[c].mean()) for c in columns}

    def to_dict(self) -> dict[str, Any]:
        reps = self.replications
        ok = reps[~reps["failed"]]
        numeric = ok[["rho1"]].astype(float)
        return _finite(
            {
                "schema_version": "1",
                "setup": self.spec.to_dict(),
                "reps": self.reps,
                "failed_reps": int(reps["failed"].sum()),
                "use_true_params": self.config.use_true_params,
                "generator": rng.GENERATOR_NAME,
                "true_pve_c": reps.attrs.get("true_pve_c"),
                "views": {
                    name: {"mean": row.to_dict(), "sd": self.view_sds().loc[name].to_dict()}
                    for name, row in self.view_means().iterrows()
                },
                "rho1": {"mean": float(numeric["rho1"].mean()), "sd": float(numeric["rho1"].std(ddof=1)) if len(ok) > 1 else 0.0},
                "orthogonal_pair_rate": float(ok["orthogonal_pair"].mean()) if len(ok) else math.nan,
                "selection_accuracy": self.selection_accuracy(),
            }
        )


def _finite(value: Any) -> Any:
    """Replace NaN with None so summaries serialize as strict JSON."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_finite(v) for v in value]
    if isinstance(value, float | np.floating):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.integer | np.bool_):
        return value.item()
    return value


def _replicate(spec: SetupSpec, config: StudyConfig, rep: int) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    dataset, truth = generate(spec, rep)
    row: dict[str, Any] = {"rep": rep, "failed": False, "error": None}
    try:
        if config.use_true_params:
            result = decompose(dataset, truth.params, k_max=config.k_max)
        else:
            selection = config.selection.model_copy(
                update={"seed": rng.derive_seed(config.selection.seed, rng.STREAM_REPLICATION, rep)}
            )
            result = decompose(dataset, config=selection, k_max=config.k_max)
            for name, correct in result.params.matches(truth.params).items():
                row[f"correct_{name}"] = correct
    except (SignSelectionError, RankError) as e:
        # counted against selection accuracy, excluded from error means
        logger.warning("replication %d failed: %s", rep, e.message)
        row.update(failed=True, error=e.code, rho1=math.nan, orthogonal_pair=False)
        if not config.use_true_params:
            row.update({f"correct_{name}": False for name in (*STAGES, "all")})
        return [], row

    views = view_metrics(result, truth, config.top_fraction)
    for view in views:
        view["rep"] = rep
    row.update(_distinctive_metrics(result, config.fdr_level))
    return views, row


@trace_op("dgcca.run_study")
def run_study(spec: SetupSpec, config: StudyConfig | None = None) -> StudySummary:
    """Replicate a setting and collect error, ranking and orthogonality metrics.

    Replication i always draws from the substream (seed, replication, i), so
    results do not depend on the thread count.
    """
    config = config or StudyConfig()
    logger.info("running %d replications of setup %s (p=%s, sigma2=%s)", config.reps, spec.setup_id, spec.p, spec.sigma2)

    def one(rep: int) -> tuple[list[dict[str, Any]], dict[str, Any]]:
        return _replicate(spec, config, rep)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(one, range(config.reps)))
    else:
        outcomes = [one(rep) for rep in range(config.reps)]

    view_rows = [row for rows, _ in outcomes for row in rows]
    view_columns = ["rep", "view", "err_x", "err_c", "err_d", "err_pve_view", "err_pve_var_max",
                    "err_pve_var_q3", "err_pve_var_median", "pve_var_corr", "spearman", "ndcg", "ndcg_top", "ndcg_d"]
    views = pd.DataFrame(view_rows, columns=view_columns)
    replications = pd.DataFrame([row for _, row in outcomes])
    replications.attrs["true_pve_c"] = population_truth(spec).pve_view_c.tolist()
    summary = StudySummary(spec, config, views, replications)
    logger.info("study finished: %d of %d replications succeeded", summary.reps - int(replications["failed"].sum()), summary.reps)
    return summary
