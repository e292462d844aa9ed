"""Carroll's generalized CCA on stacked factor scores.

The eigensystem of cov(f), f = [f_1; ...; f_K], gives per stage l an
auxiliary variable w = lambda^{-1/2} eta^T f and canonical variables
z_k = (eta_k / ||eta_k||)^T f_k. Population mode takes an exact cov(f);
sample mode builds it from factor scores and also forms the score vectors.
"""

import logging
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from dgcca import linalg
from dgcca.errors import ArityError, DegenerateSpectrumWarning, NumericsError, ShapeError
from dgcca.signal import SignalEstimate

logger = logging.getLogger(__name__)

STOPPING_TOLERANCE = 1e-10
# Exact covariances come from printed constants; unit eigenvalues land within ~1e-9 of 1.
POPULATION_STOPPING_TOLERANCE = 1e-8
TIE_GAP = 1e-6


def _unit(block: np.ndarray, dim: int) -> np.ndarray:
    norm = np.linalg.norm(block)
    if norm**2 <= linalg.EPS * max(dim, 1):
        return np.zeros_like(block)
    return block / norm


def stopping_index(eigenvalues: Sequence[float] | np.ndarray, tol: float = STOPPING_TOLERANCE) -> int:
    """Number of leading eigenvalues exceeding 1 (0 when none)."""
    values = np.asarray(eigenvalues, dtype=np.float64)
    return int(np.count_nonzero(values > 1.0 + tol))


@dataclass(frozen=True, eq=False)
class GccaModel:
    """Eigensystem of the stacked-factor covariance and its stage variables.

    Attributes:
        eigenvalues: Nonincreasing eigenvalues of cov(f).
        eigenvectors: Columns are eta^(l), partitioned by block_sizes.
        block_sizes: r_k per view.
        cov_f: The (sample or exact) stacked covariance.
        w_scores: Stage-by-n auxiliary scores; None in population mode.
        z_scores: K x stages x n canonical scores; None in population mode.
        factor_blocks: Per-view factor scores F_k; None in population mode.
        L: Stopping index.
        r_f_hat: Numerical rank of cov(f).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    block_sizes: tuple[int, ...]
    cov_f: np.ndarray
    L: int
    r_f_hat: int
    w_scores: np.ndarray | None = None
    z_scores: np.ndarray | None = None
    factor_blocks: tuple[np.ndarray, ...] | None = None

    @property
    def k(self) -> int:
        return len(self.block_sizes)

    @property
    def n(self) -> int | None:
        return None if self.w_scores is None else self.w_scores.shape[1]

    @property
    def is_sample(self) -> bool:
        return self.w_scores is not None

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.block_sizes)]).astype(int)

    def block_slice(self, k: int) -> slice:
        start, stop = self.offsets[k], self.offsets[k + 1]
        return slice(int(start), int(stop))

    def eta_block(self, l: int, k: int) -> np.ndarray:
        """eta_k^(l)."""
        return self.eigenvectors[self.block_slice(k), l]

    def block_norms(self, l: int) -> np.ndarray:
        """||eta_k^(l)|| for every view."""
        return np.array([np.linalg.norm(self.eta_block(l, k)) for k in range(self.k)])

    def unit_eta(self, l: int, k: int) -> np.ndarray:
        """eta_k / ||eta_k||, the zero vector when the block vanishes (0/0 := 0)."""
        return _unit(self.eta_block(l, k), self.cov_f.shape[0])

    def cov_block(self, j: int, k: int) -> np.ndarray:
        return self.cov_f[self.block_slice(j), self.block_slice(k)]

    def cos_wz(self, l: int) -> np.ndarray:
        """cos(w^(l), z_k^(l)) for every view.

        Sample mode uses the /n inner product of the score vectors;
        population mode uses sqrt(lambda_l) * ||eta_k^(l)||.
        """
        if self.is_sample:
            return self.z_scores[:, l, :] @ self.w_scores[l] / self.n
        norms = self.block_norms(l)
        norms[norms**2 <= linalg.EPS * max(self.cov_f.shape[0], 1)] = 0.0
        return np.sqrt(max(float(self.eigenvalues[l]), 0.0)) * norms

    def cos_zz(self, l: int) -> np.ndarray:
        """K x K matrix of cos(z_j^(l), z_k^(l))."""
        if self.is_sample:
            z = self.z_scores[:, l, :]
            return z @ z.T / self.n
        units = [self.unit_eta(l, k) for k in range(self.k)]
        out = np.zeros((self.k, self.k))
        for j in range(self.k):
            for k in range(self.k):
                out[j, k] = units[j] @ self.cov_block(j, k) @ units[k]
        return out

    def partial_scores(self, l: int) -> np.ndarray:
        """eta_k^(l)^T F_k for every view (K x n); requires sample mode."""
        if self.factor_blocks is None:
            raise ArityError("partial scores need a sample-mode model")
        return np.vstack([self.eta_block(l, k) @ self.factor_blocks[k] for k in range(self.k)])


def _check_ties(eigenvalues: np.ndarray, top: int) -> None:
    ties = [i for i in linalg.near_ties(eigenvalues[:top]) if i + 1 < top]
    if ties:
        warnings.warn(
            f"stage eigenvalues {ties} are within {TIE_GAP} of their successor; "
            "stage variables are not uniquely defined",
            DegenerateSpectrumWarning,
            stacklevel=3,
        )


def population_gcca(cov_f: np.ndarray, block_sizes: Sequence[int]) -> GccaModel:
    """GCCA eigensystem of an exact stacked covariance.

    Raises:
        ShapeError: dimension differs from sum(block_sizes).
        NumericsError: asymmetric, non-identity diagonal blocks, or not PSD.
    """
    cov_f = np.asarray(cov_f, dtype=np.float64)
    sizes = tuple(int(r) for r in block_sizes)
    total = sum(sizes)
    if cov_f.ndim != 2 or cov_f.shape != (total, total):
        raise ShapeError(f"cov(f) has shape {cov_f.shape}, blocks sum to {total}", block_sizes=list(sizes))
    if not np.allclose(cov_f, cov_f.T, rtol=0.0, atol=1e-10):
        raise NumericsError("cov(f) is not symmetric")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for k, r in enumerate(sizes):
        block = cov_f[offsets[k] : offsets[k + 1], offsets[k] : offsets[k + 1]]
        if not np.allclose(block, np.eye(r), rtol=0.0, atol=1e-8):
            raise NumericsError(f"diagonal block {k} of cov(f) is not the identity")

    values = linalg.eigh_desc(cov_f)[0]
    top = float(values[0]) if values.size else 0.0
    if values.size and values[-1] < -1e-8 * top:
        raise NumericsError(f"cov(f) is not PSD: smallest eigenvalue {values[-1]:.3g}")
    model = covariance_gcca(cov_f, sizes)
    model = replace(model, L=stopping_index(model.eigenvalues, POPULATION_STOPPING_TOLERANCE * max(top, 1.0)))
    _check_ties(model.eigenvalues, model.L)
    return model


def covariance_gcca(cov_f: np.ndarray, block_sizes: Sequence[int]) -> GccaModel:
    """Eigensystem of a stacked covariance without score vectors or validation.

    Stage cosines are then computed from the covariance itself, which is how
    bootstrap resamples are evaluated.
    """
    sym = (cov_f + cov_f.T) / 2.0
    values, vectors = linalg.eigh_desc(sym)
    values = np.maximum(values, 0.0)
    return GccaModel(
        eigenvalues=values,
        eigenvectors=vectors,
        block_sizes=tuple(int(r) for r in block_sizes),
        cov_f=sym,
        L=stopping_index(values),
        r_f_hat=linalg.numerical_rank(values, sym.shape[0]),
    )


def sample_gcca(signals: Sequence[SignalEstimate]) -> GccaModel:
    """GCCA on the stacked factor scores of recovered signals."""
    if not signals:
        raise ArityError("no signals supplied")
    widths = {s.n for s in signals}
    if len(widths) != 1:
        raise ShapeError(f"signals disagree on sample count: {sorted(widths)}")
    n = widths.pop()
    blocks = tuple(np.asarray(s.factor_scores, dtype=np.float64) for s in signals)
    sizes = tuple(block.shape[0] for block in blocks)
    stacked = np.vstack(blocks) if sum(sizes) else np.zeros((0, n))
    total = stacked.shape[0]

    cov_f = stacked @ stacked.T / n
    values, vectors = linalg.eigh_desc(cov_f) if total else (np.zeros(0), np.zeros((0, 0)))
    values = np.maximum(values, 0.0)
    cutoff = linalg.rank_cutoff(float(values[0]) if total else 0.0, total)
    r_f_hat = int(np.count_nonzero(values > cutoff))

    w_scores = np.zeros((total, n))
    for l in range(r_f_hat):
        w_scores[l] = vectors[:, l] @ stacked / np.sqrt(values[l])
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    z_scores = np.zeros((len(blocks), total, n))
    for l in range(total):
        for k, block in enumerate(blocks):
            z_scores[k, l] = _unit(vectors[offsets[k] : offsets[k + 1], l], total) @ block

    model = GccaModel(
        eigenvalues=values,
        eigenvectors=vectors,
        block_sizes=sizes,
        cov_f=cov_f,
        L=stopping_index(values),
        r_f_hat=r_f_hat,
        w_scores=w_scores,
        z_scores=z_scores,
        factor_blocks=blocks,
    )
    _check_ties(values, model.L)
    logger.debug("sample GCCA: top eigenvalues %s, L=%d, rank=%d", np.round(values[:5], 4), model.L, r_f_hat)
    return model
