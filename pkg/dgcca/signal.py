"""Per-view signal recovery: soft-thresholded SVD, ED rank selection, factor scores.

Each view Y_k (p_k x n, row-centered) is denoised to a low-rank X_k whose
singular values are shrunk by the estimated noise level. The right singular
directions, rescaled to unit sample variance, are the view's factor scores.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from dgcca import linalg
from dgcca.dataset import Matrix, MultiViewDataset
from dgcca.errors import ArityError, RankError

logger = logging.getLogger(__name__)

ED_MAX_ITERATIONS = 10
ED_WINDOW = 5


@dataclass(frozen=True, eq=False)
class SignalEstimate:
    """Denoised view with its singular system.

    Attributes:
        x_hat: Denoised signal matrix (p x n).
        rank: Number of retained components r.
        left_vectors: p x r orthonormal loadings.
        eigenvalues: r nonincreasing signal variances (shrunk singular value squared over n).
        factor_scores: r x n scores with F F^T / n = I on the positive eigenvalues.
        tau: Estimated noise level (0 for unshrunk estimates).
        right_vectors: r x n orthonormal right singular directions.
    """

    x_hat: Matrix
    rank: int
    left_vectors: np.ndarray
    eigenvalues: np.ndarray
    factor_scores: np.ndarray
    tau: float
    right_vectors: np.ndarray

    @property
    def n(self) -> int:
        return self.x_hat.n

    @property
    def p(self) -> int:
        return self.x_hat.p

    @classmethod
    def empty(cls, like: Matrix) -> "SignalEstimate":
        """Rank-0 estimate: zero signal, no factors."""
        p, n = like.shape
        return cls(
            x_hat=like.with_values(np.zeros((p, n))),
            rank=0,
            left_vectors=np.zeros((p, 0)),
            eigenvalues=np.zeros(0),
            factor_scores=np.zeros((0, n)),
            tau=0.0,
            right_vectors=np.zeros((0, n)),
        )


def _build(like: Matrix, u: np.ndarray, sigma: np.ndarray, vt: np.ndarray, tau: float) -> SignalEstimate:
    p, n = like.shape
    rank = sigma.size
    eigenvalues = sigma**2 / n
    x_hat = (u * sigma) @ vt
    # (Lambda^{1/2})^+ V^T X_hat reduces to sqrt(n) times the right directions on positive eigenvalues.
    positive = eigenvalues > linalg.rank_cutoff(float(eigenvalues[0]) if rank else 0.0, max(p, n))
    factor_scores = np.where(positive[:, None], np.sqrt(n) * vt, 0.0)
    return SignalEstimate(
        x_hat=like.with_values(x_hat),
        rank=rank,
        left_vectors=u,
        eigenvalues=eigenvalues,
        factor_scores=factor_scores,
        tau=tau,
        right_vectors=vt,
    )


def soft_threshold_svd(y: Matrix, r: int) -> SignalEstimate:
    """Soft-thresholded rank-r SVD estimate of the signal in y.

    Singular values are shrunk to sqrt(max(sigma^2 - tau * p, 0)) with
    tau = sum_{l > r} sigma_l^2 / (np - nr - pr).

    Raises:
        RankError: r outside [1, min(p, n)) or a non-positive tau denominator.
    """
    p, n = y.shape
    if not 1 <= r < min(p, n):
        raise RankError(f"rank {r} outside [1, {min(p, n)})", rank=r, p=p, n=n)
    denominator = n * p - n * r - p * r
    if denominator <= 0:
        raise RankError(
            f"noise-level denominator np - nr - pr = {denominator} is not positive",
            rank=r, p=p, n=n,
        )
    u, s, vt = linalg.svd(y.values)
    tau = float(np.sum(s[r:] ** 2) / denominator)
    shrunk = np.sqrt(np.maximum(s[:r] ** 2 - tau * p, 0.0))
    logger.debug("soft threshold %dx%d rank %d: tau=%.6g", p, n, r, tau)
    return _build(y, u[:, :r], shrunk, vt[:r], tau)


def signal_from_matrix(m: Matrix, rank: int | None = None) -> SignalEstimate:
    """Singular system of an already denoised matrix, without shrinkage.

    The rank defaults to the numerical rank of m.
    """
    p, n = m.shape
    u, s, vt = linalg.svd(m.values)
    numeric = linalg.numerical_rank(s**2 / n, max(p, n))
    rank = numeric if rank is None else rank
    if not 0 <= rank <= min(p, n):
        raise RankError(f"rank {rank} outside [0, {min(p, n)}]", rank=rank, p=p, n=n)
    if rank == 0:
        return SignalEstimate.empty(m)
    estimate = _build(m, u[:, :rank], s[:rank], vt[:rank], 0.0)
    if rank >= numeric:
        # Nothing is discarded, so the matrix is its own estimate.
        estimate = replace(estimate, x_hat=m)
    return estimate


def default_k_max(p: int, n: int) -> int:
    return min(20, min(p, n) // 4)


def select_rank_ed(y: Matrix, k_max: int | None = None) -> int:
    """Onatski's edge-distribution estimate of the number of spikes.

    Works on the eigenvalues of Y Y^T / n. The threshold delta is twice the
    absolute OLS slope of five consecutive eigenvalues against
    (j-1)^{2/3}, ..., (j+3)^{2/3}; the estimate is the largest l <= k_max whose
    eigen-gap reaches delta. Iterates with j = r + 1 until the estimate is stable.

    Raises:
        RankError: k_max + 5 exceeds min(p, n).
    """
    p, n = y.shape
    k_max = default_k_max(p, n) if k_max is None else k_max
    if k_max < 0 or k_max + ED_WINDOW > min(p, n):
        raise RankError(f"k_max={k_max} needs k_max + {ED_WINDOW} <= min(p, n) = {min(p, n)}", k_max=k_max)

    s = linalg.svd(y.values)[1]
    eigenvalues = s**2 / n
    gaps = eigenvalues[:k_max] - eigenvalues[1 : k_max + 1]

    j = k_max + 1
    estimate: int | None = None
    for _ in range(ED_MAX_ITERATIONS):
        window = np.arange(j - 1, j - 1 + ED_WINDOW)
        slope = stats.linregress(window.astype(float) ** (2.0 / 3.0), eigenvalues[window]).slope
        delta = 2.0 * abs(slope)
        above = np.flatnonzero(gaps >= delta)
        current = int(above[-1]) + 1 if above.size else 0
        if current == estimate:
            break
        estimate = current
        j = estimate + 1
    logger.debug("ED rank for %dx%d view: %d (k_max=%d)", p, n, estimate, k_max)
    return int(estimate or 0)


def recover_all(
    ds: MultiViewDataset,
    ranks: list[int] | None = None,
    k_max: int | None = None,
    threads: int = 1,
) -> list[SignalEstimate]:
    """Denoise every view, using supplied ranks verbatim or ED-selected ones.

    A rank of 0 yields an empty estimate for that view.
    """
    if ranks is not None and len(ranks) != ds.k:
        raise ArityError(f"{len(ranks)} ranks for {ds.k} views", ranks=list(ranks))

    def recover(k: int) -> SignalEstimate:
        view = ds.views[k]
        rank = ranks[k] if ranks is not None else select_rank_ed(view, k_max)
        if rank == 0:
            return SignalEstimate.empty(view)
        return soft_threshold_svd(view, rank)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            estimates = list(pool.map(recover, range(ds.k)))
    else:
        estimates = [recover(k) for k in range(ds.k)]
    logger.info("recovered signals with ranks %s", [e.rank for e in estimates])
    return estimates
