"""Hypothesis tests and resampling used by parameter selection and evaluation."""

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy import stats as sps

from dgcca import rng
from dgcca.errors import DegenerateInput

logger = logging.getLogger(__name__)

MIN_TEST_SAMPLES = 8
DEGENERATE_SCALE = 1e-12


class Tail(str, Enum):
    """Alternative hypothesis of a one- or two-sided test."""

    LEFT = "left"
    RIGHT = "right"
    TWO = "two"


@dataclass(frozen=True)
class TestReport:
    """Outcome of a zero-correlation test."""

    __test__ = False

    statistic: float
    p_value: float
    tail: Tail
    n: int
    correlation: float

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict[str, Any]:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "tail": self.tail.value,
            "n": self.n,
            "correlation": self.correlation,
        }


def _is_degenerate(centered: np.ndarray, raw: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(raw))))
    return float(np.sqrt(np.mean(centered**2))) <= DEGENERATE_SCALE * scale


def test_zero_corr(x: np.ndarray, y: np.ndarray, tail: Tail | str = Tail.TWO) -> TestReport:
    """Studentized test of corr(x, y) = 0 against the standard normal.

    T = sqrt(n) * rho / tau with tau^2 = mean(xc^2 yc^2) / (s_x^2 s_y^2), all
    moments using divisor n. Valid without normality.

    Raises:
        DegenerateInput: fewer than 8 samples or a (numerically) constant input.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    tail = Tail(tail)
    n = x.size
    if n != y.size:
        raise DegenerateInput(f"vectors have lengths {n} and {y.size}")
    if n < MIN_TEST_SAMPLES:
        raise DegenerateInput(f"need at least {MIN_TEST_SAMPLES} samples, got {n}")
    xc = x - x.mean()
    yc = y - y.mean()
    if _is_degenerate(xc, x) or _is_degenerate(yc, y):
        raise DegenerateInput("zero-variance input to correlation test")

    var_x = np.mean(xc**2)
    var_y = np.mean(yc**2)
    rho = float(np.mean(xc * yc) / np.sqrt(var_x * var_y))
    tau2 = float(np.mean(xc**2 * yc**2) / (var_x * var_y))
    statistic = float(np.sqrt(n) * rho / np.sqrt(tau2)) if tau2 > 0 else 0.0

    if tail is Tail.RIGHT:
        p_value = float(sps.norm.sf(statistic))
    elif tail is Tail.LEFT:
        p_value = float(sps.norm.cdf(statistic))
    else:
        p_value = float(min(1.0, 2.0 * sps.norm.sf(abs(statistic))))
    return TestReport(statistic, p_value, tail, n, rho)


test_zero_corr.__test__ = False  # type: ignore[attr-defined]


def benjamini_hochberg(p_values: np.ndarray, level: float) -> np.ndarray:
    """Discoveries of the Benjamini-Hochberg step-up procedure at the given FDR level."""
    p_values = np.asarray(p_values, dtype=np.float64)
    if p_values.size == 0:
        return np.zeros(0, dtype=bool)
    adjusted = sps.false_discovery_control(p_values, method="bh")
    return adjusted <= level


def bootstrap_replicates(
    statistic: Callable[[np.ndarray], float],
    n: int,
    resamples: int,
    seed: int,
    path: tuple[int, ...],
    threads: int = 1,
) -> np.ndarray:
    """Statistic on B index resamples; resample b draws from the substream (seed, *path, b).

    Results do not depend on the thread count.
    """

    def replicate(b: int) -> float:
        indices = rng.generator(seed, *path, b).integers(0, n, size=n)
        return float(statistic(indices))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(replicate, range(resamples)))
    else:
        values = [replicate(b) for b in range(resamples)]
    return np.array(values)


def jackknife_values(statistic: Callable[[np.ndarray], float], n: int) -> np.ndarray:
    """Leave-one-out statistic values."""
    everything = np.arange(n)
    return np.array([statistic(np.delete(everything, i)) for i in range(n)])


def bca_acceleration(jackknife: np.ndarray) -> float | None:
    """Jackknife acceleration; None when the jackknife variance is zero."""
    u = jackknife.mean() - jackknife
    denominator = 6.0 * np.sum(u**2) ** 1.5
    if denominator == 0:
        return None
    return float(np.sum(u**3) / denominator)


def bca_interval(
    theta_hat: float,
    replicates: np.ndarray,
    jackknife: np.ndarray,
    alpha: float = 0.05,
) -> tuple[float, float]:
    """Bias-corrected and accelerated bootstrap interval at coverage 1 - alpha.

    Falls back to the percentile interval when the acceleration is undefined.
    """
    replicates = np.asarray(replicates, dtype=np.float64)
    quantiles = np.array([alpha / 2.0, 1.0 - alpha / 2.0])
    acceleration = bca_acceleration(np.asarray(jackknife, dtype=np.float64))
    if acceleration is not None:
        b = replicates.size
        share = np.clip(np.mean(replicates < theta_hat), 0.5 / b, 1.0 - 0.5 / b)
        z0 = sps.norm.ppf(share)
        z = sps.norm.ppf(quantiles)
        quantiles = sps.norm.cdf(z0 + (z0 + z) / (1.0 - acceleration * (z0 + z)))
    else:
        logger.debug("zero jackknife variance; using percentile interval")
    low, high = np.quantile(replicates, quantiles)
    return float(low), float(high)
