"""Sample-quality metrics: unbiased squared MMD and effective sample size.

Both are pure functions of their inputs with deterministic reduction order,
so repeated runs produce identical values bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class MmdConfig:
    """Gaussian kernel k(x,y) = exp(-|x-y|^2 / (2 h^2)).

    bandwidth is an explicit h > 0 or the string "median" for the median
    heuristic over the pooled sample.
    """

    bandwidth: float | str = "median"

    def __post_init__(self):
        if self.bandwidth != "median" and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive or 'median'")


def median_bandwidth(xs: np.ndarray, ys: np.ndarray) -> float:
    """Median of pairwise Euclidean distances over the pooled set.

    Only distinct index pairs enter (self-distances are excluded); identical
    points at different indices contribute their zero distance. All points
    coinciding is a degenerate bandwidth and raises.
    """
    pooled = np.concatenate([np.atleast_2d(xs), np.atleast_2d(ys)], axis=0)
    if pooled.shape[0] < 2:
        raise ValueError("need at least 2 pooled points")
    dist = cdist(pooled, pooled)
    iu = np.triu_indices(pooled.shape[0], k=1)
    h = float(np.median(dist[iu]))
    if h <= 0:
        raise ValueError("all points identical: median bandwidth degenerate")
    return h


def mmd2_unbiased(xs: np.ndarray, ys: np.ndarray, cfg: MmdConfig = MmdConfig()) -> float:
    """Unbiased estimator of the squared maximum mean discrepancy.

    sum_{i!=j} k(x_i,x_j)/(m(m-1)) + sum_{i!=j} k(y_i,y_j)/(n(n-1))
    - 2 sum_{ij} k(x_i,y_j)/(mn). Requires m, n >= 2.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    m, n = xs.shape[0], ys.shape[0]
    if m < 2 or n < 2:
        raise ValueError("unbiased MMD^2 needs at least 2 points per set")
    h = median_bandwidth(xs, ys) if cfg.bandwidth == "median" else float(cfg.bandwidth)
    gamma = 1.0 / (2 * h * h)
    kxx = np.exp(-gamma * cdist(xs, xs, "sqeuclidean"))
    kyy = np.exp(-gamma * cdist(ys, ys, "sqeuclidean"))
    kxy = np.exp(-gamma * cdist(xs, ys, "sqeuclidean"))
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


@dataclass
class EssResult:
    """Effective sample size per retained sample, aggregated over chains."""

    ess_per_sample: float
    per_chain: np.ndarray
    std: float


def _autocorrelations(rows: np.ndarray, mean: np.ndarray, var: np.ndarray) -> np.ndarray:
    """Autocorrelation sequences via batched FFT, biased 1/N normalization.

    rows: (k, N); mean/var: (k,). Returns (k, N).
    """
    xc = rows - mean[:, None]
    n = rows.shape[1]
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :n] / n
    return acov / var[:, None]


def _geyer_tau(rho: np.ndarray) -> np.ndarray:
    """Integrated autocorrelation times with initial-positive-sequence truncation.

    For each row, sums adjacent-lag pairs Gamma_m = rho_{2m} + rho_{2m+1}
    while positive; tau = 2 sum Gamma_m - rho_0. rho: (k, N) -> (k,).
    """
    n = rho.shape[1]
    n_pairs = n // 2
    gamma = rho[:, 0 : 2 * n_pairs : 2] + rho[:, 1 : 2 * n_pairs : 2]
    nonpos = gamma <= 0
    has_cut = np.any(nonpos, axis=1)
    cutoff = np.where(has_cut, np.argmax(nonpos, axis=1), n_pairs)
    included = np.arange(n_pairs) < cutoff[:, None]
    return 2.0 * np.sum(gamma * included, axis=1) - rho[:, 0]


def ess(
    chains: np.ndarray,
    mean: np.ndarray | float | None = None,
    var: np.ndarray | float | None = None,
) -> EssResult:
    """ESS/N for a set of chains, per coordinate, min-aggregated.

    ``chains`` is (n_chains, N) for scalar chains or (n_chains, N, d).
    Per chain and coordinate, ESS/N = 1/(1 + 2 sum_s rho_s) with the
    autocorrelation sum truncated by the initial-positive-sequence rule and
    the result clipped to (0, 1]. A chain's value is the minimum over its
    coordinates; the aggregate is the mean and std over chains.

    By default autocorrelations use each chain's empirical mean and variance.
    Passing the target's true ``mean``/``var`` (scalars or per-coordinate
    arrays) instead measures decorrelation with respect to the target, which
    penalizes chains stuck far from equilibrium; a zero-variance chain is
    only an error in the empirical case.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[..., None]
    if chains.ndim != 3:
        raise ValueError("chains must be (n_chains, N) or (n_chains, N, d)")
    n_chains, n, d = chains.shape
    if n < 10:
        raise ValueError("chains must have length >= 10")
    rows = np.swapaxes(chains, 1, 2).reshape(n_chains * d, n)
    if mean is not None and var is not None:
        mu = np.tile(np.broadcast_to(np.asarray(mean, dtype=float), (d,)), n_chains)
        sig2 = np.tile(np.broadcast_to(np.asarray(var, dtype=float), (d,)), n_chains)
    else:
        mu = np.mean(rows, axis=1)
        sig2 = np.mean((rows - mu[:, None]) ** 2, axis=1)
        if np.any(sig2 == 0):
            bad = int(np.nonzero(sig2 == 0)[0][0])
            raise ValueError(f"zero-variance chain {bad // d} coordinate {bad % d}")
    tau = _geyer_tau(_autocorrelations(rows, mu, sig2))
    vals = np.where(tau <= 0, 1.0, np.minimum(1.0, 1.0 / np.where(tau > 0, tau, 1.0)))
    per_chain = vals.reshape(n_chains, d).min(axis=1)
    return EssResult(
        ess_per_sample=float(np.mean(per_chain)),
        per_chain=per_chain,
        std=float(np.std(per_chain)),
    )
