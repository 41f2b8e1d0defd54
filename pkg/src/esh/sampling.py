"""Turning trajectories into samples.

Three routes to samples from e^{-E}/Z:

* ``ergodic_sample`` draws uniformly in original time over a stored
  trajectory and linearly interpolates the position.
* ``Reservoir`` keeps one speed-weighted sample per chain online, so long
  runs need no trajectory storage.
* ``jarzynski_log_weights`` reweights a batch of chains started from a
  tractable base energy, giving unbiased expectations and a partition
  function estimate without any ergodicity assumption.

All weight accumulation happens in log space; speeds along a trajectory can
span hundreds of nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyModel
from .integrators import Trajectory, integrate


@dataclass
class WeightedSample:
    """A position with its raw log importance weight and source grid index."""

    x: np.ndarray
    log_weight: float
    source_step: int


def ergodic_sample(traj: Trajectory, n: int, rng_seed: int | np.random.Generator = 0) -> np.ndarray:
    """n positions drawn uniformly in original time from one trajectory.

    Each draw picks t* ~ U[0, T], locates the bracketing grid interval on
    the unscaled time axis, and linearly interpolates x. Requires a
    single-chain trajectory of length >= 2.
    """
    if len(traj) < 2:
        raise ValueError("trajectory must contain at least 2 states")
    if traj.t_unscaled.ndim != 1:
        raise ValueError("ergodic_sample expects a single-chain trajectory")
    rng = rng_seed if hasattr(rng_seed, "uniform") else np.random.default_rng(rng_seed)
    t = traj.t_unscaled
    ts = rng.uniform(0.0, t[-1], size=n)
    idx = np.clip(np.searchsorted(t, ts, side="right") - 1, 0, len(t) - 2)
    width = t[idx + 1] - t[idx]
    frac = (ts - t[idx]) / np.where(width > 0, width, 1.0)
    return traj.xs[idx] + frac[:, None] * (traj.xs[idx + 1] - traj.xs[idx])


class Reservoir:
    """Online speed-weighted sample of a stream of states.

    After updates with log-weights r_1..r_k, the held sample equals the i-th
    input with probability e^{r_i} / sum_j e^{r_j} exactly. Accepts batched
    streams: x (n, d) with r (n,) runs n independent reservoirs.
    """

    def __init__(self, rng: int | np.random.Generator = 0):
        self.rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.current: np.ndarray | None = None
        self.log_cum_weight: np.ndarray | float = -np.inf

    def update(self, x: np.ndarray, r: np.ndarray | float) -> "Reservoir":
        """Accept x with probability e^r / (e^r + cumulative weight)."""
        x = np.asarray(x, dtype=float)
        r = np.asarray(r, dtype=float)
        if not np.all(np.isfinite(r)):
            raise ValueError("log-weight must be finite")
        new_cum = np.logaddexp(self.log_cum_weight, r)
        p_accept = np.exp(r - new_cum)
        if self.current is None:
            self.current = x.copy()
        else:
            take = self.rng.uniform(size=r.shape) < p_accept
            self.current = np.where(np.asarray(take)[..., None], x, self.current)
        self.log_cum_weight = new_cum
        return self


def jarzynski_log_weights(
    x0: np.ndarray,
    r_t: np.ndarray,
    model: EnergyModel,
    base: EnergyModel | None = None,
) -> np.ndarray:
    """Raw log importance weights for chains started from the base energy.

    For chains with x(0) ~ e^{-E0} and unit initial speed, the weight at any
    later time is w = E0(x(0)) - E(x(0)) + r(t), since the log-speed gain
    r(t) equals log|v(t)| - log|v(0)|. ``base=None`` treats E0 as a constant
    (the buffer-initialization convention), dropping the E0 term.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != model.dim:
        raise ValueError(f"points have dim {x0.shape[-1]}, model expects {model.dim}")
    e0 = base.energy(x0) if base is not None else 0.0
    if base is not None and base.dim != model.dim:
        raise ValueError("base and target dimensions differ")
    return e0 - model.energy(x0) + np.asarray(r_t, dtype=float)


def jarzynski_weights(
    traj: Trajectory,
    model: EnergyModel,
    base: EnergyModel | None = None,
    step: int = -1,
) -> list[WeightedSample]:
    """Weighted samples at one grid index of a batched trajectory."""
    step = range(len(traj))[step]
    w = jarzynski_log_weights(traj.xs[0], traj.rs[step], model, base)
    xs = np.atleast_2d(traj.xs[step])
    return [WeightedSample(x=xs[j], log_weight=float(wj), source_step=step) for j, wj in enumerate(np.atleast_1d(w))]


def self_normalized(log_weights: np.ndarray) -> np.ndarray:
    """Softmax of raw log weights; with h = 1 the weighted sum is exactly 1."""
    w = np.asarray(log_weights, dtype=float)
    m = np.max(w)
    p = np.exp(w - m)
    return p / p.sum()


def estimate_log_partition(log_weights: np.ndarray, log_z0: float) -> float:
    """log Z estimate log_z0 + log mean e^w, from E[e^w] = Z/Z0."""
    w = np.asarray(log_weights, dtype=float)
    if w.size == 0:
        raise ValueError("need at least one weight")
    m = np.max(w)
    if not np.isfinite(m):
        raise ValueError("all weights are -inf")
    return float(log_z0 + m + np.log(np.mean(np.exp(w - m))))


def weight_ess(log_weights: np.ndarray) -> float:
    """Effective sample size of normalized weights, (sum w)^2 / sum w^2."""
    p = self_normalized(log_weights)
    return float(1.0 / np.sum(p * p))


def stationarity_probe(
    model: EnergyModel,
    truth_sampler,
    n_chains: int,
    n_steps: int,
    eps: float,
    rng_seed: int = 0,
) -> tuple[float, float]:
    """MMD^2 to fresh truth before and after evolving exact target samples.

    Chains start at exact target draws with sphere-uniform directions; if
    the dynamics leave the target invariant both values stay at the
    two-sample noise floor. Returns (before, after).
    """
    from .metrics import mmd2_unbiased

    ss = np.random.SeedSequence(rng_seed).spawn(3)
    x0 = truth_sampler(n_chains, np.random.default_rng(ss[0]))
    fresh = truth_sampler(n_chains, np.random.default_rng(ss[1]))
    before = mmd2_unbiased(x0, fresh)
    if n_steps == 0:
        return before, before
    traj = integrate(x0, model, eps, n_steps, np.random.default_rng(ss[2]))
    after = mmd2_unbiased(traj.xs[-1], fresh)
    return before, after
