"""Gradient-based MCMC baselines: ULA, MALA and HMC.

Step functions are pure given (x, model, eps, rng) and vectorized over a
batch of chains (x of shape (n, d) or (d,)). Energy values and gradients at
the current state are threaded through ``cache`` tuples so that ULA and MALA
cost one gradient evaluation per step and HMC costs k per transition.

``energy_scale`` multiplies the target energy, E -> scale * E; the
convention scale = 2/eps^2 makes the Langevin drift term equal the bare
negative gradient, matching the implicit scaling used when sampling trained
neural energies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyModel


@dataclass(frozen=True)
class BaselineConfig:
    kind: str  # "ula" | "mala" | "hmc"
    eps: float
    k_leapfrog: int = 5
    energy_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ula", "mala", "hmc"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.k_leapfrog < 1:
            raise ValueError("k_leapfrog must be >= 1")
        if not self.energy_scale > 0:
            raise ValueError("energy_scale must be positive")


def ula_step(
    x: np.ndarray,
    model: EnergyModel,
    eps: float,
    rng: np.random.Generator,
    energy_scale: float = 1.0,
) -> np.ndarray:
    """Unadjusted Langevin step x' = x - (eps^2/2) scale g(x) + eps xi."""
    x = np.asarray(x, dtype=float)
    g = model.grad(x)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient in Langevin step")
    return x - 0.5 * eps * eps * energy_scale * g + eps * rng.standard_normal(x.shape)


def _langevin_log_q(to: np.ndarray, frm: np.ndarray, g_frm: np.ndarray, eps: float, scale: float) -> np.ndarray:
    """Log density (up to constants) of the Langevin proposal frm -> to."""
    mean = frm - 0.5 * eps * eps * scale * g_frm
    return -np.sum((to - mean) ** 2, axis=-1) / (2 * eps * eps)


def mala_step(
    x: np.ndarray,
    model: EnergyModel,
    eps: float,
    rng: np.random.Generator,
    energy_scale: float = 1.0,
    cache: tuple[np.ndarray, np.ndarray] | None = None,
):
    """Langevin proposal with Metropolis-Hastings correction.

    Returns (x_new, accepted, cache_new) where cache holds (E(x), g(x)) for
    the returned state. Chains with a non-finite acceptance logit reject.
    """
    x = np.asarray(x, dtype=float)
    if cache is None:
        cache = (model.energy(x), model.grad(x))
    e_x, g_x = cache
    prop = x - 0.5 * eps * eps * energy_scale * g_x + eps * rng.standard_normal(x.shape)
    e_p = model.energy(prop)
    g_p = model.grad(prop)
    with np.errstate(invalid="ignore"):
        logit = (
            energy_scale * (e_x - e_p)
            + _langevin_log_q(x, prop, g_p, eps, energy_scale)
            - _langevin_log_q(prop, x, g_x, eps, energy_scale)
        )
    accept = np.log(rng.uniform(size=np.shape(logit))) < np.where(np.isfinite(logit), logit, -np.inf)
    accept_arr = np.asarray(accept)
    x_new = np.where(accept_arr[..., None], prop, x)
    cache_new = (np.where(accept_arr, e_p, e_x), np.where(accept_arr[..., None], g_p, g_x))
    return x_new, accept, cache_new


def hmc_transition(
    x: np.ndarray,
    model: EnergyModel,
    eps: float,
    k: int,
    rng: np.random.Generator,
    energy_scale: float = 1.0,
    cache: tuple[np.ndarray, np.ndarray] | None = None,
):
    """One Hamiltonian Monte Carlo transition with k Newtonian leapfrog steps.

    Fresh momentum v ~ N(0, I), leapfrog under H = scale E(x) + |v|^2/2,
    accept with min(1, e^{H_old - H_new}). Non-finite trajectories reject.
    Returns (x_new, accepted, cache_new); costs exactly k gradient
    evaluations given a warm cache.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(x, dtype=float)
    if cache is None:
        cache = (model.energy(x), model.grad(x))
    e_x, g_x = cache
    v = rng.standard_normal(x.shape)
    h_old = energy_scale * e_x + 0.5 * np.sum(v * v, axis=-1)
    y, g_y = x, g_x
    with np.errstate(invalid="ignore", over="ignore"):
        for _ in range(k):
            v = v - 0.5 * eps * energy_scale * g_y
            y = y + eps * v
            g_y = model.grad(y)
            v = v - 0.5 * eps * energy_scale * g_y
        e_y = model.energy(y)
        h_new = energy_scale * e_y + 0.5 * np.sum(v * v, axis=-1)
        logit = h_old - h_new
    finite = np.isfinite(logit) & np.all(np.isfinite(y), axis=-1)
    accept = np.log(rng.uniform(size=np.shape(logit))) < np.where(finite, logit, -np.inf)
    accept_arr = np.asarray(accept)
    x_new = np.where(accept_arr[..., None], y, x)
    cache_new = (np.where(accept_arr, e_y, e_x), np.where(accept_arr[..., None], g_y, g_x))
    return x_new, accept, cache_new
