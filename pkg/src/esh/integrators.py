"""Leapfrog integrators for energy-sampling Hamiltonian dynamics.

The dynamics use the logarithmic kinetic energy K(v) = (d/2) log(v^2/d), so
that time spent in a region is proportional to the Boltzmann weight e^{-E(x)}.
(The log form is one end of a family that interpolates to the Newtonian
kinetic energy; only the log end yields energy sampling and only that end is
implemented here.) Two discretizations are provided:

* ``original_leapfrog_step`` works in (x, v) phase space, where the position
  update carries the velocity-dependent scale d/|v|^2.
* ``scaled_leapfrog_step`` works in time-rescaled coordinates (x, u, r) with
  unit direction u = v/|v| and log-speed r = log|v|, where the direction and
  log-speed updates have closed hyperbolic forms and every position step has
  unit speed. ``time_rescale`` maps the uniform scaled-time grid back to the
  original time axis for ergodic averaging.

Shapes follow the (..., dim) convention: states may hold a single chain
(dim,) or a batch (n_chains, dim). All step functions are pure given
(state, model, eps); the only side effect is the model's gradient counter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .energy import EnergyModel

# Dot products within this distance of -1 take the antiparallel branch.
ANTIPARALLEL_TOL = 1e-12

# Step sizes above this are accepted but have not been validated for stability.
MAX_VALIDATED_EPS = 0.5


class DivergenceError(RuntimeError):
    """Raised when a step produces a non-finite energy or gradient."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class SingularityError(RuntimeError):
    """Raised when the original-coordinate dynamics hit |v|^2 ~ 0."""


@dataclass
class ScaledState:
    """State of the time-rescaled dynamics.

    x: position (..., d); u: unit direction (..., d); r: log-speed (...,),
    zero at init so v = u e^r; tbar: scaled time; grad_cache: gradient at x,
    reused so each step costs one new gradient evaluation.
    """

    x: np.ndarray
    u: np.ndarray
    r: np.ndarray
    tbar: float
    grad_cache: np.ndarray | None = None


@dataclass
class PhaseState:
    """State in original (x, v) coordinates."""

    x: np.ndarray
    v: np.ndarray
    grad_cache: np.ndarray | None = None


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=-1, keepdims=True))


def u_update(u: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    """Exact direction update for the frozen-gradient flow over time eps.

    Solves du/dtbar = -(I - u u^T) g / d with g held fixed, turning u toward
    the descent direction e = -g/|g|. Computed with only decaying
    exponentials so large |g| eps saturates to e instead of overflowing.
    Zero gradient leaves u unchanged; u exactly antiparallel to e is a fixed
    point and returns -e.
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient in direction update")
    d = u.shape[-1]
    gnorm = _norm(g)
    zero_g = gnorm[..., 0] == 0.0
    safe_gnorm = np.where(gnorm > 0, gnorm, 1.0)
    e = -g / safe_gnorm
    ue = np.sum(u * e, axis=-1, keepdims=True)
    z = eps * gnorm / d
    decay = np.exp(-z)
    decay2 = decay * decay
    num = 2.0 * decay * (u - ue * e) + e * ((1.0 - decay2) + ue * (1.0 + decay2))
    den = (1.0 + decay2) + ue * (1.0 - decay2)
    anti = ue[..., 0] <= -1.0 + ANTIPARALLEL_TOL
    assert np.all((den[..., 0] > 0.0) | anti | zero_g), "safe-form denominator vanished"
    out = num / np.where(den > 0, den, 1.0)
    norm = _norm(out)
    out = out / np.where(norm > 0, norm, 1.0)
    if np.any(anti):
        out = np.where(anti[..., None], -e, out)
    if np.any(zero_g):
        out = np.where(zero_g[..., None], u, out)
    return out


def r_update(u: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    """Log-speed increment of the frozen-gradient flow over time eps.

    Returns log(cosh(eps|g|/d) + (u.e) sinh(eps|g|/d)) evaluated at the
    incoming u, in the shifted form eps|g|/d + log(((1+u.e) + e^{-2z}(1-u.e))/2)
    that never overflows. Zero gradient gives 0; the antiparallel fixed point
    gives -eps|g|/d.
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient in log-speed update")
    d = u.shape[-1]
    gnorm = _norm(g)[..., 0]
    zero_g = gnorm == 0.0
    safe_gnorm = np.where(gnorm > 0, gnorm, 1.0)
    e = -g / safe_gnorm[..., None]
    ue = np.sum(u * e, axis=-1)
    z = eps * gnorm / d
    anti = ue <= -1.0 + ANTIPARALLEL_TOL
    arg = (1.0 + ue) + np.exp(-2.0 * z) * (1.0 - ue)
    assert np.all((arg > 0.0) | anti), "log argument vanished outside the antiparallel case"
    a = z + np.log(np.where(arg > 0, arg, 1.0) / 2.0)
    a = np.where(anti, -z, a)
    return np.where(zero_g, 0.0, a)


def scaled_leapfrog_step(state: ScaledState, model: EnergyModel, eps: float) -> ScaledState:
    """One leapfrog step of the time-rescaled dynamics.

    Half-steps r and u on the cached gradient, full step x along u, then
    half-steps u and r on the one new gradient. Each half-step evaluates the
    closed-form flow at the direction it starts from.
    """
    g = state.grad_cache if state.grad_cache is not None else model.grad(state.x)
    dr1 = r_update(state.u, g, eps / 2)
    u_half = u_update(state.u, g, eps / 2)
    x_new = state.x + eps * u_half
    g_new = model.grad(x_new)
    if not np.all(np.isfinite(g_new)):
        raise DivergenceError(
            f"non-finite gradient after step to tbar={state.tbar + eps:g}",
            state=ScaledState(x_new, u_half, state.r + dr1, state.tbar + eps),
        )
    dr2 = r_update(u_half, g_new, eps / 2)
    u_new = u_update(u_half, g_new, eps / 2)
    return ScaledState(x_new, u_new, state.r + dr1 + dr2, state.tbar + eps, g_new)


def original_leapfrog_step(state: PhaseState, model: EnergyModel, eps: float) -> PhaseState:
    """One leapfrog step in original coordinates.

    v half-step, x full step scaled by d/|v|^2, v half-step on the new
    gradient. The exact dynamics keep |v|^2 = e^{2(c-E(x))/d} > 0, but the
    discrete update can underflow it, which raises.
    """
    g = state.grad_cache if state.grad_cache is not None else model.grad(state.x)
    v_half = state.v - (eps / 2) * g
    vsq = np.sum(v_half * v_half, axis=-1, keepdims=True)
    if np.any(vsq < 1e-30):
        raise SingularityError("velocity magnitude underflowed; dynamics too close to v=0")
    d = state.x.shape[-1]
    x_new = state.x + eps * (d / vsq) * v_half
    g_new = model.grad(x_new)
    if not np.all(np.isfinite(g_new)):
        raise DivergenceError("non-finite gradient in original-coordinate step")
    v_new = v_half - (eps / 2) * g_new
    return PhaseState(x_new, v_new, g_new)


def time_rescale(r_values: np.ndarray, eps: float, dim: int) -> np.ndarray:
    """Cumulative original-time grid t(tbar) = int e^{r}/d dtbar by trapezoid.

    ``r_values`` has shape (N+1, ...) on the uniform scaled-time grid. The
    integrand is exponentiated under a running max shift so only the final
    rescale can overflow, which raises.
    """
    r_values = np.asarray(r_values, dtype=float)
    if not np.all(np.isfinite(r_values)):
        raise ValueError("log-speeds must be finite")
    shift = np.max(r_values, axis=0, keepdims=True)
    w = np.exp(r_values - shift)
    increments = 0.5 * (w[:-1] + w[1:]) * (eps / dim)
    t = np.zeros_like(r_values)
    np.cumsum(increments, axis=0, out=t[1:])
    t *= np.exp(shift)
    if not np.all(np.isfinite(t)):
        raise OverflowError("unscaled time overflowed; trajectory log-speeds too large")
    return t


@dataclass
class Trajectory:
    """Grid of scaled states with the matching original-time coordinates.

    Arrays are stacked along the leading grid axis: xs/us are (N+1, ..., d),
    rs is (N+1, ...). ``t_unscaled`` is computed on first access: absolute
    original times can overflow float64 when log-speeds span thousands of
    nats, and weighted sampling needs only the log-speeds.
    """

    xs: np.ndarray
    us: np.ndarray
    rs: np.ndarray
    tbars: np.ndarray
    eps: float
    _t_unscaled: np.ndarray | None = None

    def __len__(self) -> int:
        return self.xs.shape[0]

    @property
    def t_unscaled(self) -> np.ndarray:
        if self._t_unscaled is None:
            self._t_unscaled = time_rescale(self.rs, self.eps, self.xs.shape[-1])
        return self._t_unscaled

    @property
    def log_speed_weights(self) -> np.ndarray:
        return self.rs

    def state(self, i: int) -> ScaledState:
        return ScaledState(self.xs[i], self.us[i], self.rs[i], float(self.tbars[i]))


def random_unit(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Uniform draw on the unit sphere (normalized standard normal)."""
    u = rng.standard_normal(shape)
    return u / _norm(u)


def integrate(
    x0: np.ndarray,
    model: EnergyModel,
    eps: float,
    n_steps: int,
    rng_seed: int | np.random.Generator = 0,
) -> Trajectory:
    """Run the scaled leapfrog from x0 with a random initial direction.

    x0 may be a single point (d,) or a batch (n, d); the returned arrays
    carry the same trailing shape. Identical seeds give identical
    trajectories bit for bit.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if eps > MAX_VALIDATED_EPS:
        warnings.warn(
            f"step size {eps} exceeds the validated range (<= {MAX_VALIDATED_EPS}); "
            "stability is not guaranteed",
            stacklevel=2,
        )
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    x0 = np.asarray(x0, dtype=float)
    state = ScaledState(
        x=x0,
        u=random_unit(x0.shape, rng),
        r=np.zeros(x0.shape[:-1]),
        tbar=0.0,
        grad_cache=model.grad(x0),
    )
    xs = np.empty((n_steps + 1,) + x0.shape)
    us = np.empty_like(xs)
    rs = np.empty((n_steps + 1,) + x0.shape[:-1])
    xs[0], us[0], rs[0] = state.x, state.u, state.r
    for i in range(1, n_steps + 1):
        try:
            state = scaled_leapfrog_step(state, model, eps)
        except (DivergenceError, SingularityError) as err:
            raise DivergenceError(f"step {i}: {err}", state=getattr(err, "state", None)) from err
        xs[i], us[i], rs[i] = state.x, state.u, state.r
    tbars = eps * np.arange(n_steps + 1)
    return Trajectory(xs, us, rs, tbars, eps)


def hamiltonian(state: ScaledState | PhaseState, model: EnergyModel) -> np.ndarray:
    """Conserved quantity E(x) + (d/2) log(v^2/d).

    In scaled coordinates this is E(x) + d r - (d/2) log d; both forms agree
    for v = u e^r.
    """
    d = state.x.shape[-1]
    if isinstance(state, ScaledState):
        return model.energy(state.x) + d * state.r - 0.5 * d * np.log(d)
    vsq = np.sum(state.v * state.v, axis=-1)
    return model.energy(state.x) + 0.5 * d * np.log(vsq / d)


def conservation_drift(traj: Trajectory, model: EnergyModel) -> float:
    """Max relative drift of E(x) + d r along a trajectory.

    The continuum dynamics keep d r = c - E(x) exactly; the leapfrog keeps
    the drift at O(eps^2) globally. Relative to max(1, |initial value|).
    """
    d = traj.xs.shape[-1]
    h = model.energy(traj.xs) + d * traj.rs
    h0 = h[0]
    return float(np.max(np.abs(h - h0) / np.maximum(1.0, np.abs(h0))))
