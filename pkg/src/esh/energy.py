"""Benchmark energy functions with exact gradients and ground-truth samplers.

Everything is vectorized: positions have shape (..., dim), energies (...,)
and gradients (..., dim). A gradient call on a batch of chains counts as a
single evaluation toward the serial-gradient budget, since parallel chains
share one evaluation step.

The benchmark registry exposes the standard synthetic targets by name:
MOG2D, MOG2D_PRIOR, ICG50, SCG2D, SCG2D_BIAS, FUNNEL20 and GAUSSIAN(d).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class EnergyModel:
    """Scalar potential E(x) on R^dim with an analytic gradient.

    ``grad`` increments ``eval_counter`` by exactly one per call; ``energy``
    is free. The counter is a plain int: models are evaluated from a single
    driver at a time, with chain parallelism expressed through batched calls.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.eval_counter = 0

    def energy(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        self.eval_counter += 1
        return self._grad(x)

    def _grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GaussianEnergy(EnergyModel):
    """Quadratic energy E(x) = 0.5 (x-mean)^T cov^{-1} (x-mean)."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        super().__init__(mean.shape[0])
        if cov.shape != (self.dim, self.dim):
            raise ValueError(f"cov shape {cov.shape} does not match dim {self.dim}")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        self.mean = mean
        self.cov = cov
        self.chol = chol
        self.precision = np.linalg.inv(cov)
        # log Z for e^{-E}: (d/2) log 2pi + (1/2) log|cov|
        self.log_partition = 0.5 * self.dim * math.log(2 * math.pi) + float(
            np.sum(np.log(np.diag(chol)))
        )

    def energy(self, x: np.ndarray) -> np.ndarray:
        delta = np.asarray(x, dtype=float) - self.mean
        return 0.5 * np.einsum("...i,ij,...j->...", delta, self.precision, delta)

    def _grad(self, x: np.ndarray) -> np.ndarray:
        delta = np.asarray(x, dtype=float) - self.mean
        return np.einsum("ij,...j->...i", self.precision, delta)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.dim)) @ self.chol.T


class MixtureGaussianEnergy(EnergyModel):
    """Equal-covariance Gaussian mixture, E(x) = -log sum_k w_k N(x; mu_k, sigma^2 I).

    The normalizer of each component is kept so that E is the exact negative
    log density (log_partition = 0).
    """

    def __init__(self, centers: np.ndarray, sigma: float, weights: np.ndarray | None = None):
        centers = np.asarray(centers, dtype=float)
        super().__init__(centers.shape[1])
        k = centers.shape[0]
        if weights is None:
            weights = np.full(k, 1.0 / k)
        weights = np.asarray(weights, dtype=float)
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.centers = centers
        self.sigma = float(sigma)
        self.weights = weights / weights.sum()
        self.log_partition = 0.0
        self._log_norm = -self.dim * math.log(math.sqrt(2 * math.pi) * sigma)

    def _component_logs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        delta = x[..., None, :] - self.centers  # (..., k, d)
        sq = np.sum(delta * delta, axis=-1)  # (..., k)
        return np.log(self.weights) + self._log_norm - sq / (2 * self.sigma**2)

    def energy(self, x: np.ndarray) -> np.ndarray:
        logs = self._component_logs(x)
        m = np.max(logs, axis=-1, keepdims=True)
        return -(m[..., 0] + np.log(np.sum(np.exp(logs - m), axis=-1)))

    def _grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        logs = self._component_logs(x)
        m = np.max(logs, axis=-1, keepdims=True)
        p = np.exp(logs - m)
        p /= np.sum(p, axis=-1, keepdims=True)  # responsibilities (..., k)
        delta = x[..., None, :] - self.centers
        return np.sum(p[..., None] * delta, axis=-2) / self.sigma**2

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.centers[idx] + self.sigma * rng.standard_normal((n, self.dim))


class FunnelEnergy(EnergyModel):
    """Hierarchical funnel: x1 ~ N(0, sigma1^2), x_i | x1 ~ N(0, e^{x1}).

    E(x) = x1^2/(2 sigma1^2) + sum_{i>=2} (x_i^2 e^{-x1}/2 + x1/2), the exact
    negative log density up to the x1-marginal normalizer.
    """

    def __init__(self, dim: int, sigma1: float = 3.0):
        if dim < 2:
            raise ValueError("funnel needs dim >= 2")
        super().__init__(dim)
        self.sigma1 = float(sigma1)

    def energy(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        rest_sq = np.sum(x[..., 1:] ** 2, axis=-1)
        return x1**2 / (2 * self.sigma1**2) + 0.5 * rest_sq * np.exp(-x1) + 0.5 * (self.dim - 1) * x1

    def _grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        exp_neg = np.exp(-x1)
        g = np.empty_like(x)
        rest_sq = np.sum(x[..., 1:] ** 2, axis=-1)
        g[..., 0] = x1 / self.sigma1**2 - 0.5 * rest_sq * exp_neg + 0.5 * (self.dim - 1)
        g[..., 1:] = x[..., 1:] * exp_neg[..., None]
        return g

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        x1 = self.sigma1 * rng.standard_normal((n, 1))
        rest = np.exp(x1 / 2) * rng.standard_normal((n, self.dim - 1))
        return np.concatenate([x1, rest], axis=1)


def gaussian_energy(mean: np.ndarray, cov: np.ndarray) -> GaussianEnergy:
    """Gaussian energy with validated SPD covariance."""
    return GaussianEnergy(mean, cov)


def mog2d_energy(n_modes: int = 8, radius: float = 4.0, sigma: float = 0.5) -> MixtureGaussianEnergy:
    """2D ring mixture: n_modes equal-weight Gaussians on a circle.

    Defaults give well-separated modes (inter-mode distance ~6 sigma) while
    keeping a standard-normal start within reach of a desk-scale trajectory;
    much tighter components put the start at astronomically low density, and
    the conserved-energy surface then takes far too long to equilibrate.
    """
    angles = 2 * math.pi * np.arange(n_modes) / n_modes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return MixtureGaussianEnergy(centers, sigma)


def funnel_energy(dim: int, sigma1: float = 3.0) -> FunnelEnergy:
    return FunnelEnergy(dim, sigma1)


def check_gradient(model: EnergyModel, probes: np.ndarray, h: float = 1e-4) -> float:
    """Max relative error of the analytic gradient vs central differences.

    Returns max over probes and coordinates of
    |(E(x+h e_i) - E(x-h e_i))/(2h) - g_i(x)| / (|g_i(x)| + 1e-8).
    Does not touch eval_counter (uses energy and the raw gradient).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    worst = 0.0
    for j, x in enumerate(probes):
        e0 = model.energy(x)
        if not np.isfinite(e0):
            raise ValueError(f"non-finite energy at probe {j}: {x}")
        g = model._grad(x)
        for i in range(model.dim):
            step = np.zeros(model.dim)
            step[i] = h
            ep, em = model.energy(x + step), model.energy(x - step)
            if not (np.isfinite(ep) and np.isfinite(em)):
                raise ValueError(f"non-finite energy at probe {j} coordinate {i}")
            fd = (ep - em) / (2 * h)
            worst = max(worst, abs(fd - g[i]) / (abs(g[i]) + 1e-8))
    return worst


@dataclass(frozen=True)
class Benchmark:
    """A named target: model factory, initializer, exact sampler, moments.

    ``mean``/``var`` are the analytic per-coordinate moments of the target,
    used as the reference moments for effective-sample-size estimation.
    """

    name: str
    dim: int
    make_model: Callable[[], EnergyModel]
    init: Callable[[int, np.random.Generator], np.ndarray]
    sample_truth: Callable[[int, np.random.Generator], np.ndarray]
    mean: np.ndarray
    var: np.ndarray
    log_partition: float | None = None


def _standard_normal_init(dim: int):
    def init(n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, dim))

    return init


def _uniform_box_init(dim: int, lo: float, hi: float):
    def init(n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(lo, hi, size=(n, dim))

    return init


def _mog_benchmark(name: str, mode_prior: bool, params: dict) -> Benchmark:
    n_modes = int(params.get("n_modes", 8))
    radius = float(params.get("radius", 4.0))
    sigma = float(params.get("sigma", 0.5))
    proto = mog2d_energy(n_modes, radius, sigma)

    def make_model() -> EnergyModel:
        return mog2d_energy(n_modes, radius, sigma)

    if mode_prior:
        # All chains start at one fixed mode center plus component-scale jitter.
        center = proto.centers[0].copy()

        def init(n: int, rng: np.random.Generator) -> np.ndarray:
            return center + sigma * rng.standard_normal((n, 2))

    else:
        init = _standard_normal_init(2)

    var = np.full(2, radius**2 / 2 + sigma**2)
    return Benchmark(
        name=name,
        dim=2,
        make_model=make_model,
        init=init,
        sample_truth=proto.sample,
        mean=np.zeros(2),
        var=var,
        log_partition=0.0,
    )


def _scg_benchmark(name: str, biased: bool, params: dict) -> Benchmark:
    rho = float(params.get("rho", 0.99))
    cov = np.array([[1.0, rho], [rho, 1.0]])
    proto = GaussianEnergy(np.zeros(2), cov)

    def make_model() -> EnergyModel:
        return GaussianEnergy(np.zeros(2), cov)

    if biased:
        # 3 standard deviations out along the long principal axis (1,1)/sqrt(2).
        point = 3.0 * math.sqrt((1 + rho) / 2) * np.ones(2)

        def init(n: int, rng: np.random.Generator) -> np.ndarray:
            return np.tile(point, (n, 1))

    else:
        init = _standard_normal_init(2)

    return Benchmark(
        name=name,
        dim=2,
        make_model=make_model,
        init=init,
        sample_truth=proto.sample,
        mean=np.zeros(2),
        var=np.ones(2),
        log_partition=proto.log_partition,
    )


def _icg_benchmark(params: dict) -> Benchmark:
    dim = int(params.get("dim", 50))
    sigma_min = float(params.get("sigma_min", 0.01))
    sigma_max = float(params.get("sigma_max", 1.0))
    sigmas = np.geomspace(sigma_min, sigma_max, dim)
    cov = np.diag(sigmas**2)
    proto = GaussianEnergy(np.zeros(dim), cov)

    def make_model() -> EnergyModel:
        return GaussianEnergy(np.zeros(dim), cov)

    def sample_truth(n: int, rng: np.random.Generator) -> np.ndarray:
        return sigmas * rng.standard_normal((n, dim))

    return Benchmark(
        name="ICG50",
        dim=dim,
        make_model=make_model,
        init=_standard_normal_init(dim),
        sample_truth=sample_truth,
        mean=np.zeros(dim),
        var=sigmas**2,
        log_partition=proto.log_partition,
    )


def _funnel_benchmark(params: dict) -> Benchmark:
    dim = int(params.get("dim", 20))
    sigma1 = float(params.get("sigma1", 3.0))
    proto = FunnelEnergy(dim, sigma1)

    def make_model() -> EnergyModel:
        return FunnelEnergy(dim, sigma1)

    var = np.full(dim, math.exp(sigma1**2 / 2))
    var[0] = sigma1**2
    return Benchmark(
        name="FUNNEL20",
        dim=dim,
        make_model=make_model,
        init=_standard_normal_init(dim),
        sample_truth=proto.sample,
        mean=np.zeros(dim),
        var=var,
        log_partition=None,
    )


def _gaussian_benchmark(dim: int) -> Benchmark:
    def make_model() -> EnergyModel:
        return GaussianEnergy(np.zeros(dim), np.eye(dim))

    def sample_truth(n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, dim))

    return Benchmark(
        name=f"GAUSSIAN({dim})",
        dim=dim,
        make_model=make_model,
        init=_standard_normal_init(dim),
        sample_truth=sample_truth,
        mean=np.zeros(dim),
        var=np.ones(dim),
        log_partition=0.5 * dim * math.log(2 * math.pi),
    )


_GAUSSIAN_RE = re.compile(r"^GAUSSIAN\((\d+)\)$")


def benchmark_names() -> list[str]:
    return ["MOG2D", "MOG2D_PRIOR", "ICG50", "SCG2D", "SCG2D_BIAS", "FUNNEL20", "GAUSSIAN(d)"]


def get_benchmark(name: str, params: dict | None = None) -> Benchmark:
    """Look up a benchmark by its registry name.

    ``params`` carries overrides from config keys ``energy.<name>.<param>``,
    e.g. {"sigma": 0.2} for MOG2D. An ``init`` override selects an alternate
    initializer: standard_normal, mode_prior, biased_corner or uniform_box
    (with init_lo/init_hi bounds).
    """
    params = dict(params or {})
    init_override = params.pop("init", None)
    m = _GAUSSIAN_RE.match(name)
    if m:
        bench = _gaussian_benchmark(int(m.group(1)))
    elif name == "MOG2D":
        bench = _mog_benchmark(name, mode_prior=False, params=params)
    elif name == "MOG2D_PRIOR":
        bench = _mog_benchmark(name, mode_prior=True, params=params)
    elif name == "SCG2D":
        bench = _scg_benchmark(name, biased=False, params=params)
    elif name == "SCG2D_BIAS":
        bench = _scg_benchmark(name, biased=True, params=params)
    elif name == "ICG50":
        bench = _icg_benchmark(params)
    elif name == "FUNNEL20":
        bench = _funnel_benchmark(params)
    else:
        raise KeyError(f"unknown benchmark {name!r}; known: {benchmark_names()}")

    if init_override is not None:
        if init_override == "standard_normal":
            init = _standard_normal_init(bench.dim)
        elif init_override == "uniform_box":
            lo = float(params.get("init_lo", -2.0))
            hi = float(params.get("init_hi", 2.0))
            init = _uniform_box_init(bench.dim, lo, hi)
        elif init_override == "mode_prior" and name.startswith("MOG2D"):
            init = _mog_benchmark(name, mode_prior=True, params=params).init
        elif init_override == "biased_corner" and name.startswith("SCG2D"):
            init = _scg_benchmark(name, biased=True, params=params).init
        else:
            raise KeyError(f"initializer {init_override!r} not valid for {name}")
        bench = Benchmark(
            name=bench.name,
            dim=bench.dim,
            make_model=bench.make_model,
            init=init,
            sample_truth=bench.sample_truth,
            mean=bench.mean,
            var=bench.var,
            log_partition=bench.log_partition,
        )
    return bench
