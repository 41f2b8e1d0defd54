"""Experiment engine: (benchmark x sampler x seed) sweeps with CSV/JSON output.

Each cell runs a batch of chains to a serial-gradient-evaluation budget,
snapshotting one sample per chain at each checkpoint: the online reservoir
sample for the energy-sampling dynamics, the current state for the MCMC
baselines. Snapshots are scored by MMD^2 against fresh ground-truth draws;
effective sample size is computed once per cell over the full chains against
the target's analytic moments and attached to the final checkpoint row.

Output is deterministic: records are sorted by (benchmark, sampler, seed,
checkpoint) and wall-clock timing is zeroed unless explicitly enabled, so
identical configs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import re
import time
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from . import baselines
from .energy import Benchmark, EnergyModel, check_gradient, get_benchmark
from .integrators import (
    DivergenceError,
    PhaseState,
    ScaledState,
    SingularityError,
    original_leapfrog_step,
    random_unit,
    scaled_leapfrog_step,
)
from .metrics import ess, mmd2_unbiased
from .sampling import Reservoir, estimate_log_partition, jarzynski_log_weights, weight_ess

SAMPLER_KINDS = ("esh-leap", "esh-orig", "ula", "mala", "hmc")

CSV_HEADER = "benchmark,sampler,seed,checkpoint,mmd2,ess,mean_energy,wall_clock,error"


@dataclass(frozen=True)
class SamplerConfig:
    kind: str
    eps: float = 0.1
    k: int = 5
    energy_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler {self.kind!r}; known: {SAMPLER_KINDS}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def label(self) -> str:
        parts = [f"eps={self.eps:g}"]
        if self.kind == "hmc":
            parts.append(f"k={self.k}")
        if self.energy_scale != 1.0:
            parts.append(f"scale={self.energy_scale:g}")
        return f"{self.kind}({','.join(parts)})"


_LABEL_RE = re.compile(r"^([a-z-]+)\((.*)\)$")


def parse_sampler(text: str) -> SamplerConfig:
    """Parse a sampler label like ``hmc(eps=0.01,k=5)``; bare names use defaults."""
    text = text.strip()
    m = _LABEL_RE.match(text)
    if not m:
        return SamplerConfig(kind=text)
    kind = m.group(1)
    kwargs: dict = {}
    for item in filter(None, (s.strip() for s in m.group(2).split(","))):
        key, _, val = item.partition("=")
        key = {"scale": "energy_scale"}.get(key.strip(), key.strip())
        kwargs[key] = int(val) if key == "k" else float(val)
    return SamplerConfig(kind=kind, **kwargs)


@dataclass(frozen=True)
class ExperimentConfig:
    benchmarks: tuple[str, ...] = ("MOG2D",)
    samplers: tuple[SamplerConfig, ...] = (SamplerConfig("esh-leap"),)
    n_chains: int = 500
    grad_budget: int = 500
    measure_at: tuple[int, ...] = (50, 100, 200, 500)
    seeds: tuple[int, ...] = (0,)
    truth_n: int = 500
    output_dir: str = "."
    record_timing: bool = False
    emit_samples: bool = False
    energy_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if list(self.measure_at) != sorted(self.measure_at):
            raise ValueError("checkpoints must be sorted ascending")
        if self.measure_at and self.measure_at[-1] > self.grad_budget:
            raise ValueError("checkpoints must not exceed grad_budget")


@dataclass
class RunRecord:
    benchmark: str
    sampler: str
    seed: int
    checkpoint: int
    mmd2: float
    ess: float | None
    mean_energy: float
    wall_clock: float
    error: str = ""


class _ChainDriver:
    """Advances a batch of chains by one sampler-specific quantum of work.

    Gradient accounting is lazy: nothing is evaluated until the first
    ``advance``, so a zero-budget snapshot sees the untouched initializer.
    """

    def __init__(self, sampler: SamplerConfig, model: EnergyModel, x0: np.ndarray, rng: np.random.Generator):
        self.sampler = sampler
        self.model = model
        self.rng = rng
        self.x = np.asarray(x0, dtype=float)
        self._state = None
        self._cache = None
        self.reservoir: Reservoir | None = None
        if sampler.kind in ("esh-leap", "esh-orig"):
            self.reservoir = Reservoir(rng)
            self.reservoir.update(self.x, np.zeros(self.x.shape[:-1]))

    def advance(self) -> None:
        kind = self.sampler.kind
        eps = self.sampler.eps
        if kind == "esh-leap":
            if self._state is None:
                self._state = ScaledState(
                    x=self.x,
                    u=random_unit(self.x.shape, self.rng),
                    r=np.zeros(self.x.shape[:-1]),
                    tbar=0.0,
                    grad_cache=self.model.grad(self.x),
                )
            self._state = scaled_leapfrog_step(self._state, self.model, eps)
            self.x = self._state.x
            self.reservoir.update(self._state.x, self._state.r)
        elif kind == "esh-orig":
            if self._state is None:
                self._state = PhaseState(
                    x=self.x,
                    v=random_unit(self.x.shape, self.rng),
                    grad_cache=self.model.grad(self.x),
                )
            self._state = original_leapfrog_step(self._state, self.model, eps)
            self.x = self._state.x
            # Uniform grid in original time: equal reservoir weights.
            self.reservoir.update(self._state.x, np.zeros(self.x.shape[:-1]))
        elif kind == "ula":
            self.x = baselines.ula_step(self.x, self.model, eps, self.rng, self.sampler.energy_scale)
        elif kind == "mala":
            self.x, _, self._cache = baselines.mala_step(
                self.x, self.model, eps, self.rng, self.sampler.energy_scale, self._cache
            )
        elif kind == "hmc":
            self.x, _, self._cache = baselines.hmc_transition(
                self.x, self.model, eps, self.sampler.k, self.rng, self.sampler.energy_scale, self._cache
            )

    def snapshot(self) -> np.ndarray:
        if self.reservoir is not None:
            return self.reservoir.current.copy()
        return self.x.copy()


def _float_fmt(x: float | None) -> str:
    return "" if x is None else format(float(x), ".17g")


def run_cell(
    benchmark: Benchmark,
    sampler: SamplerConfig,
    seed: int,
    cfg: ExperimentConfig,
) -> tuple[list[RunRecord], list[tuple[int, np.ndarray]]]:
    """One (benchmark, sampler, seed) cell: records plus checkpoint snapshots."""
    t_start = time.perf_counter()
    cell_tag = (seed, zlib.crc32(benchmark.name.encode()), zlib.crc32(sampler.label.encode()))
    ss = np.random.SeedSequence(entropy=cell_tag).spawn(3)
    rng_init, rng_chain, rng_truth = (np.random.default_rng(s) for s in ss)
    model = benchmark.make_model()
    x0 = benchmark.init(cfg.n_chains, rng_init)
    truth = benchmark.sample_truth(cfg.truth_n, rng_truth)
    driver = _ChainDriver(sampler, model, x0, rng_chain)
    records: list[RunRecord] = []
    snapshots: list[tuple[int, np.ndarray]] = []
    history = [driver.x.copy()]
    error = ""
    for cp in cfg.measure_at:
        if not error:
            try:
                while model.eval_counter < cp:
                    driver.advance()
                    history.append(driver.x.copy())
            except (DivergenceError, SingularityError, FloatingPointError) as err:
                error = f"{type(err).__name__}: {err}"
        if not error:
            snap = driver.snapshot()
            if not np.all(np.isfinite(snap)):
                error = "non-finite chain state at checkpoint"
        if error:
            records.append(
                RunRecord(benchmark.name, sampler.label, seed, cp, float("nan"), None, float("nan"), 0.0, error)
            )
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            mmd2 = mmd2_unbiased(snap, truth)
            mean_energy = float(np.mean(model.energy(snap)))
        if not (np.isfinite(mmd2) and np.isfinite(mean_energy)):
            error = "non-finite metrics at checkpoint"
            records.append(
                RunRecord(benchmark.name, sampler.label, seed, cp, float("nan"), None, float("nan"), 0.0, error)
            )
            continue
        snapshots.append((model.eval_counter, snap))
        records.append(
            RunRecord(
                benchmark=benchmark.name,
                sampler=sampler.label,
                seed=seed,
                checkpoint=model.eval_counter,
                mmd2=mmd2,
                ess=None,
                mean_energy=mean_energy,
                wall_clock=0.0,
            )
        )
    if not error:
        try:
            while model.eval_counter < cfg.grad_budget:
                driver.advance()
                history.append(driver.x.copy())
        except (DivergenceError, SingularityError, FloatingPointError) as err:
            error = f"{type(err).__name__}: {err}"
            if records:
                records[-1].error = error
    if not error and records and len(history) >= 10 and np.all(np.isfinite(history[-1])):
        chains = np.stack(history, axis=1)  # (n_chains, N, d)
        result = ess(chains, mean=benchmark.mean, var=benchmark.var)
        # Normalize per gradient evaluation so samplers with different
        # per-step gradient costs (HMC: k per retained state) compare on the
        # same budget axis as the MMD curves.
        records[-1].ess = result.ess_per_sample * len(history) / max(1, model.eval_counter)
    if cfg.record_timing:
        elapsed = time.perf_counter() - t_start
        for rec in records:
            rec.wall_clock = elapsed
    return records, snapshots


def run_experiment(cfg: ExperimentConfig):
    """Full sweep over (benchmark x sampler x seed), deterministically ordered.

    Returns (records, samples) where samples maps each cell's checkpoints to
    the snapshot arrays (kept only when cfg.emit_samples is set). A failing
    cell contributes flagged rows and never aborts the sweep.
    """
    records: list[RunRecord] = []
    samples: list[tuple[str, str, int, int, np.ndarray]] = []
    for bench_name in cfg.benchmarks:
        benchmark = get_benchmark(bench_name, cfg.energy_params.get(bench_name))
        for sampler in cfg.samplers:
            for seed in cfg.seeds:
                recs, snaps = run_cell(benchmark, sampler, seed, cfg)
                records.extend(recs)
                if cfg.emit_samples:
                    for counter, snap in snaps:
                        samples.append((benchmark.name, sampler.label, seed, counter, snap))
    records.sort(key=lambda r: (r.benchmark, r.sampler, r.seed, r.checkpoint))
    return records, samples


def emit(records: list[RunRecord], fmt: str, path: str, config: ExperimentConfig | None = None) -> None:
    """Write records as CSV (pinned header, 17-significant-digit floats) or JSON."""
    if not records:
        raise ValueError("no records to emit")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for r in records:
            writer.writerow(
                [
                    r.benchmark,
                    r.sampler,
                    r.seed,
                    r.checkpoint,
                    _float_fmt(r.mmd2),
                    _float_fmt(r.ess),
                    _float_fmt(r.mean_energy),
                    _float_fmt(r.wall_clock),
                    r.error,
                ]
            )
        with open(path, "w") as f:
            f.write(buf.getvalue())
    elif fmt == "json":
        payload = {"records": [asdict(r) for r in records]}
        if config is not None:
            cfg_dict = asdict(config)
            cfg_dict["samplers"] = [s.label for s in config.samplers]
            payload["config"] = cfg_dict
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def parse_records(path: str) -> list[RunRecord]:
    """Read back a CSV written by ``emit``."""
    out = []
    with open(path) as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for row in reader:
            out.append(
                RunRecord(
                    benchmark=row["benchmark"],
                    sampler=row["sampler"],
                    seed=int(row["seed"]),
                    checkpoint=int(row["checkpoint"]),
                    mmd2=float(row["mmd2"]),
                    ess=float(row["ess"]) if row["ess"] else None,
                    mean_energy=float(row["mean_energy"]),
                    wall_clock=float(row["wall_clock"]),
                    error=row["error"],
                )
            )
    return out


def emit_samples_csv(samples, path: str) -> None:
    """Write 2D checkpoint snapshots as benchmark,sampler,seed,checkpoint,chain,x0,x1."""
    with open(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["benchmark", "sampler", "seed", "checkpoint", "chain", "x0", "x1"])
        for bench, sampler, seed, checkpoint, snap in samples:
            for i, x in enumerate(np.atleast_2d(snap)):
                writer.writerow([bench, sampler, seed, checkpoint, i, _float_fmt(x[0]), _float_fmt(x[1])])


@dataclass
class LogZResult:
    """Partition-function run: per-grid traces plus the final estimate.

    Columns of the trace CSV written by the CLI: tbar, logz_est, logz_true,
    mean_energy, kinetic, hamiltonian, max_weight.
    """

    benchmark: str
    sampler: str
    seed: int
    tbars: np.ndarray
    logz_est: np.ndarray
    logz_true: float
    mean_energy: np.ndarray
    kinetic: np.ndarray
    hamiltonian: np.ndarray
    max_weight: np.ndarray
    weight_ess: float
    error: str = ""

    @property
    def final_estimate(self) -> float:
        return float(self.logz_est[-1])


def run_logz(
    target: EnergyModel,
    log_z_target: float,
    base: EnergyModel,
    log_z_base: float,
    base_sampler,
    n_chains: int = 1000,
    eps: float = 0.1,
    n_steps: int = 50,
    seed: int = 0,
    benchmark_name: str = "",
) -> LogZResult:
    """Estimate log Z along a flow from the base energy to the target.

    Chains start at exact base samples with unit speed; at every grid point
    the raw weights w = E0(x(0)) - E(x(0)) + r(t) give the running estimate
    log Z0 + log mean e^w. Also traces mean energy, kinetic energy (d * r)
    and the conserved Hamiltonian. Flags weight collapse when the effective
    sample size of the final weights drops below 2.
    """
    from .integrators import integrate

    ss = np.random.SeedSequence(seed).spawn(2)
    x0 = base_sampler(n_chains, np.random.default_rng(ss[0]))
    traj = integrate(x0, target, eps, n_steps, np.random.default_rng(ss[1]))
    d = target.dim
    w0 = base.energy(x0) - target.energy(x0)
    n_grid = len(traj)
    logz_est = np.empty(n_grid)
    max_w = np.empty(n_grid)
    for i in range(n_grid):
        w = w0 + traj.rs[i]
        logz_est[i] = estimate_log_partition(w, log_z_base)
        p = np.exp(w - w.max())
        max_w[i] = float((p / p.sum()).max())
    energies = target.energy(traj.xs)  # (N+1, n)
    kinetic = d * traj.rs
    ham = energies + kinetic
    final_wess = weight_ess(w0 + traj.rs[-1])
    return LogZResult(
        benchmark=benchmark_name,
        sampler=f"esh-leap(eps={eps:g})",
        seed=seed,
        tbars=traj.tbars,
        logz_est=logz_est,
        logz_true=log_z_target,
        mean_energy=energies.mean(axis=1),
        kinetic=kinetic.mean(axis=1),
        hamiltonian=ham.mean(axis=1),
        max_weight=max_w,
        weight_ess=final_wess,
        error="" if final_wess >= 2.0 else f"weight collapse: ESS {final_wess:.3g} < 2",
    )


def emit_logz_csv(result: LogZResult, path: str) -> None:
    with open(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["tbar", "logz_est", "logz_true", "mean_energy", "kinetic", "hamiltonian", "max_weight"])
        for i in range(len(result.tbars)):
            writer.writerow(
                [
                    _float_fmt(result.tbars[i]),
                    _float_fmt(result.logz_est[i]),
                    _float_fmt(result.logz_true),
                    _float_fmt(result.mean_energy[i]),
                    _float_fmt(result.kinetic[i]),
                    _float_fmt(result.hamiltonian[i]),
                    _float_fmt(result.max_weight[i]),
                ]
            )


def emit_trajectory_csv(traj, path: str) -> None:
    """Single-trajectory dump: tbar, t, x coordinates, r per grid point."""
    if traj.t_unscaled.ndim != 1:
        raise ValueError("trajectory dump expects a single chain")
    d = traj.xs.shape[-1]
    with open(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["tbar", "t"] + [f"x{i}" for i in range(d)] + ["r"])
        for i in range(len(traj)):
            row = [_float_fmt(traj.tbars[i]), _float_fmt(traj.t_unscaled[i])]
            row += [_float_fmt(v) for v in np.atleast_1d(traj.xs[i])]
            row.append(_float_fmt(traj.rs[i]))
            writer.writerow(row)


class ConfigError(ValueError):
    pass


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_config(path: str) -> ExperimentConfig:
    """Parse the flat key = value experiment config format.

    Lists are comma separated; ``energy.<name>.<param>`` keys collect into
    per-benchmark parameter overrides. Unknown keys fail loudly.
    """
    raw: dict[str, str] = {}
    energy_params: dict[str, dict] = {}
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if key.startswith("energy."):
                    parts = key.split(".")
                    if len(parts) != 3:
                        raise ConfigError(f"{path}:{lineno}: expected energy.<name>.<param>")
                    bucket = energy_params.setdefault(parts[1], {})
                    try:
                        bucket[parts[2]] = float(val)
                    except ValueError:
                        bucket[parts[2]] = val
                else:
                    raw[key] = val
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err

    kwargs: dict = {"energy_params": energy_params}
    try:
        for key, val in raw.items():
            if key == "benchmark":
                kwargs["benchmarks"] = tuple(s.strip() for s in val.split(","))
            elif key == "sampler":
                kwargs["samplers"] = tuple(parse_sampler(s) for s in _split_samplers(val))
            elif key == "chains":
                kwargs["n_chains"] = int(val)
            elif key == "budget":
                kwargs["grad_budget"] = int(val)
            elif key == "measure_at":
                kwargs["measure_at"] = tuple(int(s) for s in val.split(","))
            elif key == "seeds":
                kwargs["seeds"] = tuple(int(s) for s in val.split(","))
            elif key == "truth_n":
                kwargs["truth_n"] = int(val)
            elif key == "out":
                kwargs["output_dir"] = val
            elif key == "record_timing":
                kwargs["record_timing"] = _BOOL[val.lower()]
            elif key == "emit_samples":
                kwargs["emit_samples"] = _BOOL[val.lower()]
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return ExperimentConfig(**kwargs)
    except (ValueError, KeyError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {err}") from err


def _split_samplers(val: str) -> list[str]:
    """Split a sampler list on commas outside parentheses."""
    out, depth, cur = [], 0, []
    for ch in val:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return [s for s in (s.strip() for s in out) if s]
