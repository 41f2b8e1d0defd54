"""Acceptance suite: one test per criterion, printed as PASS/FAIL lines.

Run with `pytest tests/test_acceptance.py -s` to see every line. Criteria
are asserted at their stated tolerances; the known-unattainable cases
(step-size 0.1 conservation on the stiffest targets, stationarity on the
rotationally symmetric Gaussian) are asserted faithfully and left to fail
rather than loosened. The analysis lives in the repo notes, summarized in
the assertion messages here.
"""

import collections
import math
import time

import numpy as np
import pytest

import esh
from esh.energy import get_benchmark
from esh.harness import ExperimentConfig, SamplerConfig, emit, run_cell, run_experiment, run_logz
from esh.integrators import ScaledState, random_unit, scaled_leapfrog_step
from esh.metrics import ess as ess_metric
from esh.metrics import mmd2_unbiased
from esh.sampling import Reservoir, ergodic_sample, stationarity_probe
from oracles import mmd2_bruteforce, reservoir_selection_probs, rk4_frozen_direction, rk4_scaled_trajectory

ALL_BENCHMARKS = ["GAUSSIAN(2)", "MOG2D", "MOG2D_PRIOR", "SCG2D", "SCG2D_BIAS", "ICG50", "FUNNEL20"]


def report(line: str):
    print(f"\nACCEPTANCE {line}")


# --- 1. Hamiltonian conservation -------------------------------------------

_conservation_clock = {"total": 0.0}


@pytest.mark.parametrize("name", ALL_BENCHMARKS)
@pytest.mark.parametrize("eps,tol", [(0.1, 1e-2), (0.001, 1e-5)])
def test_conservation(name, eps, tol):
    t0 = time.perf_counter()
    b = get_benchmark(name)
    m = b.make_model()
    rng = np.random.default_rng(0)
    x0 = b.init(128, rng)
    state = ScaledState(x0, random_unit(x0.shape, rng), np.zeros(128), 0.0, m.grad(x0))
    trace = [np.mean(m.energy(state.x) + b.dim * state.r)]
    for _ in range(1000):
        state = scaled_leapfrog_step(state, m, eps)
        trace.append(np.mean(m.energy(state.x) + b.dim * state.r))
    trace = np.array(trace)
    drift = np.max(np.abs(trace - trace[0])) / max(1.0, abs(trace[0]))
    _conservation_clock["total"] += time.perf_counter() - t0
    ok = drift <= tol
    report(f"conservation[{name}, eps={eps}]: {'PASS' if ok else 'FAIL'} (drift {drift:.3g}, tol {tol:g})")
    assert ok, (
        f"mean-Hamiltonian drift {drift:.3g} > {tol:g} on {name} at eps={eps}; "
        "the closed-form updates are verified exact against RK4, so this is the "
        "intrinsic splitting error of the specified integrator at this step size"
    )


def test_conservation_runtime():
    ok = _conservation_clock["total"] < 60.0
    report(f"conservation[runtime]: {'PASS' if ok else 'FAIL'} ({_conservation_clock['total']:.1f}s < 60s)")
    assert ok


# --- 2. Integrator oracle ---------------------------------------------------


def test_integrator_matches_rk4():
    m = esh.gaussian_energy(np.zeros(2), np.eye(2))
    x0 = np.array([1.5, -0.3])
    u0 = np.array([0.2, 1.0]) / np.linalg.norm([0.2, 1.0])
    s = ScaledState(x0, u0, 0.0, 0.0, m.grad(x0))
    for _ in range(5000):
        s = scaled_leapfrog_step(s, m, 1e-3)
    x_rk, _, _ = rk4_scaled_trajectory(m, x0, u0, 5.0, 20_000)
    err = float(np.max(np.abs(s.x - x_rk)))
    ok = err <= 1e-4
    report(f"integrator-oracle[trajectory]: {'PASS' if ok else 'FAIL'} (max |dx| {err:.3g})")
    assert ok


def test_updates_match_frozen_rk4():
    rng = np.random.default_rng(7)
    worst_u = worst_r = 0.0
    for _ in range(30):
        u = rng.standard_normal(6)
        u /= np.linalg.norm(u)
        g = rng.standard_normal(6) * rng.uniform(0.05, 20)
        u_rk, dr_rk = rk4_frozen_direction(u, g, 0.01)
        worst_u = max(worst_u, float(np.max(np.abs(esh.u_update(u, g, 0.01) - u_rk))))
        worst_r = max(worst_r, abs(float(esh.r_update(u, g, 0.01)) - dr_rk))
    ok = worst_u <= 1e-8 and worst_r <= 1e-8
    report(f"integrator-oracle[updates]: {'PASS' if ok else 'FAIL'} (u {worst_u:.3g}, r {worst_r:.3g})")
    assert ok


# --- 3. Ergodic single-trajectory sampling ----------------------------------


def test_ergodic_sampling_mog():
    # Full-scale probe: 500k steps at eps=0.001 (the 50k desk scaling in the
    # build notes covers a tenth of the path needed to tour the mode ring).
    t0 = time.perf_counter()
    b = get_benchmark("MOG2D")
    m = b.make_model()
    rng = np.random.default_rng(0)
    traj = esh.integrate(b.init(1, rng)[0], m, 0.001, 500_000, rng)
    pts = ergodic_sample(traj, 500, rng)
    truth = b.sample_truth(500, np.random.default_rng(1000))
    mmd = mmd2_unbiased(pts, truth)
    elapsed = time.perf_counter() - t0
    ok = mmd <= 0.01 and elapsed < 300
    report(f"ergodicity[MOG2D]: {'PASS' if ok else 'FAIL'} (MMD^2 {mmd:.4f} <= 0.01, {elapsed:.0f}s < 300s)")
    assert ok


# --- 4. MMD-vs-budget ordering ----------------------------------------------


def _mmd_series(records):
    series = collections.defaultdict(list)
    for r in records:
        series[(r.benchmark, r.sampler, r.seed)].append((r.checkpoint, r.mmd2))
    return {k: [m for _, m in sorted(v)] for k, v in series.items()}


BASELINES = ("ula(eps=0.1)", "mala(eps=0.1)", "hmc(eps=0.01,k=5)")


def test_mmd_ordering_2d():
    cfg = ExperimentConfig(
        benchmarks=("MOG2D_PRIOR", "SCG2D_BIAS"),
        samplers=(
            SamplerConfig("esh-leap", eps=0.1),
            SamplerConfig("ula", eps=0.1),
            SamplerConfig("mala", eps=0.1),
            SamplerConfig("hmc", eps=0.01, k=5),
        ),
        n_chains=500,
        grad_budget=500,
        measure_at=(50, 100, 200, 500),
        seeds=(0, 1, 2, 3, 4),
    )
    series = _mmd_series(run_experiment(cfg)[0])
    all_ok = True
    for bench in cfg.benchmarks:
        good_seeds = 0
        for seed in cfg.seeds:
            esh_curve = series[(bench, "esh-leap(eps=0.1)", seed)]
            wins = sum(
                esh_curve[i] < min(series[(bench, s, seed)][i] for s in BASELINES)
                for i in range(4)
            )
            good_seeds += wins >= 3
        ok = good_seeds >= 4
        all_ok &= ok
        report(f"mmd-ordering[{bench}]: {'PASS' if ok else 'FAIL'} ({good_seeds}/5 seeds with >=3/4 wins)")
    assert all_ok


def test_mmd_icg_within_2x_of_best():
    cfg = ExperimentConfig(
        benchmarks=("ICG50",),
        samplers=(
            SamplerConfig("esh-leap", eps=0.1),
            SamplerConfig("ula", eps=0.1),
            SamplerConfig("mala", eps=0.1),
            SamplerConfig("hmc", eps=0.01, k=5),
        ),
        n_chains=500,
        grad_budget=500,
        measure_at=(500,),
        seeds=(0, 1, 2, 3, 4),
    )
    records, _ = run_experiment(cfg)
    final = collections.defaultdict(dict)
    for r in records:
        if not r.error:
            final[r.seed][r.sampler] = r.mmd2
    good = 0
    for seed, row in final.items():
        eshv = row["esh-leap(eps=0.1)"]
        good += eshv <= 2 * min(row.values())
    ok = good >= 4
    report(f"mmd-ordering[ICG50 within 2x]: {'PASS' if ok else 'FAIL'} ({good}/5 seeds)")
    assert ok


# --- 5. ESS ordering ---------------------------------------------------------


def test_ess_ordering():
    # Budget 2000: long enough for the decorrelation ordering to emerge from
    # the transient (at very short windows truncation noise dominates).
    cfg = ExperimentConfig(
        benchmarks=("MOG2D", "MOG2D_PRIOR", "SCG2D", "SCG2D_BIAS"),
        samplers=(
            SamplerConfig("esh-leap", eps=0.1),
            SamplerConfig("ula", eps=0.1),
            SamplerConfig("mala", eps=0.1),
            SamplerConfig("hmc", eps=0.01, k=5),
        ),
        n_chains=500,
        grad_budget=2000,
        measure_at=(2000,),
        seeds=(0, 1),
    )
    records, _ = run_experiment(cfg)
    table = collections.defaultdict(list)
    for r in records:
        if r.ess is not None:
            table[(r.benchmark, r.sampler)].append(r.ess)
    all_ok = True
    for bench in cfg.benchmarks:
        esh_mean = np.mean(table[(bench, "esh-leap(eps=0.1)")])
        rivals = {s: np.mean(table[(bench, s)]) for s in BASELINES if table.get((bench, s))}
        ok = all(esh_mean > v for v in rivals.values())
        all_ok &= ok
        detail = ", ".join(f"{s.split('(')[0]}={v:.2e}" for s, v in rivals.items())
        report(f"ess-ordering[{bench}]: {'PASS' if ok else 'FAIL'} (esh={esh_mean:.2e} vs {detail})")
    assert all_ok


# --- 6. Partition function via flow weights ----------------------------------


def test_jarzynski_logz():
    rng = np.random.default_rng(2024)
    theta = rng.uniform(0, np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    cov = rot @ np.diag(rng.uniform(0.4, 0.9, size=2)) @ rot.T
    target = esh.gaussian_energy(np.zeros(2), cov)
    base = get_benchmark("GAUSSIAN(2)")
    res = run_logz(
        target, target.log_partition, base.make_model(), base.log_partition,
        base.sample_truth, n_chains=1000, eps=0.1, n_steps=50, seed=0,
    )
    rel_final = abs(res.final_estimate - target.log_partition) / abs(target.log_partition)
    rel_t0 = abs(res.logz_est[0] - target.log_partition) / abs(target.log_partition)
    ok = rel_final <= 0.05 and rel_t0 <= 0.05 and res.error == ""
    report(
        f"jarzynski-logz: {'PASS' if ok else 'FAIL'} "
        f"(rel err {rel_final:.3%} at tbar=5, {rel_t0:.3%} at t=0, tol 5%)"
    )
    assert ok


# --- 7. Stationarity under target initialization -----------------------------


@pytest.mark.parametrize("name", ["GAUSSIAN(2)", "MOG2D"])
def test_stationarity(name):
    b = get_benchmark(name)
    _, after = stationarity_probe(b.make_model(), b.sample_truth, 500, 100, 0.1, rng_seed=0)
    ok = after <= 0.02
    report(f"stationarity[{name}]: {'PASS' if ok else 'FAIL'} (MMD^2 {after:.4f} <= 0.02)")
    assert ok, (
        f"MMD^2 {after:.4f} > 0.02 after 100 steps on {name}; the isotropic "
        "Gaussian conserves angular momentum under these dynamics (verified to "
        "1e-14), so its energy shells never mix and the unit-speed shell init "
        "cannot relax; rotation-asymmetric targets pass (see supplementary line)"
    )


def test_stationarity_supplementary_anisotropic():
    # context for the criterion above: shell-mixing Gaussians hold station
    vals = {}
    for name in ("SCG2D", "ICG50"):
        b = get_benchmark(name)
        _, after = stationarity_probe(b.make_model(), b.sample_truth, 500, 100, 0.1, rng_seed=0)
        vals[name] = after
    ok = all(v <= 0.02 for v in vals.values())
    detail = ", ".join(f"{k}={v:.4f}" for k, v in vals.items())
    report(f"stationarity[anisotropic Gaussians, supplementary]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok


# --- 8. Reservoir correctness -------------------------------------------------


def test_reservoir_exact_enumeration():
    rng = np.random.default_rng(5)
    worst = 0.0
    seqs = [[1.0], [2.0, 1.0], [0.1, 5.0, 2.0], [1.0, 1.0, 1.0, 1.0], [3.0, 0.2, 1.5, 2.0, 0.7]]
    for weights in seqs:
        probs = reservoir_selection_probs(weights)
        expected = np.asarray(weights) / np.sum(weights)
        worst = max(worst, float(np.max(np.abs(probs - expected))))
    ok = worst <= 1e-12
    report(f"reservoir[enumeration <=5]: {'PASS' if ok else 'FAIL'} (max dev {worst:.2e})")
    assert ok


def test_reservoir_monte_carlo_length_100():
    rng = np.random.default_rng(6)
    weights = rng.uniform(0.5, 2.0, size=100)
    p0 = weights[0] / weights.sum()
    trials = 100_000
    res = Reservoir(rng)
    for i in range(100):
        res.update(np.full((trials, 1), float(i)), np.full(trials, np.log(weights[i])))
    freq = np.mean(res.current[:, 0] == 0.0)
    sigma = math.sqrt(p0 * (1 - p0) / trials)
    ok = abs(freq - p0) <= 3 * sigma
    report(f"reservoir[monte-carlo n=100]: {'PASS' if ok else 'FAIL'} (|{freq:.5f} - {p0:.5f}| <= 3x{sigma:.5f})")
    assert ok


# --- 9. Metric unit suites -----------------------------------------------------


def test_mmd_bruteforce_equivalence():
    rng = np.random.default_rng(8)
    worst = 0.0
    for m, n in ((10, 12), (30, 25), (50, 40)):
        xs = rng.standard_normal((m, 3))
        ys = rng.standard_normal((n, 3)) * 1.3
        h = esh.median_bandwidth(xs, ys)
        fast = mmd2_unbiased(xs, ys, esh.MmdConfig(bandwidth=h))
        worst = max(worst, abs(fast - mmd2_bruteforce(xs, ys, h)))
    ok = worst <= 1e-12
    report(f"mmd[bruteforce oracle]: {'PASS' if ok else 'FAIL'} (max dev {worst:.2e})")
    assert ok


def test_ess_ar1_analytic():
    rng = np.random.default_rng(9)
    rho, n = 0.9, 10_000
    chains = np.empty((4, n))
    for c in range(4):
        x = np.empty(n)
        x[0] = rng.standard_normal()
        noise = rng.standard_normal(n) * math.sqrt(1 - rho**2)
        for t in range(1, n):
            x[t] = rho * x[t - 1] + noise[t]
        chains[c] = x
    got = ess_metric(chains).ess_per_sample
    expected = (1 - rho) / (1 + rho)
    ok = abs(got - expected) / expected <= 0.3
    report(f"ess[AR(1) analytic]: {'PASS' if ok else 'FAIL'} (got {got:.4f}, expect {expected:.4f} +-30%)")
    assert ok


def test_mala_hmc_gaussian_moments():
    m = esh.gaussian_energy(np.zeros(2), np.eye(2))
    rng = np.random.default_rng(10)
    results = {}
    for kind in ("mala", "hmc"):
        x = rng.standard_normal((100, 2))
        cache = None
        hist = []
        for i in range(1200):
            if kind == "mala":
                x, _, cache = esh.mala_step(x, m, 0.8, rng, cache=cache)
            else:
                x, _, cache = esh.hmc_transition(x, m, 0.5, 5, rng, cache=cache)
            if i >= 200:
                hist.append(x.copy())
        allx = np.concatenate(hist)  # 1e5 post-burn-in samples
        results[kind] = (np.abs(allx.mean(axis=0)).max(), np.abs(allx.var(axis=0) - 1).max())
    ok = all(mean_err < 0.05 and var_err < 0.1 for mean_err, var_err in results.values())
    detail = ", ".join(f"{k}: |mean|<={v[0]:.3f}, |var-1|<={v[1]:.3f}" for k, v in results.items())
    report(f"baseline-exactness[moments at 1e5]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok


# --- 10. Baseline sanity --------------------------------------------------------


def test_mala_acceptance_range():
    m = esh.gaussian_energy(np.zeros(2), np.eye(2))
    rng = np.random.default_rng(11)
    x = rng.standard_normal((200, 2))
    cache = None
    acc = total = 0
    for _ in range(500):
        x, accepted, cache = esh.mala_step(x, m, 0.1, rng, cache=cache)
        acc += accepted.sum()
        total += accepted.size
    rate = acc / total
    ok = 0.5 < rate < 1.0
    report(f"baseline-sanity[MALA acceptance]: {'PASS' if ok else 'FAIL'} (rate {rate:.4f} in (0.5, 1.0))")
    assert ok


def test_hmc_acceptance_small_step():
    m = esh.gaussian_energy(np.zeros(2), np.eye(2))
    rng = np.random.default_rng(12)
    x = rng.standard_normal((100, 2))
    cache = None
    acc = total = 0
    for _ in range(100):
        x, accepted, cache = esh.hmc_transition(x, m, 0.01, 5, rng, cache=cache)
        acc += accepted.sum()
        total += accepted.size
    rate = acc / total
    ok = rate > 0.95
    report(f"baseline-sanity[HMC acceptance]: {'PASS' if ok else 'FAIL'} (rate {rate:.4f} > 0.95)")
    assert ok


# --- 11. Determinism -------------------------------------------------------------


def test_byte_identical_csv(tmp_path):
    cfg = ExperimentConfig(
        benchmarks=("MOG2D_PRIOR",),
        samplers=(SamplerConfig("esh-leap", eps=0.1), SamplerConfig("hmc", eps=0.01, k=5)),
        n_chains=100,
        grad_budget=100,
        measure_at=(50, 100),
        seeds=(0, 1),
    )
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        emit(run_experiment(cfg)[0], "csv", str(p), cfg)
    ok = paths[0].read_bytes() == paths[1].read_bytes()
    report(f"determinism[byte-identical CSV]: {'PASS' if ok else 'FAIL'}")
    assert ok
