"""Energy-sampling Hamiltonian dynamics with baselines, metrics and a harness."""

from .energy import (
    Benchmark,
    EnergyModel,
    FunnelEnergy,
    GaussianEnergy,
    MixtureGaussianEnergy,
    check_gradient,
    funnel_energy,
    gaussian_energy,
    get_benchmark,
    mog2d_energy,
)
from .integrators import (
    DivergenceError,
    PhaseState,
    ScaledState,
    SingularityError,
    Trajectory,
    conservation_drift,
    hamiltonian,
    integrate,
    original_leapfrog_step,
    r_update,
    scaled_leapfrog_step,
    time_rescale,
    u_update,
)
from .metrics import EssResult, MmdConfig, ess, median_bandwidth, mmd2_unbiased
from .sampling import (
    Reservoir,
    WeightedSample,
    ergodic_sample,
    estimate_log_partition,
    jarzynski_log_weights,
    jarzynski_weights,
    self_normalized,
    stationarity_probe,
    weight_ess,
)
from .baselines import BaselineConfig, hmc_transition, mala_step, ula_step
from .harness import ExperimentConfig, RunRecord, SamplerConfig, run_experiment, run_logz

__all__ = [name for name in dir() if not name.startswith("_")]
