//! Finite-state controlled Markov chains: specs, simulation and mixing.

mod kernel;
mod mixing;
mod simulate;
mod spec;

pub use kernel::{check_distribution, step_distribution, total_variation, Kernel, STOCHASTIC_TOL};
pub(crate) use kernel::{push_forward, SparseKernel};
pub use mixing::{
    contraction_profile, dobrushin_coefficient, estimate_mixing_time, estimate_schedule_mixing_time, fit_mixing_time,
    ActionMixing, MixingReport, CONTRACTION_TOL, DEFAULT_MAX_LAG, DELTA_FLOOR,
};
pub use simulate::{simulate_trajectory, Simulator, Trajectory};
pub use spec::{build_benchmark, BenchmarkParams, FiniteMdpSpec, MdpSchedule, NoiseLaw, Segment, SpecRepr};
