//! Total-variation contraction of transition kernels.
//!
//! The Dobrushin coefficient `delta(P) = max_{i,j} TV(P(i, .), P(j, .))`
//! bounds how much one application of `P` can shrink the TV distance between
//! two distributions. For a chain with mixing time `t_mix` we have
//! `delta(P^j) <= exp(-j / t_mix)`, so every lag `j` with `delta(P^j) < 1`
//! yields a candidate `t_mix = -j / ln delta(P^j)`.

use serde::{Deserialize, Serialize};

use super::kernel::{total_variation, Kernel};
use super::spec::{FiniteMdpSpec, MdpSchedule};
use crate::error::{Error, Result};

/// Coefficients below this are rounding noise and are not used for fitting.
pub const DELTA_FLOOR: f64 = 1e-10;

/// Coefficients within this of 1 count as non-contracting (round-off in `P^j`).
pub const CONTRACTION_TOL: f64 = 1e-12;

/// Default largest lag examined when fitting a mixing time.
pub const DEFAULT_MAX_LAG: usize = 200;

pub fn dobrushin_coefficient(kernel: &Kernel) -> f64 {
    let n = kernel.size();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max(total_variation(kernel.row(i), kernel.row(j)));
        }
    }
    worst.min(1.0)
}

/// Dobrushin coefficients of `kernel^j` for `j = 1..=max_lag`.
pub fn contraction_profile(kernel: &Kernel, max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 {
        return Err(Error::invalid("max_lag must be at least 1"));
    }
    let mut power = kernel.clone();
    let mut profile = Vec::with_capacity(max_lag);
    profile.push(dobrushin_coefficient(&power));
    for _ in 1..max_lag {
        power = power.compose(kernel)?;
        profile.push(dobrushin_coefficient(&power));
    }
    Ok(profile)
}

/// Mixing summary for one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMixing {
    pub action: u8,
    pub profile: Vec<f64>,
    /// First lag with `delta < 1`, if any.
    pub first_contracting_lag: Option<usize>,
    pub t_mix: f64,
}

/// Mixing summary over both actions; `t_mix` is the worse of the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub actions: Vec<ActionMixing>,
    pub t_mix: f64,
}

/// Fits `t_mix` from a contraction profile: the smallest `-j / ln delta(j)`
/// over lags with `DELTA_FLOOR < delta(j) < 1 - CONTRACTION_TOL`. A profile that is exactly 0
/// at lag 1 mixes in one step and gets `t_mix = 0`.
pub fn fit_mixing_time(profile: &[f64]) -> Option<f64> {
    if profile.first() == Some(&0.0) {
        return Some(0.0);
    }
    profile
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > DELTA_FLOOR && d < 1.0 - CONTRACTION_TOL)
        .map(|(i, &d)| -((i + 1) as f64) / d.ln())
        .min_by(f64::total_cmp)
        .or_else(|| {
            // Collapsed below the floor in one go: fall back to the first lag at the floor.
            profile.iter().position(|&d| d <= DELTA_FLOOR).map(|i| -((i + 1) as f64) / DELTA_FLOOR.ln())
        })
}

fn action_mixing(kernel: &Kernel, action: u8, max_lag: usize) -> Result<ActionMixing> {
    let profile = contraction_profile(kernel, max_lag)?;
    let first_contracting_lag = profile.iter().position(|&d| d < 1.0 - CONTRACTION_TOL).map(|i| i + 1);
    let t_mix = fit_mixing_time(&profile).ok_or_else(|| {
        Error::NonMixing(format!("action {action}: no lag up to {max_lag} contracts in total variation"))
    })?;
    Ok(ActionMixing { action, profile, first_contracting_lag, t_mix })
}

/// Fitted mixing time of a spec, worst case over actions.
pub fn estimate_mixing_time(spec: &FiniteMdpSpec, max_lag: usize) -> Result<MixingReport> {
    let actions = vec![action_mixing(spec.kernel(0), 0, max_lag)?, action_mixing(spec.kernel(1), 1, max_lag)?];
    let t_mix = actions.iter().map(|a| a.t_mix).fold(0.0, f64::max);
    Ok(MixingReport { actions, t_mix })
}

/// Worst fitted mixing time over every regime of a schedule.
pub fn estimate_schedule_mixing_time(schedule: &MdpSchedule, max_lag: usize) -> Result<f64> {
    schedule
        .segments()
        .iter()
        .map(|s| estimate_mixing_time(&s.spec, max_lag).map(|r| r.t_mix))
        .try_fold(0.0, |acc, t| t.map(|t| f64::max(acc, t)))
}
