//! Bias and variance bounds for the difference-in-means estimator, the
//! rate-optimal design rules built on them, and log-log rate fitting.
//!
//! All bounds are written in terms of the one-step contraction factor
//! `rho = exp(-1 / t_mix)`, with `rho = 0` when `t_mix = 0`, so that
//! `exp(-b / t_mix) = rho^b` stays finite at both ends.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};
use crate::estimand;
use crate::mdp::{estimate_schedule_mixing_time, MdpSchedule, NoiseLaw};
use crate::stats;

/// Which estimand an experiment targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Average effect over the whole horizon.
    Gate,
    /// Average effect over the non-burn-in periods.
    Fate,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Gate => "gate",
            Target::Fate => "fate",
        }
    }

    /// Label mixed into replicate seeds.
    pub fn label(&self) -> u64 {
        match self {
            Target::Gate => 0,
            Target::Fate => 1,
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gate" => Ok(Target::Gate),
            "fate" => Ok(Target::Fate),
            other => Err(Error::invalid(format!("unknown target {other:?}, expected gate or fate"))),
        }
    }
}

/// Model constants entering the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBounds {
    /// Bound on `|mu(S_t, W_t)|`.
    pub lambda: f64,
    /// Bound on `|tau_t - tau_s|`.
    #[serde(default)]
    pub psi: f64,
    pub sigma_sq: f64,
    pub t_mix: f64,
    /// Lower bound on the conditional noise variance.
    #[serde(default)]
    pub sigma0_sq: f64,
    /// Bound on `|Y_t|`; absent when outcomes are unbounded.
    #[serde(default)]
    pub gamma0: Option<f64>,
    /// Offset of the burn-in rule for the filtered target.
    #[serde(default)]
    pub c_star: f64,
}

impl ModelBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("psi", self.psi),
            ("sigma_sq", self.sigma_sq),
            ("t_mix", self.t_mix),
            ("sigma0_sq", self.sigma0_sq),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if let Some(g) = self.gamma0 {
            if g.is_nan() || g < 0.0 {
                return Err(Error::invalid("gamma0 must be >= 0"));
            }
        }
        if !self.c_star.is_finite() {
            return Err(Error::invalid("c_star must be finite"));
        }
        Ok(())
    }

    /// One-step contraction factor `exp(-1 / t_mix)`.
    pub fn rho(&self) -> f64 {
        contraction_factor(self.t_mix)
    }

    /// `exp(-b / t_mix)`.
    pub fn decay(&self, b: usize) -> f64 {
        if self.t_mix == 0.0 {
            if b == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (-(b as f64) / self.t_mix).exp()
        }
    }
}

impl ModelBounds {
    /// Constants read off a schedule: `Lambda` from the outcome table, `Psi`
    /// from the effect trace over `horizon`, noise bounds from the regimes and
    /// `t_mix` fitted from contraction profiles.
    pub fn from_schedule(
        schedule: &MdpSchedule,
        horizon: usize,
        max_lag: usize,
        c_star: f64,
        pre_period: usize,
    ) -> Result<Self> {
        let lambda = schedule.outcome_bound();
        let psi = if schedule.is_homogeneous() {
            0.0
        } else {
            let trace = estimand::stable_effect_trace(schedule, horizon.max(1), pre_period)?;
            let (lo, hi) = trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            hi - lo
        };
        let sds: Vec<f64> = schedule.segments().iter().map(|s| s.spec.noise_sd()).collect();
        let sd_max = sds.iter().copied().fold(0.0, f64::max);
        let sd_min = sds.iter().copied().fold(f64::INFINITY, f64::min);
        let bounded =
            schedule.segments().iter().all(|s| s.spec.noise_law() == NoiseLaw::Uniform || s.spec.noise_sd() == 0.0);
        let gamma0 = bounded.then(|| lambda + 3f64.sqrt() * sd_max);
        let t_mix = estimate_schedule_mixing_time(schedule, max_lag)?;
        let mb =
            ModelBounds { lambda, psi, sigma_sq: sd_max * sd_max, t_mix, sigma0_sq: sd_min * sd_min, gamma0, c_star };
        mb.validate()?;
        Ok(mb)
    }
}

fn contraction_factor(t_mix: f64) -> f64 {
    if t_mix == 0.0 {
        0.0
    } else {
        (-1.0 / t_mix).exp()
    }
}

fn check_lb(l: usize, b: usize) -> Result<()> {
    if l <= b {
        return Err(Error::invalid(format!("block length {l} must exceed burn-in {b}")));
    }
    Ok(())
}

/// Residual-carryover bias: `4 Lambda / (1 - rho) * exp(-b / t_mix) / (l - b)`.
pub fn mixing_bias_bound(mb: &ModelBounds, l: usize, b: usize) -> Result<f64> {
    check_lb(l, b)?;
    Ok(4.0 * mb.lambda / (1.0 - mb.rho()) * mb.decay(b) / (l - b) as f64)
}

/// Cost of ignoring burn-in periods when targeting the full horizon: `Psi b / l`.
pub fn burnin_bias_bound(mb: &ModelBounds, l: usize, b: usize) -> Result<f64> {
    check_lb(l, b)?;
    Ok(mb.psi * b as f64 / l as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceTerms {
    pub clustering: f64,
    pub noise: f64,
    pub carryover: f64,
    pub total: f64,
}

/// Leading variance terms; the `O(1/k^2)` and `O(2^-k)` remainders are not included.
pub fn variance_bound(mb: &ModelBounds, k: usize, l: usize, b: usize) -> Result<VarianceTerms> {
    check_lb(l, b)?;
    if k == 0 {
        return Err(Error::invalid("block count must be positive"));
    }
    let (k, kept) = (k as f64, (l - b) as f64);
    let lam2 = mb.lambda * mb.lambda;
    let clustering = 12.0 * lam2 / k;
    let noise = 4.0 * mb.sigma_sq / (k * kept);
    let carryover = 16.0 * lam2 * mb.decay(b) / (1.0 - mb.rho()).powi(2) / (k * kept * kept);
    Ok(VarianceTerms { clustering, noise, carryover, total: clustering + noise + carryover })
}

/// A recommended design: the real-valued optimum and its integer rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignChoice {
    pub l_star: f64,
    pub b_star: f64,
    pub l: usize,
    pub b: usize,
}

/// Nearest integer, ties toward the smaller value.
fn round_half_down(x: f64) -> f64 {
    let f = x.floor();
    if x - f > 0.5 {
        f + 1.0
    } else {
        f
    }
}

/// Block length `(4/3)^(1/3) (1 - rho)^(-2/3) T^(1/3)` with no burn-in.
pub fn optimal_design_gate(horizon: usize, t_mix: f64) -> Result<DesignChoice> {
    if horizon < 2 {
        return Err(Error::invalid("horizon must be at least 2"));
    }
    if !(t_mix.is_finite() && t_mix >= 0.0) {
        return Err(Error::invalid("t_mix must be finite and >= 0"));
    }
    let rho = contraction_factor(t_mix);
    let l_star = (4.0f64 / 3.0).cbrt() * (1.0 - rho).powf(-2.0 / 3.0) * (horizon as f64).cbrt();
    let l = (round_half_down(l_star) as usize).clamp(2, horizon);
    Ok(DesignChoice { l_star, b_star: 0.0, l, b: 0 })
}

/// Burn-in `(t_mix / 2) ln T + C*` and block length `b + sigma^2 / (3 Lambda^2)`.
pub fn optimal_design_fate(horizon: usize, mb: &ModelBounds) -> Result<DesignChoice> {
    mb.validate()?;
    if horizon < 2 {
        return Err(Error::invalid("horizon must be at least 2"));
    }
    if mb.lambda <= 0.0 {
        return Err(Error::invalid("lambda must be positive"));
    }
    let b_star = mb.t_mix / 2.0 * (horizon as f64).ln() + mb.c_star;
    let l_star = b_star + mb.sigma_sq / (3.0 * mb.lambda * mb.lambda);
    let b = round_half_down(b_star).max(0.0) as usize;
    let l = (round_half_down(l_star).max(0.0) as usize).max(b + 1).max(2);
    if l > horizon {
        return Err(Error::invalid(format!("recommended block length {l} exceeds horizon {horizon}")));
    }
    Ok(DesignChoice { l_star, b_star, l, b })
}

/// Every bound component for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub target: Target,
    pub mixing_bias: f64,
    pub burnin_bias: f64,
    pub var_clustering: f64,
    pub var_noise: f64,
    pub var_carryover: f64,
    pub var_total: f64,
    pub mse_bound_gate: f64,
    pub mse_bound_fate: f64,
    /// The bound for `target`.
    pub mse_bound: f64,
    pub excluded_terms: Vec<String>,
}

pub fn mse_bound(mb: &ModelBounds, design: &SwitchbackDesign, target: Target) -> Result<BoundsReport> {
    mb.validate()?;
    let (l, b, k) = (design.block_length(), design.burn_in(), design.block_count());
    let mixing_bias = mixing_bias_bound(mb, l, b)?;
    let burnin_bias = burnin_bias_bound(mb, l, b)?;
    let var = variance_bound(mb, k, l, b)?;
    let mse_bound_fate = mixing_bias.powi(2) + var.total;
    let mse_bound_gate = (mixing_bias + burnin_bias).powi(2) + var.total;
    Ok(BoundsReport {
        target,
        mixing_bias,
        burnin_bias,
        var_clustering: var.clustering,
        var_noise: var.noise,
        var_carryover: var.carryover,
        var_total: var.total,
        mse_bound_gate,
        mse_bound_fate,
        mse_bound: match target {
            Target::Gate => mse_bound_gate,
            Target::Fate => mse_bound_fate,
        },
        excluded_terms: vec!["bias O(2^-k)".into(), "variance O(1/k^2)".into(), "variance O(2^-k)".into()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// OLS of `ln mse` on `ln T`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(t, m)| !(*t > 0.0 && *m > 0.0 && t.is_finite() && m.is_finite())) {
        return Err(Error::invalid(format!("rate points must be positive and finite, got {p:?}")));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r_squared) = stats::ols(&x, &y);
    Ok(RateFit { slope, intercept, r_squared })
}

/// Bound components at the recommended design for each horizon, as CSV rows
/// `T,l,b,component,value`.
pub fn write_bound_curve<W: Write>(out: W, mb: &ModelBounds, target: Target, horizons: &[usize]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["T", "l", "b", "component", "value"])?;
    for &horizon in horizons {
        let choice = match target {
            Target::Gate => optimal_design_gate(horizon, mb.t_mix)?,
            Target::Fate => optimal_design_fate(horizon, mb)?,
        };
        let design = SwitchbackDesign::lenient(horizon, choice.l, choice.b)?;
        let r = mse_bound(mb, &design, target)?;
        for (name, value) in [
            ("mixing_bias", r.mixing_bias),
            ("burnin_bias", r.burnin_bias),
            ("var_clustering", r.var_clustering),
            ("var_noise", r.var_noise),
            ("var_carryover", r.var_carryover),
            ("var_total", r.var_total),
            ("mse_bound", r.mse_bound),
        ] {
            wtr.write_record([
                horizon.to_string(),
                choice.l.to_string(),
                choice.b.to_string(),
                name.to_string(),
                value.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
