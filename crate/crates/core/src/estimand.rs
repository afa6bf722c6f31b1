//! Ground-truth estimands for finite-state specs.
//!
//! The long-run law under a pure history `w` is the stationary distribution
//! of the arm's kernel for homogeneous specs. For piecewise schedules it is
//! approximated by running the first regime for a pre-period from the initial
//! distribution and then propagating forward through the schedule; the
//! residual is at most `exp(-pre / t_mix)` in total variation.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{AssignmentPlan, SwitchbackDesign};
use crate::error::{Error, Result};
use crate::mdp::{push_forward, FiniteMdpSpec, Kernel, MdpSchedule, Segment, Simulator, SparseKernel};
use crate::rng::derive_seed;
use crate::stats;

/// Default residual tolerance of the stationary solve, in L1.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Default pre-period for piecewise schedules.
pub const DEFAULT_PRE_PERIOD: usize = 1000;

/// Relative singular-value threshold for counting stationary directions.
const RANK_TOL: f64 = 1e-10;

/// Stationary distribution by direct linear solve.
///
/// Solves `(P^T - I) pi = 0` with one equation replaced by `sum(pi) = 1`,
/// then applies a step of iterative refinement.
pub fn stationary_distribution(kernel: &Kernel, tol: f64) -> Result<Vec<f64>> {
    let n = kernel.size();
    let p = DMatrix::from_row_slice(n, n, kernel.as_row_major());
    let generator = p.transpose() - DMatrix::<f64>::identity(n, n);

    let sv = generator.clone().singular_values();
    let scale = sv.max().max(1.0);
    let null_dim = sv.iter().filter(|&&s| s <= RANK_TOL * scale).count();
    if null_dim > 1 {
        return Err(Error::NonErgodic(format!("{null_dim} independent stationary distributions")));
    }

    let mut system = generator;
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = system.clone().lu();
    let mut pi = lu.solve(&rhs).ok_or_else(|| Error::NonErgodic("stationary system is singular".into()))?;
    let resid = &rhs - &system * &pi;
    if let Some(corr) = lu.solve(&resid) {
        pi += corr;
    }

    let mut pi: Vec<f64> = pi.iter().map(|&x| if x < 0.0 && x > -1e-13 { 0.0 } else { x }).collect();
    if pi.iter().any(|&x| x < 0.0) {
        return Err(Error::NonErgodic("stationary solve produced negative mass".into()));
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);

    let residual = stationary_residual(&pi, kernel);
    if residual >= tol {
        return Err(Error::NonMixing(format!("stationary residual {residual:e} exceeds {tol:e}")));
    }
    Ok(pi)
}

/// `|| pi P - pi ||_1`.
pub fn stationary_residual(pi: &[f64], kernel: &Kernel) -> f64 {
    push_forward(pi, kernel).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Long-run mean outcome under the pure history `w` of a homogeneous spec.
pub fn pure_outcome_mean(spec: &FiniteMdpSpec, w: u8) -> Result<f64> {
    let pi = stationary_distribution(spec.kernel(w), STATIONARY_TOL)?;
    Ok(dot(&pi, &spec.outcome_column(w)))
}

/// Stable treatment effect of a homogeneous spec (constant in time).
pub fn stable_effect(spec: &FiniteMdpSpec) -> Result<f64> {
    Ok(pure_outcome_mean(spec, 1)? - pure_outcome_mean(spec, 0)?)
}

/// Pure-history mean outcomes `E_{L_w^t}[Y_t]` for `t = 1..=horizon`.
pub fn pure_outcome_trace(schedule: &MdpSchedule, w: u8, horizon: usize, pre_period: usize) -> Result<Vec<f64>> {
    if schedule.is_homogeneous() {
        let m = pure_outcome_mean(&schedule.segments()[0].spec, w)?;
        return Ok(vec![m; horizon]);
    }
    let first = &schedule.segments()[0].spec;
    let mut dist = schedule.initial_dist().to_vec();
    for _ in 0..pre_period {
        dist = push_forward(&dist, first.kernel(w));
    }
    let mut trace = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let regime = schedule.regime_at(t);
        trace.push(dot(&dist, &regime.outcome_column(w)));
        dist = push_forward(&dist, regime.kernel(w));
    }
    Ok(trace)
}

/// Stable effects `tau_1..tau_T`.
pub fn stable_effect_trace(schedule: &MdpSchedule, horizon: usize, pre_period: usize) -> Result<Vec<f64>> {
    let treated = pure_outcome_trace(schedule, 1, horizon, pre_period)?;
    let control = pure_outcome_trace(schedule, 0, horizon, pre_period)?;
    Ok(treated.iter().zip(&control).map(|(a, b)| a - b).collect())
}

/// Global average effect over `t = 1..=horizon`.
pub fn gate(schedule: &MdpSchedule, horizon: usize, pre_period: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    Ok(stats::mean(&stable_effect_trace(schedule, horizon, pre_period)?))
}

/// Mean of a 1-based effect trace over an index set.
pub fn fate_from_trace(trace: &[f64], index_set: &[usize]) -> Result<f64> {
    if index_set.is_empty() {
        return Err(Error::invalid("index set is empty"));
    }
    let mut total = 0.0;
    for &t in index_set {
        if t == 0 || t > trace.len() {
            return Err(Error::OutOfRange { index: t, max: trace.len() });
        }
        total += trace[t - 1];
    }
    Ok(total / index_set.len() as f64)
}

/// Filtered average effect over `index_set`.
pub fn fate(schedule: &MdpSchedule, index_set: &[usize], pre_period: usize) -> Result<f64> {
    let horizon = index_set.iter().copied().max().unwrap_or(0);
    fate_from_trace(&stable_effect_trace(schedule, horizon, pre_period)?, index_set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandReport {
    pub tau_t_trace: Vec<f64>,
    pub tau_gate: f64,
    pub tau_fate: f64,
    pub filter_set: Vec<usize>,
    /// Largest gap between any two stable effects in the trace.
    pub psi_hat: f64,
}

impl EstimandReport {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "tau_t"])?;
        for (t, tau) in self.tau_t_trace.iter().enumerate() {
            wtr.write_record([(t + 1).to_string(), tau.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// GATE over the design horizon and FATE over the design's filtered set.
pub fn estimand_report(schedule: &MdpSchedule, design: &SwitchbackDesign, pre_period: usize) -> Result<EstimandReport> {
    let trace = stable_effect_trace(schedule, design.horizon(), pre_period)?;
    let filter_set = design.filtered_index_set();
    let tau_fate = fate_from_trace(&trace, &filter_set)?;
    let (lo, hi) = trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(EstimandReport { tau_gate: stats::mean(&trace), tau_fate, psi_hat: hi - lo, tau_t_trace: trace, filter_set })
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Schedule with every segment delayed by `lag` periods; the first regime fills the gap.
fn delayed(schedule: &MdpSchedule, lag: usize) -> MdpSchedule {
    let segments = schedule
        .segments()
        .iter()
        .enumerate()
        .map(|(i, s)| Segment { start: if i == 0 { 1 } else { s.start + lag }, spec: s.spec.clone() })
        .collect();
    MdpSchedule::new(segments).expect("delay preserves ordering")
}

/// Monte Carlo estimate of the pure-history mean at period `t`.
///
/// Each replicate runs the first regime under constant `w` for `burn_steps`
/// periods before period 1 and records `Y_t`.
pub fn mc_pure_outcome_mean(
    schedule: &MdpSchedule,
    w: u8,
    t: usize,
    reps: usize,
    burn_steps: usize,
    seed: u64,
) -> Result<McEstimate> {
    if reps == 0 || t == 0 {
        return Err(Error::invalid("need reps >= 1 and t >= 1"));
    }
    let sim = Simulator::for_schedule(&delayed(schedule, burn_steps));
    let treatments = vec![w; burn_steps + t];
    let draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| sim.run(&treatments, derive_seed(seed, &[r as u64])).map(|traj| traj.outcomes[burn_steps + t - 1]))
        .collect::<Result<_>>()?;
    Ok(McEstimate { estimate: stats::mean(&draws), std_error: stats::std_error(&draws) })
}

/// Exact `E[Y_t]` for `t = 1..=T` under a fixed treatment path, by forward
/// propagation with the simulator's time-0 convention (`W_0 = W_1`).
pub fn expected_outcome_path(schedule: &MdpSchedule, treatments: &[u8]) -> Result<Vec<f64>> {
    let first = *treatments.first().ok_or_else(|| Error::invalid("treatment sequence is empty"))?;
    let sparse: Vec<[SparseKernel; 2]> = schedule
        .segments()
        .iter()
        .map(|s| [SparseKernel::new(s.spec.kernel(0)), SparseKernel::new(s.spec.kernel(1))])
        .collect();
    let columns: Vec<[Vec<f64>; 2]> =
        schedule.segments().iter().map(|s| [s.spec.outcome_column(0), s.spec.outcome_column(1)]).collect();
    let starts: Vec<usize> = schedule.segments().iter().map(|s| s.start).collect();

    let mut dist = vec![0.0; schedule.state_count()];
    sparse[0][first as usize].push_forward(schedule.initial_dist(), &mut dist);
    let mut next = dist.clone();
    let mut seg = 0;
    let mut out = Vec::with_capacity(treatments.len());
    for (idx, &w) in treatments.iter().enumerate() {
        while seg + 1 < starts.len() && starts[seg + 1] <= idx + 1 {
            seg += 1;
        }
        out.push(dot(&dist, &columns[seg][w as usize]));
        if idx + 1 < treatments.len() {
            sparse[seg][w as usize].push_forward(&dist, &mut next);
            std::mem::swap(&mut dist, &mut next);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCounterfactual {
    pub block: usize,
    /// Retained-period mean under the pure history, per arm.
    pub mu_bar: [f64; 2],
    /// Retained-period mean in the switchback with this block forced, per arm.
    pub m_bar: [f64; 2],
    pub m_bar_se: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCounterfactuals {
    pub blocks: Vec<BlockCounterfactual>,
}

impl BlockCounterfactuals {
    /// `(1/k) sum_i (mu_bar_i(1) - mu_bar_i(0))`.
    pub fn mean_pure_contrast(&self) -> f64 {
        stats::mean(&self.blocks.iter().map(|b| b.mu_bar[1] - b.mu_bar[0]).collect::<Vec<_>>())
    }
}

fn retained_block_mean(values: &[f64], design: &SwitchbackDesign, block: usize) -> f64 {
    let l = design.block_length();
    let start = (block - 1) * l;
    stats::mean(&values[start + design.burn_in()..start + l])
}

/// Per-block pure-history means (exact) and forced-block switchback means (Monte Carlo).
pub fn block_counterfactuals(
    schedule: &MdpSchedule,
    design: &SwitchbackDesign,
    plan: &AssignmentPlan,
    reps: usize,
    seed: u64,
    pre_period: usize,
) -> Result<BlockCounterfactuals> {
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if plan.block_treatments.len() != design.block_count() {
        return Err(Error::Consistency("plan and design disagree on block count".into()));
    }
    let covered = design.covered();
    let pure =
        [pure_outcome_trace(schedule, 0, covered, pre_period)?, pure_outcome_trace(schedule, 1, covered, pre_period)?];
    let sim = Simulator::for_schedule(schedule);
    let l = design.block_length();

    let blocks = (1..=design.block_count())
        .map(|i| {
            let mut m_bar = [0.0; 2];
            let mut m_bar_se = [0.0; 2];
            for w in 0..2u8 {
                let mut blocks_forced = plan.block_treatments[..i].to_vec();
                blocks_forced[i - 1] = w;
                // Later blocks cannot affect block i.
                let path: Vec<u8> = blocks_forced.iter().flat_map(|&z| std::iter::repeat_n(z, l)).collect();
                let draws: Vec<f64> = (0..reps)
                    .into_par_iter()
                    .map(|r| {
                        sim.run(&path, derive_seed(seed, &[i as u64, w as u64, r as u64]))
                            .map(|traj| retained_block_mean(&traj.outcomes, design, i))
                    })
                    .collect::<Result<_>>()?;
                m_bar[w as usize] = stats::mean(&draws);
                m_bar_se[w as usize] = stats::std_error(&draws);
            }
            let mu_bar = [retained_block_mean(&pure[0], design, i), retained_block_mean(&pure[1], design, i)];
            Ok(BlockCounterfactual { block: i, mu_bar, m_bar, m_bar_se })
        })
        .collect::<Result<_>>()?;
    Ok(BlockCounterfactuals { blocks })
}

/// Exact forced-block means `M_bar_i(w)` for every block, by forward propagation.
pub fn exact_forced_block_means(
    schedule: &MdpSchedule,
    design: &SwitchbackDesign,
    plan: &AssignmentPlan,
) -> Result<Vec<[f64; 2]>> {
    let l = design.block_length();
    (1..=design.block_count())
        .map(|i| {
            let mut out = [0.0; 2];
            for w in 0..2u8 {
                let mut blocks = plan.block_treatments[..i].to_vec();
                blocks[i - 1] = w;
                let path: Vec<u8> = blocks.iter().flat_map(|&z| std::iter::repeat_n(z, l)).collect();
                out[w as usize] = retained_block_mean(&expected_outcome_path(schedule, &path)?, design, i);
            }
            Ok(out)
        })
        .collect()
}
