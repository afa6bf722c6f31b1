//! Monte Carlo experiments over grids of switchback designs.
//!
//! Each replicate runs assign -> simulate -> estimate with a seed derived from
//! `(master_seed, T, l, b, target, rep)`. Replicates are computed in parallel
//! and aggregated in replicate order, so results do not depend on the thread
//! count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{fit_rate, RateFit, Target};
use crate::design::{assign, SwitchbackDesign};
use crate::error::{Error, Result};
use crate::estimand::{self, expected_outcome_path, pure_outcome_trace, DEFAULT_PRE_PERIOD};
use crate::estimator::{block_means_of, dm_from_outcomes, DmParts};
use crate::mdp::{MdpSchedule, Simulator};
use crate::rng::derive_seed;
use crate::stats;

/// Minimum replicate count for CLT diagnostics.
pub const MIN_CLT_REPS: usize = 100;

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Design axis of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DesignGrid {
    /// Several block lengths sharing one burn-in.
    BlockLengths { block_lengths: Vec<usize>, burn_in: usize },
    /// Several burn-ins with `l = b + gap`.
    BurnIns { burn_ins: Vec<usize>, gap: usize },
    /// Explicit `(l, b)` pairs.
    Pairs { pairs: Vec<(usize, usize)> },
}

impl DesignGrid {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        match self {
            DesignGrid::BlockLengths { block_lengths, burn_in } => {
                block_lengths.iter().map(|&l| (l, *burn_in)).collect()
            }
            DesignGrid::BurnIns { burn_ins, gap } => burn_ins.iter().map(|&b| (b + gap, b)).collect(),
            DesignGrid::Pairs { pairs } => pairs.clone(),
        }
    }
}

fn default_reps() -> usize {
    400
}

fn default_parallelism() -> usize {
    1
}

fn default_pre_period() -> usize {
    DEFAULT_PRE_PERIOD
}

/// Everything a grid run needs besides the system spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: Target,
    pub horizons: Vec<usize>,
    pub designs: DesignGrid,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; results are identical for every width.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Reject horizons that are not a multiple of the block length.
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_pre_period")]
    pub pre_period: usize,
}

impl ExperimentConfig {
    /// All cells in grid order (horizon-major), validated up front.
    pub fn cells(&self) -> Result<Vec<SwitchbackDesign>> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.horizons.is_empty() {
            return Err(Error::invalid("grid has no horizons"));
        }
        let pairs = self.designs.pairs();
        if pairs.is_empty() {
            return Err(Error::invalid("grid has no designs"));
        }
        let mut cells = Vec::with_capacity(self.horizons.len() * pairs.len());
        for &horizon in &self.horizons {
            for &(l, b) in &pairs {
                let d = if self.strict {
                    SwitchbackDesign::new(horizon, l, b)
                } else {
                    SwitchbackDesign::lenient(horizon, l, b)
                }
                .map_err(|e| Error::invalid(format!("cell (T={horizon}, l={l}, b={b}): {e}")))?;
                cells.push(d);
            }
        }
        Ok(cells)
    }
}

/// Aggregate of one design cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub target: Target,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub l: usize,
    pub b: usize,
    pub reps: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Replicate variance with the `n - 1` denominator.
    pub variance: f64,
    /// Mean squared error against the truth.
    pub mse: f64,
    pub mc_se_of_mse: f64,
    /// Standard error of the replicate mean.
    pub bias_se: f64,
    /// Bootstrap standard error of `variance`.
    pub variance_se: f64,
    pub degenerate_count: usize,
}

const CELL_HEADER: [&str; 14] = [
    "target",
    "T",
    "l",
    "b",
    "reps",
    "truth",
    "mean_estimate",
    "bias",
    "variance",
    "mse",
    "mc_se_of_mse",
    "bias_se",
    "variance_se",
    "degenerate_count",
];

impl CellResult {
    fn record(&self) -> Vec<String> {
        vec![
            self.target.as_str().to_string(),
            self.horizon.to_string(),
            self.l.to_string(),
            self.b.to_string(),
            self.reps.to_string(),
            self.truth.to_string(),
            self.mean_estimate.to_string(),
            self.bias.to_string(),
            self.variance.to_string(),
            self.mse.to_string(),
            self.mc_se_of_mse.to_string(),
            self.bias_se.to_string(),
            self.variance_se.to_string(),
            self.degenerate_count.to_string(),
        ]
    }
}

/// Best cell for one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub l: usize,
    pub b: usize,
    pub mse: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub target: Target,
    pub cells: Vec<CellResult>,
    pub envelope: Vec<EnvelopePoint>,
}

impl GridResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(CELL_HEADER)?;
        for c in &self.cells {
            wtr.write_record(c.record())?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_envelope_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["target", "T", "l", "b", "mse", "mc_se"])?;
        for e in &self.envelope {
            wtr.write_record([
                self.target.as_str().to_string(),
                e.horizon.to_string(),
                e.l.to_string(),
                e.b.to_string(),
                e.mse.to_string(),
                e.mc_se.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Log-log fit of the envelope MSE against the horizon.
    pub fn envelope_rate(&self) -> Result<RateFit> {
        fit_rate(&self.envelope.iter().map(|e| (e.horizon as f64, e.mse)).collect::<Vec<_>>())
    }
}

/// Minimum-MSE cell per horizon; ties keep the earliest cell in grid order.
pub fn envelope(cells: &[CellResult]) -> Vec<EnvelopePoint> {
    let mut best: BTreeMap<usize, &CellResult> = BTreeMap::new();
    for c in cells {
        best.entry(c.horizon)
            .and_modify(|cur| {
                if c.mse < cur.mse {
                    *cur = c;
                }
            })
            .or_insert(c);
    }
    best.values()
        .map(|c| EnvelopePoint { horizon: c.horizon, l: c.l, b: c.b, mse: c.mse, mc_se: c.mc_se_of_mse })
        .collect()
}

/// One replicate's raw output.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub tau_hat: f64,
    pub k1: usize,
    pub k0: usize,
    pub block_treatments: Vec<u8>,
    pub block_means: Vec<f64>,
}

impl Replicate {
    pub fn degenerate(&self) -> bool {
        self.k1 == 0 || self.k0 == 0
    }
}

/// A spec bound to an experiment configuration.
pub struct Experiment {
    schedule: MdpSchedule,
    config: ExperimentConfig,
    simulator: Simulator,
    pool: rayon::ThreadPool,
}

impl Experiment {
    pub fn new(schedule: MdpSchedule, config: ExperimentConfig) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
        let simulator = Simulator::for_schedule(&schedule);
        Ok(Experiment { schedule, config, simulator, pool })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn schedule(&self) -> &MdpSchedule {
        &self.schedule
    }

    /// Estimand a cell is scored against: the effect averaged over the
    /// covered periods for the full-horizon target, or over the cell's own
    /// filtered set otherwise.
    pub fn truth(&self, design: &SwitchbackDesign) -> Result<f64> {
        let pre = self.config.pre_period;
        match self.config.target {
            Target::Gate => estimand::gate(&self.schedule, design.covered(), pre),
            Target::Fate => estimand::fate(&self.schedule, &design.filtered_index_set(), pre),
        }
    }

    fn replicate_seed(&self, design: &SwitchbackDesign, rep: usize) -> u64 {
        derive_seed(
            self.config.master_seed,
            &[
                design.horizon() as u64,
                design.block_length() as u64,
                design.burn_in() as u64,
                self.config.target.label(),
                rep as u64,
            ],
        )
    }

    fn run_one(
        &self,
        design: &SwitchbackDesign,
        rep: usize,
        keep_blocks: bool,
    ) -> Result<(DmParts, Option<Replicate>)> {
        let seed = self.replicate_seed(design, rep);
        let plan = assign(design, derive_seed(seed, &[0]));
        let traj = self.simulator.run(&plan.treatments, derive_seed(seed, &[1]))?;
        let parts = dm_from_outcomes(&traj.outcomes, &plan.block_treatments, design);
        let full = keep_blocks.then(|| Replicate {
            tau_hat: parts.tau_hat,
            k1: parts.k1,
            k0: parts.k0,
            block_means: block_means_of(&traj.outcomes, design),
            block_treatments: plan.block_treatments,
        });
        Ok((parts, full))
    }

    /// Full replicate records for a cell, in replicate order.
    pub fn replicates(&self, design: &SwitchbackDesign) -> Result<Vec<Replicate>> {
        self.pool.install(|| {
            (0..self.config.reps)
                .into_par_iter()
                .map(|r| self.run_one(design, r, true).map(|(_, full)| full.expect("kept")))
                .collect()
        })
    }

    /// Runs every replicate of a cell and aggregates against `truth`.
    pub fn run_cell(&self, design: &SwitchbackDesign, truth: f64) -> Result<CellResult> {
        let parts: Vec<DmParts> = self.pool.install(|| {
            (0..self.config.reps)
                .into_par_iter()
                .map(|r| self.run_one(design, r, false).map(|(p, _)| p))
                .collect::<Result<_>>()
        })?;
        let estimates: Vec<f64> = parts.iter().map(|p| p.tau_hat).collect();
        let degenerate = parts.iter().filter(|p| p.degenerate()).count();
        let boot_seed = derive_seed(self.replicate_seed(design, usize::MAX), &[2]);
        Ok(aggregate(self.config.target, design, &estimates, truth, degenerate, boot_seed))
    }

    /// Runs the whole grid. All cells are validated before any simulation.
    pub fn run_grid(&self) -> Result<GridResult> {
        let cells = self.config.cells()?;
        let truths = cells.iter().map(|d| self.truth(d)).collect::<Result<Vec<_>>>()?;
        let results = cells.iter().zip(truths).map(|(d, truth)| self.run_cell(d, truth)).collect::<Result<Vec<_>>>()?;
        Ok(GridResult { target: self.config.target, envelope: envelope(&results), cells: results })
    }

    /// Normal-approximation diagnostics for one cell against its filtered-set truth.
    pub fn clt_check(&self, design: &SwitchbackDesign) -> Result<CltDiagnostics> {
        if self.config.reps < MIN_CLT_REPS {
            return Err(Error::InsufficientReplicates { required: MIN_CLT_REPS, got: self.config.reps });
        }
        let pre = self.config.pre_period;
        let truth = estimand::fate(&self.schedule, &design.filtered_index_set(), pre)?;
        let reps = self.replicates(design)?;
        let estimates: Vec<f64> = reps.iter().map(|r| r.tau_hat).collect();
        let mut diag = clt_diagnostics(&estimates, truth, design.block_count())?;

        // Block-level pure-history means give the between-block variance parts.
        let covered = design.covered();
        let pure = [
            pure_outcome_trace(&self.schedule, 0, covered, pre)?,
            pure_outcome_trace(&self.schedule, 1, covered, pre)?,
        ];
        let mu_bar: [Vec<f64>; 2] = [block_means_of(&pure[0], design), block_means_of(&pure[1], design)];
        let (v0, v1, v01) = block_spread(&mu_bar[0], &mu_bar[1]);

        // Noise part: realized block means minus their exact expectation given the plan.
        let k = design.block_count() as f64;
        let l = design.block_length();
        let sq: Vec<f64> = self.pool.install(|| {
            reps.par_iter()
                .map(|r| {
                    let path: Vec<u8> = r.block_treatments.iter().flat_map(|&z| std::iter::repeat_n(z, l)).collect();
                    let expected = block_means_of(&expected_outcome_path(&self.schedule, &path)?, design);
                    let s: f64 = r
                        .block_means
                        .iter()
                        .zip(&expected)
                        .zip(&r.block_treatments)
                        .map(|((y, m), &z)| if z == 1 { 2.0 * (y - m) } else { -2.0 * (y - m) })
                        .sum();
                    Ok((s / k.sqrt()).powi(2))
                })
                .collect::<Result<_>>()
        })?;
        let sigma = stats::mean(&sq);
        diag.v0 = v0;
        diag.v1 = v1;
        diag.v01 = v01;
        diag.sigma = sigma;
        diag.v_total = v0 + v1 + 2.0 * v01 + sigma;
        Ok(diag)
    }
}

fn block_spread(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let n = a.len() as f64;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    (va, vb, cov)
}

/// Aggregates replicate estimates into a cell summary.
pub fn aggregate(
    target: Target,
    design: &SwitchbackDesign,
    estimates: &[f64],
    truth: f64,
    degenerate_count: usize,
    bootstrap_seed: u64,
) -> CellResult {
    let reps = estimates.len();
    let mean_estimate = stats::mean(estimates);
    let sq_err: Vec<f64> = estimates.iter().map(|e| (e - truth).powi(2)).collect();
    CellResult {
        target,
        horizon: design.horizon(),
        l: design.block_length(),
        b: design.burn_in(),
        reps,
        truth,
        mean_estimate,
        bias: mean_estimate - truth,
        variance: stats::sample_variance(estimates),
        mse: stats::mean(&sq_err),
        mc_se_of_mse: if reps >= 2 { stats::std_error(&sq_err) } else { 0.0 },
        bias_se: if reps >= 2 { stats::std_error(estimates) } else { 0.0 },
        variance_se: stats::bootstrap_variance_se(estimates, BOOTSTRAP_RESAMPLES, bootstrap_seed),
        degenerate_count,
    }
}

/// Normal-approximation diagnostics of replicate estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltDiagnostics {
    pub reps: usize,
    pub k: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    /// `(tau_hat - truth) / sd` per replicate; equal to `sqrt(k)(tau_hat - truth)`
    /// scaled by the replicate SD of `sqrt(k) tau_hat`.
    pub standardized: Vec<f64>,
    pub coverage_90: f64,
    pub coverage_95: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_distance: f64,
    /// `k` times the replicate variance of the estimate.
    pub scaled_variance: f64,
    pub v0: f64,
    pub v1: f64,
    pub v01: f64,
    pub sigma: f64,
    pub v_total: f64,
}

/// Coverage, moments and KS distance from replicate estimates alone.
pub fn clt_diagnostics(estimates: &[f64], truth: f64, k: usize) -> Result<CltDiagnostics> {
    if estimates.len() < MIN_CLT_REPS {
        return Err(Error::InsufficientReplicates { required: MIN_CLT_REPS, got: estimates.len() });
    }
    let sd = stats::sample_variance(estimates).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::invalid("replicate estimates have zero spread"));
    }
    let standardized: Vec<f64> = estimates.iter().map(|e| (e - truth) / sd).collect();
    let coverage = |level: f64| {
        let z = stats::standard_normal_quantile(0.5 + level / 2.0);
        standardized.iter().filter(|s| s.abs() <= z).count() as f64 / standardized.len() as f64
    };
    Ok(CltDiagnostics {
        reps: estimates.len(),
        k,
        truth,
        mean_estimate: stats::mean(estimates),
        sd_estimate: sd,
        coverage_90: coverage(0.90),
        coverage_95: coverage(0.95),
        skewness: stats::skewness(&standardized),
        excess_kurtosis: stats::excess_kurtosis(&standardized),
        ks_distance: stats::ks_distance_to_normal(&standardized),
        scaled_variance: k as f64 * sd * sd,
        standardized,
        v0: 0.0,
        v1: 0.0,
        v01: 0.0,
        sigma: 0.0,
        v_total: 0.0,
    })
}

/// Plot-ready rows: every cell with its envelope flag, reference curves
/// anchored at the first envelope point, and the fitted envelope slope.
pub fn emit_plot_data<W: Write>(out: W, results: &[GridResult]) -> Result<()> {
    if results.is_empty() || results.iter().all(|r| r.cells.is_empty()) {
        return Err(Error::invalid("no grid results to emit"));
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "target",
        "T",
        "l",
        "b",
        "mse",
        "mc_se",
        "envelope",
        "ref_t_pow_neg_2_3",
        "ref_log_t_over_t",
        "envelope_slope",
        "envelope_intercept",
    ])?;
    for result in results {
        let Some(anchor) = result.envelope.first() else { continue };
        let t0 = anchor.horizon as f64;
        let fit = result.envelope_rate().ok();
        let (slope, intercept) =
            fit.map_or((String::new(), String::new()), |f| (f.slope.to_string(), f.intercept.to_string()));
        for c in &result.cells {
            let t = c.horizon as f64;
            let on_envelope = result.envelope.iter().any(|e| e.horizon == c.horizon && e.l == c.l && e.b == c.b);
            let ref_pow = anchor.mse * (t / t0).powf(-2.0 / 3.0);
            let ref_log = anchor.mse * (t.ln() / t) / (t0.ln() / t0);
            wtr.write_record([
                result.target.as_str().to_string(),
                c.horizon.to_string(),
                c.l.to_string(),
                c.b.to_string(),
                c.mse.to_string(),
                c.mc_se_of_mse.to_string(),
                on_envelope.to_string(),
                ref_pow.to_string(),
                ref_log.to_string(),
                slope.clone(),
                intercept.clone(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_benchmark, BenchmarkParams, FiniteMdpSpec};
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn config(target: Target, horizons: Vec<usize>, designs: DesignGrid, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            target,
            horizons,
            designs,
            reps,
            master_seed: 2024,
            parallelism: 1,
            strict: false,
            pre_period: DEFAULT_PRE_PERIOD,
        }
    }

    fn null_spec(sd: f64) -> FiniteMdpSpec {
        let b = build_benchmark(&BenchmarkParams::default()).unwrap();
        let mu: Vec<[f64; 2]> = b.outcome_table().iter().map(|m| [m[0], m[0]]).collect();
        FiniteMdpSpec::new(b.kernel(0).clone(), b.kernel(0).clone(), mu, sd, b.initial_dist().to_vec()).unwrap()
    }

    #[test]
    fn noiseless_null_has_zero_error() {
        // Identical arms and no noise: the treatment changes nothing, so
        // both arm means share one sample path law; use constant means.
        let b = build_benchmark(&BenchmarkParams::default()).unwrap();
        let spec = FiniteMdpSpec::new(
            b.kernel(0).clone(),
            b.kernel(0).clone(),
            vec![[2.0, 2.0]; 33],
            0.0,
            b.initial_dist().to_vec(),
        )
        .unwrap();
        let exp = Experiment::new(
            spec.into(),
            config(Target::Gate, vec![200], DesignGrid::Pairs { pairs: vec![(20, 0)] }, 50),
        )
        .unwrap();
        let d = SwitchbackDesign::new(200, 20, 0).unwrap();
        let truth = exp.truth(&d).unwrap();
        assert_eq!(truth, 0.0);
        let c = exp.run_cell(&d, truth).unwrap();
        assert_eq!(c.mse, 0.0);
        assert_eq!(c.bias, 0.0);
    }

    #[test]
    fn cell_is_deterministic_across_widths() {
        let spec = build_benchmark(&BenchmarkParams::default()).unwrap();
        let mut cfg = config(Target::Fate, vec![400], DesignGrid::BurnIns { burn_ins: vec![5], gap: 15 }, 40);
        let d = SwitchbackDesign::new(400, 20, 5).unwrap();
        let a = Experiment::new(spec.clone().into(), cfg.clone()).unwrap();
        let ra = a.run_cell(&d, 1.0).unwrap();
        cfg.parallelism = 4;
        let b = Experiment::new(spec.into(), cfg).unwrap();
        assert_eq!(ra, b.run_cell(&d, 1.0).unwrap());
        assert_eq!(ra, a.run_cell(&d, 1.0).unwrap());
    }

    #[test]
    fn mse_decomposition_holds() {
        let spec = build_benchmark(&BenchmarkParams::default()).unwrap();
        let exp = Experiment::new(
            spec.into(),
            config(Target::Gate, vec![800], DesignGrid::Pairs { pairs: vec![(40, 0)] }, 120),
        )
        .unwrap();
        let d = SwitchbackDesign::new(800, 40, 0).unwrap();
        let c = exp.run_cell(&d, exp.truth(&d).unwrap()).unwrap();
        let n = c.reps as f64;
        assert!((c.mse - (c.bias.powi(2) + c.variance * (n - 1.0) / n)).abs() < 1e-10);
        assert!(c.mc_se_of_mse > 0.0);
    }

    #[test]
    fn degenerate_frequency_matches_binomial() {
        let spec = null_spec(1.0);
        // k = 4 blocks, so one arm is empty with probability 2^(1-4)
        let exp = Experiment::new(
            spec.into(),
            config(Target::Gate, vec![16], DesignGrid::Pairs { pairs: vec![(4, 0)] }, 4000),
        )
        .unwrap();
        let d = SwitchbackDesign::new(16, 4, 0).unwrap();
        let c = exp.run_cell(&d, 0.0).unwrap();
        let p = 0.125;
        let frac = c.degenerate_count as f64 / c.reps as f64;
        let se = (p * (1.0 - p) / c.reps as f64).sqrt();
        assert!((frac - p).abs() < 3.0 * se, "fraction {frac}");
    }

    #[test]
    fn invalid_cell_aborts_grid() {
        let spec = build_benchmark(&BenchmarkParams::default()).unwrap();
        let cfg =
            config(Target::Gate, vec![400, 30], DesignGrid::BlockLengths { block_lengths: vec![40], burn_in: 0 }, 2);
        let exp = Experiment::new(spec.into(), cfg).unwrap();
        assert!(matches!(exp.run_grid(), Err(Error::InvalidInput(_))));
        let strict =
            config(Target::Gate, vec![400], DesignGrid::BlockLengths { block_lengths: vec![70], burn_in: 0 }, 2);
        assert!(ExperimentConfig { strict: true, ..strict }.cells().is_err());
    }

    #[test]
    fn one_cell_grid_is_run_cell() {
        let spec = build_benchmark(&BenchmarkParams::default()).unwrap();
        let cfg = config(Target::Gate, vec![400], DesignGrid::Pairs { pairs: vec![(40, 0)] }, 20);
        let exp = Experiment::new(spec.into(), cfg).unwrap();
        let g = exp.run_grid().unwrap();
        let d = SwitchbackDesign::new(400, 40, 0).unwrap();
        assert_eq!(g.cells, vec![exp.run_cell(&d, exp.truth(&d).unwrap()).unwrap()]);
        assert_eq!(g.envelope.len(), 1);
        assert_eq!(g.envelope[0].mse, g.cells[0].mse);
    }

    #[test]
    fn envelope_of_identical_cells() {
        let d = SwitchbackDesign::new(100, 10, 0).unwrap();
        let mut a = aggregate(Target::Gate, &d, &[1.0, 2.0, 3.0], 2.0, 0, 1);
        let mut b = a.clone();
        b.l = 20;
        a.l = 10;
        let env = envelope(&[a.clone(), b]);
        assert_eq!(env.len(), 1);
        assert_eq!(env[0].mse, a.mse);
        assert_eq!(env[0].l, 10);
    }

    #[test]
    fn synthetic_gaussian_self_test() {
        let mut rng = rng::stream(3);
        let xs: Vec<f64> = (0..4000).map(|_| 1.0 + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let d = clt_diagnostics(&xs, 1.0, 50).unwrap();
        assert!((d.coverage_95 - 0.95).abs() < 0.015);
        assert!((d.coverage_90 - 0.90).abs() < 0.02);
        assert!(d.ks_distance < 0.03);
        assert!((0.0..=1.0).contains(&d.ks_distance));
        assert!(matches!(clt_diagnostics(&xs[..50], 1.0, 50), Err(Error::InsufficientReplicates { .. })));
    }

    #[test]
    fn symmetric_null_is_centered() {
        let spec = null_spec(3.0);
        let cfg = config(Target::Fate, vec![600], DesignGrid::Pairs { pairs: vec![(30, 10)] }, 400);
        let exp = Experiment::new(spec.into(), cfg).unwrap();
        let d = SwitchbackDesign::new(600, 30, 10).unwrap();
        let diag = exp.clt_check(&d).unwrap();
        assert_eq!(diag.truth, 0.0);
        let n = diag.reps as f64;
        assert!(diag.mean_estimate.abs() < 3.0 * diag.sd_estimate / n.sqrt());
        assert!(diag.skewness.abs() < 3.0 * (6.0 / n).sqrt(), "skew {}", diag.skewness);
        assert!(diag.sigma > 0.0);
    }

    #[test]
    fn clt_needs_enough_replicates() {
        let spec = build_benchmark(&BenchmarkParams::default()).unwrap();
        let cfg = config(Target::Fate, vec![600], DesignGrid::Pairs { pairs: vec![(30, 10)] }, 50);
        let exp = Experiment::new(spec.into(), cfg).unwrap();
        let d = SwitchbackDesign::new(600, 30, 10).unwrap();
        assert!(matches!(exp.clt_check(&d), Err(Error::InsufficientReplicates { required: 100, got: 50 })));
    }

    #[test]
    fn plot_data_anchoring_and_slope() {
        let d = |t| SwitchbackDesign::new(t, 10, 0).unwrap();
        let cells: Vec<CellResult> = [400usize, 800, 1600]
            .iter()
            .map(|&t| {
                let mut c = aggregate(Target::Gate, &d(t), &[0.0, 1.0], 0.5, 0, 0);
                c.mse = 5.0 * (t as f64).powf(-0.7);
                c
            })
            .collect();
        let result = GridResult { target: Target::Gate, envelope: envelope(&cells), cells };
        let mut buf = Vec::new();
        emit_plot_data(&mut buf, std::slice::from_ref(&result)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        let mse0: f64 = rows[0][4].parse().unwrap();
        assert_eq!(rows[0][7].parse::<f64>().unwrap(), mse0);
        assert_eq!(rows[0][8].parse::<f64>().unwrap(), mse0);
        let slope: f64 = rows[0][9].parse().unwrap();
        assert!((slope - result.envelope_rate().unwrap().slope).abs() < 1e-15);
        assert!((slope + 0.7).abs() < 1e-9);
        assert!(emit_plot_data(Vec::new(), &[]).is_err());
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
            target = "fate"
            horizons = [400, 800]
            reps = 10
            master_seed = 9
            [designs]
            burn_ins = [10, 20]
            gap = 30
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.designs.pairs(), vec![(40, 10), (50, 20)]);
        assert_eq!(cfg.cells().unwrap().len(), 4);
        assert_eq!(cfg.parallelism, 1);
    }
}
