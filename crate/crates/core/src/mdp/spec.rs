use serde::{Deserialize, Serialize};

use super::kernel::{check_distribution, Kernel};
use crate::error::{Error, Result};

/// Distribution family of the additive outcome noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt(3) sd, sqrt(3) sd]`, same variance as the Gaussian.
    Uniform,
}

/// A finite-state MDP with binary treatment and time-homogeneous kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct FiniteMdpSpec {
    kernels: [Kernel; 2],
    outcome_mean: Vec<[f64; 2]>,
    noise_sd: f64,
    noise_law: NoiseLaw,
    initial_dist: Vec<f64>,
}

/// Serialized form: kernels as dense row-major arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecRepr {
    pub state_count: usize,
    pub kernel0: Vec<f64>,
    pub kernel1: Vec<f64>,
    /// One `[mu(s, 0), mu(s, 1)]` pair per state.
    pub outcome_mean: Vec<[f64; 2]>,
    pub noise_sd: f64,
    #[serde(default)]
    pub noise_law: NoiseLaw,
    pub initial_dist: Vec<f64>,
}

impl TryFrom<SpecRepr> for FiniteMdpSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        let k0 = Kernel::from_row_major(r.state_count, r.kernel0)?;
        let k1 = Kernel::from_row_major(r.state_count, r.kernel1)?;
        FiniteMdpSpec::new(k0, k1, r.outcome_mean, r.noise_sd, r.initial_dist).map(|s| s.with_noise_law(r.noise_law))
    }
}

impl From<FiniteMdpSpec> for SpecRepr {
    fn from(s: FiniteMdpSpec) -> Self {
        let [k0, k1] = s.kernels;
        SpecRepr {
            state_count: k0.size(),
            kernel0: k0.as_row_major().to_vec(),
            kernel1: k1.as_row_major().to_vec(),
            outcome_mean: s.outcome_mean,
            noise_sd: s.noise_sd,
            noise_law: s.noise_law,
            initial_dist: s.initial_dist,
        }
    }
}

impl FiniteMdpSpec {
    pub fn new(
        kernel0: Kernel,
        kernel1: Kernel,
        outcome_mean: Vec<[f64; 2]>,
        noise_sd: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let n = kernel0.size();
        if kernel1.size() != n {
            return Err(Error::invalid("control and treatment kernels differ in size"));
        }
        if outcome_mean.len() != n {
            return Err(Error::invalid(format!("outcome table has {} rows, expected {n}", outcome_mean.len())));
        }
        if outcome_mean.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::invalid("outcome means must be finite"));
        }
        if !(noise_sd.is_finite() && noise_sd >= 0.0) {
            return Err(Error::invalid(format!("noise sd must be finite and >= 0, got {noise_sd}")));
        }
        check_distribution(&initial_dist, n)?;
        Ok(FiniteMdpSpec {
            kernels: [kernel0, kernel1],
            outcome_mean,
            noise_sd,
            noise_law: NoiseLaw::Gaussian,
            initial_dist,
        })
    }

    pub fn with_noise_law(mut self, law: NoiseLaw) -> Self {
        self.noise_law = law;
        self
    }

    pub fn with_noise_sd(mut self, sd: f64) -> Result<Self> {
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(Error::invalid(format!("noise sd must be finite and >= 0, got {sd}")));
        }
        self.noise_sd = sd;
        Ok(self)
    }

    pub fn state_count(&self) -> usize {
        self.kernels[0].size()
    }

    /// Transition kernel under treatment `w` (0 or 1).
    pub fn kernel(&self, w: u8) -> &Kernel {
        &self.kernels[usize::from(w != 0)]
    }

    pub fn outcome_mean(&self, s: usize, w: u8) -> f64 {
        self.outcome_mean[s][usize::from(w != 0)]
    }

    pub fn outcome_table(&self) -> &[[f64; 2]] {
        &self.outcome_mean
    }

    /// Mean outcomes of every state under treatment `w`.
    pub fn outcome_column(&self, w: u8) -> Vec<f64> {
        self.outcome_mean.iter().map(|m| m[usize::from(w != 0)]).collect()
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn noise_law(&self) -> NoiseLaw {
        self.noise_law
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Largest absolute mean outcome, the a.s. bound on `|mu(S, W)|`.
    pub fn outcome_bound(&self) -> f64 {
        self.outcome_mean.iter().flatten().fold(0.0, |acc, m| acc.max(m.abs()))
    }
}

/// One regime of a piecewise-homogeneous schedule, active from period `start` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub spec: FiniteMdpSpec,
}

/// A piecewise-constant sequence of regimes. The first segment starts at period 1
/// and its initial distribution is the one used for the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSchedule {
    segments: Vec<Segment>,
}

impl MdpSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments.first().ok_or_else(|| Error::invalid("schedule needs at least one segment"))?;
        if first.start != 1 {
            return Err(Error::invalid("first schedule segment must start at period 1"));
        }
        let n = first.spec.state_count();
        for pair in segments.windows(2) {
            if pair[1].start <= pair[0].start {
                return Err(Error::invalid("schedule segment starts must strictly increase"));
            }
        }
        if segments.iter().any(|s| s.spec.state_count() != n) {
            return Err(Error::invalid("all schedule segments must share one state space"));
        }
        Ok(MdpSchedule { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_homogeneous(&self) -> bool {
        self.segments.len() == 1
    }

    pub fn state_count(&self) -> usize {
        self.segments[0].spec.state_count()
    }

    pub fn initial_dist(&self) -> &[f64] {
        self.segments[0].spec.initial_dist()
    }

    /// Regime in force at period `t` (1-based).
    pub fn regime_at(&self, t: usize) -> &FiniteMdpSpec {
        let idx = self.segments.partition_point(|s| s.start <= t).saturating_sub(1);
        &self.segments[idx].spec
    }

    pub fn outcome_bound(&self) -> f64 {
        self.segments.iter().map(|s| s.spec.outcome_bound()).fold(0.0, f64::max)
    }
}

impl From<FiniteMdpSpec> for MdpSchedule {
    fn from(spec: FiniteMdpSpec) -> Self {
        MdpSchedule { segments: vec![Segment { start: 1, spec }] }
    }
}

/// Parameters of the market-condition / hidden-inventory benchmark chain.
///
/// The joint state is `(M, H)` with `M` in `1..=market_states` and `H` in
/// `0..=hidden_cap`. `M` moves independently of treatment; `H` steps up by
/// `M` (capped) with the arm's up-probability and down by `M` (floored at 0)
/// otherwise. The mean outcome is `H + effect_multiplier * W * H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkParams {
    pub market_states: usize,
    pub hidden_cap: usize,
    /// Probability the market condition stays put; the rest is spread evenly
    /// over the other conditions.
    pub stay_prob: f64,
    pub up_prob_treated: f64,
    pub up_prob_control: f64,
    pub effect_multiplier: f64,
    pub noise_sd: f64,
    #[serde(default)]
    pub noise_law: NoiseLaw,
    /// Initial market distribution; `None` means uniform.
    pub initial_market: Option<Vec<f64>>,
    pub initial_hidden: usize,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            market_states: 3,
            hidden_cap: 10,
            stay_prob: 0.6,
            up_prob_treated: 0.7,
            up_prob_control: 0.3,
            effect_multiplier: 0.5,
            noise_sd: 3.0,
            noise_law: NoiseLaw::Gaussian,
            initial_market: None,
            initial_hidden: 0,
        }
    }
}

impl BenchmarkParams {
    /// Market persistence read as "switch w.p. 1/2, then redraw uniformly":
    /// stay 2/3, each other condition 1/6.
    pub fn uniform_redraw() -> Self {
        BenchmarkParams { stay_prob: 2.0 / 3.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.market_states < 1 {
            return Err(Error::invalid("benchmark needs at least one market state"));
        }
        if self.market_states == 1 && self.stay_prob != 1.0 {
            return Err(Error::invalid("a single market state must have stay_prob = 1"));
        }
        for (name, p) in [
            ("stay_prob", self.stay_prob),
            ("up_prob_treated", self.up_prob_treated),
            ("up_prob_control", self.up_prob_control),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if !self.effect_multiplier.is_finite() {
            return Err(Error::invalid("effect_multiplier must be finite"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd must be finite and >= 0"));
        }
        if self.initial_hidden > self.hidden_cap {
            return Err(Error::invalid("initial_hidden exceeds hidden_cap"));
        }
        if let Some(m) = &self.initial_market {
            check_distribution(m, self.market_states)?;
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.market_states * (self.hidden_cap + 1)
    }

    /// Joint state index of market condition `m` (1-based) and hidden level `h`.
    pub fn state_index(&self, m: usize, h: usize) -> usize {
        (m - 1) * (self.hidden_cap + 1) + h
    }

    /// Inverse of [`state_index`](Self::state_index).
    pub fn decode_state(&self, s: usize) -> (usize, usize) {
        (s / (self.hidden_cap + 1) + 1, s % (self.hidden_cap + 1))
    }
}

/// Builds the joint `(M, H)` chain described by `params`.
pub fn build_benchmark(params: &BenchmarkParams) -> Result<FiniteMdpSpec> {
    params.validate()?;
    let n = params.state_count();
    let cap = params.hidden_cap;
    let m_count = params.market_states;
    let switch_prob = if m_count > 1 { (1.0 - params.stay_prob) / (m_count - 1) as f64 } else { 0.0 };

    let kernel_for = |up: f64| -> Result<Kernel> {
        let mut data = vec![0.0; n * n];
        for m in 1..=m_count {
            for h in 0..=cap {
                let row = params.state_index(m, h) * n;
                let h_up = (h + m).min(cap);
                let h_down = h.saturating_sub(m);
                for m_next in 1..=m_count {
                    let pm = if m_next == m { params.stay_prob } else { switch_prob };
                    data[row + params.state_index(m_next, h_up)] += pm * up;
                    data[row + params.state_index(m_next, h_down)] += pm * (1.0 - up);
                }
            }
        }
        Kernel::from_row_major(n, data)
    };
    let kernel0 = kernel_for(params.up_prob_control)?;
    let kernel1 = kernel_for(params.up_prob_treated)?;

    let outcome_mean = (0..n)
        .map(|s| {
            let h = params.decode_state(s).1 as f64;
            [h, h + params.effect_multiplier * h]
        })
        .collect();

    let market = params.initial_market.clone().unwrap_or_else(|| vec![1.0 / m_count as f64; m_count]);
    let mut initial = vec![0.0; n];
    for (m, p) in market.iter().enumerate() {
        initial[params.state_index(m + 1, params.initial_hidden)] = *p;
    }

    Ok(FiniteMdpSpec::new(kernel0, kernel1, outcome_mean, params.noise_sd, initial)?.with_noise_law(params.noise_law))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bench() -> (BenchmarkParams, FiniteMdpSpec) {
        let p = BenchmarkParams::default();
        let s = build_benchmark(&p).unwrap();
        (p, s)
    }

    #[test]
    fn benchmark_has_33_states_and_stochastic_rows() {
        let (_, spec) = bench();
        assert_eq!(spec.state_count(), 33);
        for w in 0..2 {
            let k = spec.kernel(w);
            for i in 0..33 {
                // independent summation: pairwise over the row
                let total: f64 = k.row(i).iter().rev().sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn capped_up_move_from_high_inventory() {
        let (p, spec) = bench();
        let from = p.state_index(2, 9);
        let k = spec.kernel(1);
        // Marginalize over the next market condition.
        let h_mass = |h: usize| -> f64 { (1..=3).map(|m| k.get(from, p.state_index(m, h))).sum() };
        assert_abs_diff_eq!(h_mass(10), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(h_mass(7), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn floor_clamps_down_move_at_zero() {
        let (p, spec) = bench();
        for m in 1..=3 {
            let from = p.state_index(m, 0);
            let k = spec.kernel(0);
            let stay_zero: f64 = (1..=3).map(|m2| k.get(from, p.state_index(m2, 0))).sum();
            assert_abs_diff_eq!(stay_zero, 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn market_moves_independently_of_hidden_and_treatment() {
        let (p, spec) = bench();
        for w in 0..2 {
            for m in 1..=3 {
                for h in 0..=10 {
                    let from = p.state_index(m, h);
                    for m2 in 1..=3 {
                        let mass: f64 = (0..=10).map(|h2| spec.kernel(w).get(from, p.state_index(m2, h2))).sum();
                        let expected = if m2 == m { 0.6 } else { 0.2 };
                        assert_abs_diff_eq!(mass, expected, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn outcome_table_and_bound() {
        let (p, spec) = bench();
        let s = p.state_index(3, 4);
        assert_eq!(spec.outcome_mean(s, 0), 4.0);
        assert_eq!(spec.outcome_mean(s, 1), 6.0);
        assert_eq!(spec.outcome_bound(), 15.0);
    }

    #[test]
    fn default_initial_state() {
        let (p, spec) = bench();
        let init = spec.initial_dist();
        for m in 1..=3 {
            assert_abs_diff_eq!(init[p.state_index(m, 0)], 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(init.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_redraw_variant() {
        let p = BenchmarkParams::uniform_redraw();
        let spec = build_benchmark(&p).unwrap();
        let from = p.state_index(1, 5);
        let stay: f64 = (0..=10).map(|h| spec.kernel(0).get(from, p.state_index(1, h))).sum();
        assert_abs_diff_eq!(stay, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = BenchmarkParams { stay_prob: 1.2, ..Default::default() };
        assert!(build_benchmark(&p).is_err());
        let p = BenchmarkParams { initial_hidden: 11, ..Default::default() };
        assert!(build_benchmark(&p).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let (_, spec) = bench();
        let text = serde_json::to_string(&spec).unwrap();
        let back: FiniteMdpSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn schedule_lookup() {
        let (_, spec) = bench();
        let other = spec.clone().with_noise_sd(1.0).unwrap();
        let sched =
            MdpSchedule::new(vec![Segment { start: 1, spec: spec.clone() }, Segment { start: 5, spec: other.clone() }])
                .unwrap();
        assert_eq!(sched.regime_at(1), &spec);
        assert_eq!(sched.regime_at(4), &spec);
        assert_eq!(sched.regime_at(5), &other);
        assert_eq!(sched.regime_at(100), &other);
        assert!(MdpSchedule::new(vec![Segment { start: 2, spec }]).is_err());
    }
}
