use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use super::spec::{FiniteMdpSpec, MdpSchedule, NoiseLaw};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// One simulated run. Period `t` (1-based) is stored at index `t - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub treatments: Vec<u8>,
    pub states: Vec<usize>,
    pub outcomes: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.outcomes.len()
    }

    /// Writes `t,w,s,y` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "w", "s", "y"])?;
        for t in 0..self.horizon() {
            wtr.write_record([
                (t + 1).to_string(),
                self.treatments[t].to_string(),
                self.states[t].to_string(),
                self.outcomes[t].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `t,w,s,y` rows. Rows must be in period order starting at 1.
    pub fn read_csv<R: Read>(input: R, seed: u64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: usize,
            w: u8,
            s: usize,
            y: f64,
        }
        let mut rdr = csv::Reader::from_reader(input);
        let mut traj = Trajectory { treatments: vec![], states: vec![], outcomes: vec![], seed };
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            if row.t != i + 1 {
                return Err(Error::Parse(format!("row {} has t = {}, expected {}", i + 1, row.t, i + 1)));
            }
            if row.w > 1 {
                return Err(Error::Parse(format!("row {} has treatment {}", i + 1, row.w)));
            }
            traj.treatments.push(row.w);
            traj.states.push(row.s);
            traj.outcomes.push(row.y);
        }
        if traj.outcomes.is_empty() {
            return Err(Error::invalid("trajectory CSV has no rows"));
        }
        Ok(traj)
    }
}

/// Sparse inverse-CDF sampler for one kernel.
#[derive(Debug, Clone)]
struct RowSampler {
    targets: Vec<Vec<u32>>,
    cumulative: Vec<Vec<f64>>,
}

impl RowSampler {
    fn new(kernel: &Kernel) -> Self {
        let n = kernel.size();
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for i in 0..n {
            let (t, c) = sparse_cdf(kernel.row(i));
            targets.push(t);
            cumulative.push(c);
        }
        RowSampler { targets, cumulative }
    }

    #[inline]
    fn sample(&self, from: usize, u: f64) -> usize {
        draw(&self.targets[from], &self.cumulative[from], u)
    }
}

fn sparse_cdf(probs: &[f64]) -> (Vec<u32>, Vec<f64>) {
    let mut targets = Vec::new();
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            targets.push(j as u32);
            cdf.push(acc);
        }
    }
    (targets, cdf)
}

#[inline]
fn draw(targets: &[u32], cdf: &[f64], u: f64) -> usize {
    // Rounding can leave the last cumulative value just under 1.
    let idx = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
    targets[idx] as usize
}

#[derive(Debug, Clone)]
struct Regime {
    samplers: [RowSampler; 2],
    outcome_mean: Vec<[f64; 2]>,
    noise_sd: f64,
    noise_law: NoiseLaw,
}

impl Regime {
    fn new(spec: &FiniteMdpSpec) -> Self {
        Regime {
            samplers: [RowSampler::new(spec.kernel(0)), RowSampler::new(spec.kernel(1))],
            outcome_mean: spec.outcome_table().to_vec(),
            noise_sd: spec.noise_sd(),
            noise_law: spec.noise_law(),
        }
    }

    #[inline]
    fn noise(&self, rng: &mut Stream) -> f64 {
        if self.noise_sd == 0.0 {
            return 0.0;
        }
        match self.noise_law {
            NoiseLaw::Gaussian => self.noise_sd * rng.sample::<f64, _>(StandardNormal),
            NoiseLaw::Uniform => self.noise_sd * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

/// Reusable simulator with precomputed samplers.
///
/// Randomness is consumed in a fixed order: the pre-period state `S_0`,
/// then for each period the noise draw followed by the next-state draw.
#[derive(Debug, Clone)]
pub struct Simulator {
    regimes: Vec<Regime>,
    starts: Vec<usize>,
    initial_targets: Vec<u32>,
    initial_cdf: Vec<f64>,
    state_count: usize,
}

impl Simulator {
    pub fn new(spec: &FiniteMdpSpec) -> Self {
        Simulator::for_schedule(&MdpSchedule::from(spec.clone()))
    }

    pub fn for_schedule(schedule: &MdpSchedule) -> Self {
        let (initial_targets, initial_cdf) = sparse_cdf(schedule.initial_dist());
        Simulator {
            regimes: schedule.segments().iter().map(|s| Regime::new(&s.spec)).collect(),
            starts: schedule.segments().iter().map(|s| s.start).collect(),
            initial_targets,
            initial_cdf,
            state_count: schedule.state_count(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    /// Simulates one trajectory under `treatments`.
    ///
    /// `S_0` is drawn from the initial distribution and moved once under the
    /// kernel of `W_1`, i.e. `W_0 = W_1`.
    pub fn run(&self, treatments: &[u8], seed: u64) -> Result<Trajectory> {
        if treatments.is_empty() {
            return Err(Error::invalid("treatment sequence is empty"));
        }
        if let Some(w) = treatments.iter().find(|w| **w > 1) {
            return Err(Error::invalid(format!("treatment value {w} is not binary")));
        }
        let horizon = treatments.len();
        let mut rng = rng::stream(seed);
        let mut states = Vec::with_capacity(horizon);
        let mut outcomes = Vec::with_capacity(horizon);

        let mut seg = 0;
        let s0 = draw(&self.initial_targets, &self.initial_cdf, rng.random());
        let mut state = self.regimes[0].samplers[treatments[0] as usize].sample(s0, rng.random());

        for (idx, &w) in treatments.iter().enumerate() {
            let t = idx + 1;
            while seg + 1 < self.starts.len() && self.starts[seg + 1] <= t {
                seg += 1;
            }
            let regime = &self.regimes[seg];
            states.push(state);
            outcomes.push(regime.outcome_mean[state][w as usize] + regime.noise(&mut rng));
            if t < horizon {
                state = regime.samplers[w as usize].sample(state, rng.random());
            }
        }

        Ok(Trajectory { treatments: treatments.to_vec(), states, outcomes, seed })
    }
}

/// Simulates one trajectory of a homogeneous spec.
pub fn simulate_trajectory(spec: &FiniteMdpSpec, treatments: &[u8], seed: u64) -> Result<Trajectory> {
    Simulator::new(spec).run(treatments, seed)
}
