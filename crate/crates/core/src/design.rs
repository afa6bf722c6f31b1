//! Regular Bernoulli switchback designs.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Horizon `T`, block length `l` and burn-in `b`, with `k = floor(T / l)` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DesignRepr", into = "DesignRepr")]
pub struct SwitchbackDesign {
    horizon: usize,
    block_length: usize,
    burn_in: usize,
    block_count: usize,
}

#[derive(Serialize, Deserialize)]
struct DesignRepr {
    #[serde(rename = "T")]
    horizon: usize,
    l: usize,
    b: usize,
    #[serde(default = "yes", skip_serializing_if = "Clone::clone")]
    strict: bool,
}

fn yes() -> bool {
    true
}

impl TryFrom<DesignRepr> for SwitchbackDesign {
    type Error = Error;
    fn try_from(r: DesignRepr) -> Result<Self> {
        if r.strict {
            SwitchbackDesign::new(r.horizon, r.l, r.b)
        } else {
            SwitchbackDesign::lenient(r.horizon, r.l, r.b)
        }
    }
}

impl From<SwitchbackDesign> for DesignRepr {
    fn from(d: SwitchbackDesign) -> Self {
        DesignRepr { horizon: d.horizon, l: d.block_length, b: d.burn_in, strict: d.unused_tail() == 0 }
    }
}

impl SwitchbackDesign {
    /// Strict construction: `l` must divide `T`.
    pub fn new(horizon: usize, block_length: usize, burn_in: usize) -> Result<Self> {
        let design = SwitchbackDesign::lenient(horizon, block_length, burn_in)?;
        if design.unused_tail() != 0 {
            return Err(Error::invalid(format!("block length {block_length} does not divide horizon {horizon}")));
        }
        Ok(design)
    }

    /// Lenient construction: trailing `T - k l` periods are left out of every block.
    pub fn lenient(horizon: usize, block_length: usize, burn_in: usize) -> Result<Self> {
        if block_length < 2 {
            return Err(Error::invalid(format!("block length must exceed 1, got {block_length}")));
        }
        if burn_in >= block_length {
            return Err(Error::invalid(format!("burn-in {burn_in} must be shorter than block length {block_length}")));
        }
        let block_count = horizon / block_length;
        if block_count == 0 {
            return Err(Error::invalid(format!(
                "horizon {horizon} is shorter than one block of length {block_length}"
            )));
        }
        Ok(SwitchbackDesign { horizon, block_length, burn_in, block_count })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    /// Periods covered by complete blocks, `k l`.
    pub fn covered(&self) -> usize {
        self.block_count * self.block_length
    }

    /// Trailing periods outside every block.
    pub fn unused_tail(&self) -> usize {
        self.horizon - self.covered()
    }

    /// Retained periods per block, `l - b`.
    pub fn kept_per_block(&self) -> usize {
        self.block_length - self.burn_in
    }

    /// Block index `ceil(t / l)` of period `t`.
    pub fn block_of(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.covered() {
            return Err(Error::OutOfRange { index: t, max: self.covered() });
        }
        Ok(t.div_ceil(self.block_length))
    }

    /// Within-block position `((t - 1) mod l) + 1`.
    pub fn position_in_block(&self, t: usize) -> usize {
        (t - 1) % self.block_length + 1
    }

    /// Periods at within-block positions `b+1..=l`, ascending.
    pub fn filtered_index_set(&self) -> Vec<usize> {
        (0..self.block_count)
            .flat_map(|i| {
                let base = i * self.block_length;
                (self.burn_in + 1..=self.block_length).map(move |s| base + s)
            })
            .collect()
    }
}

/// Block draws `Z_1..Z_k` and their expansion `W_1..W_T`.
///
/// Periods in an unused tail keep the last block's treatment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub block_treatments: Vec<u8>,
    pub treatments: Vec<u8>,
    pub seed: u64,
}

impl AssignmentPlan {
    /// Expands block draws over a design.
    pub fn from_blocks(design: &SwitchbackDesign, block_treatments: Vec<u8>, seed: u64) -> Result<Self> {
        if block_treatments.len() != design.block_count() {
            return Err(Error::invalid(format!(
                "{} block draws for a design with {} blocks",
                block_treatments.len(),
                design.block_count()
            )));
        }
        if block_treatments.iter().any(|z| *z > 1) {
            return Err(Error::invalid("block treatments must be 0 or 1"));
        }
        let l = design.block_length();
        let last = *block_treatments.last().expect("k >= 1");
        let treatments =
            (0..design.horizon()).map(|idx| block_treatments.get(idx / l).copied().unwrap_or(last)).collect();
        Ok(AssignmentPlan { block_treatments, treatments, seed })
    }

    /// Recovers the block draws from a treatment path, checking block constancy.
    pub fn from_treatments(design: &SwitchbackDesign, treatments: &[u8]) -> Result<Self> {
        if treatments.len() < design.covered() {
            return Err(Error::invalid(format!(
                "treatment path of length {} is shorter than {} covered periods",
                treatments.len(),
                design.covered()
            )));
        }
        let l = design.block_length();
        let mut blocks = Vec::with_capacity(design.block_count());
        for (i, chunk) in treatments[..design.covered()].chunks_exact(l).enumerate() {
            if chunk.iter().any(|w| *w != chunk[0]) {
                return Err(Error::Consistency(format!("treatment changes inside block {}", i + 1)));
            }
            blocks.push(chunk[0]);
        }
        let mut plan = AssignmentPlan::from_blocks(design, blocks, 0)?;
        plan.treatments = treatments.to_vec();
        Ok(plan)
    }

    pub fn treated_blocks(&self) -> usize {
        self.block_treatments.iter().filter(|z| **z == 1).count()
    }

    pub fn control_blocks(&self) -> usize {
        self.block_treatments.len() - self.treated_blocks()
    }

    pub fn write_blocks_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["block", "z"])?;
        for (i, z) in self.block_treatments.iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), z.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_treatments_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "w"])?;
        for (t, w) in self.treatments.iter().enumerate() {
            wtr.write_record([(t + 1).to_string(), w.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Draws `Z_i` i.i.d. Bernoulli(1/2) at each block start.
pub fn assign(design: &SwitchbackDesign, seed: u64) -> AssignmentPlan {
    let mut rng = rng::stream(seed);
    let blocks = (0..design.block_count()).map(|_| u8::from(rng.random::<bool>())).collect();
    AssignmentPlan::from_blocks(design, blocks, seed).expect("block count matches design")
}
