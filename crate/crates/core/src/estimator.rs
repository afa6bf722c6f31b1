//! Burn-in-discarding difference-in-means estimator.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::{AssignmentPlan, SwitchbackDesign};
use crate::error::{Error, Result};
use crate::mdp::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMean {
    pub block: usize,
    pub z: u8,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub tau_hat: f64,
    pub k1: usize,
    pub k0: usize,
    pub block_means: Vec<BlockMean>,
    /// One arm received no blocks; its mean was taken as 0.
    pub degenerate: bool,
}

impl EstimateReport {
    pub fn write_csv_row<W: Write>(&self, out: W, with_header: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        if with_header {
            wtr.write_record(["tau_hat", "k1", "k0", "degenerate"])?;
        }
        wtr.write_record([
            self.tau_hat.to_string(),
            self.k1.to_string(),
            self.k0.to_string(),
            self.degenerate.to_string(),
        ])?;
        wtr.flush()?;
        Ok(())
    }
}

fn check_horizon(outcomes: &[f64], design: &SwitchbackDesign) -> Result<()> {
    if outcomes.len() < design.covered() {
        return Err(Error::invalid(format!(
            "trajectory of length {} does not cover {} blocks of length {}",
            outcomes.len(),
            design.block_count(),
            design.block_length()
        )));
    }
    Ok(())
}

/// Mean of the retained periods `b+1..=l` of every block.
pub fn block_means(traj: &Trajectory, design: &SwitchbackDesign) -> Result<Vec<f64>> {
    check_horizon(&traj.outcomes, design)?;
    Ok(block_means_of(&traj.outcomes, design))
}

pub(crate) fn block_means_of(outcomes: &[f64], design: &SwitchbackDesign) -> Vec<f64> {
    let (l, b) = (design.block_length(), design.burn_in());
    let kept = design.kept_per_block() as f64;
    outcomes[..design.covered()].chunks_exact(l).map(|block| block[b..].iter().sum::<f64>() / kept).collect()
}

/// Summary of one difference-in-means evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DmParts {
    pub tau_hat: f64,
    pub k1: usize,
    pub k0: usize,
}

impl DmParts {
    pub fn degenerate(&self) -> bool {
        self.k1 == 0 || self.k0 == 0
    }
}

/// Difference in means from raw sums, block-major ascending, `0/0 = 0`.
pub(crate) fn dm_from_outcomes(outcomes: &[f64], blocks: &[u8], design: &SwitchbackDesign) -> DmParts {
    let (l, b) = (design.block_length(), design.burn_in());
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (block, &z) in outcomes[..design.covered()].chunks_exact(l).zip(blocks) {
        let arm = usize::from(z != 0);
        for &y in &block[b..] {
            sums[arm] += y;
        }
        counts[arm] += 1;
    }
    let kept = design.kept_per_block() as f64;
    let arm_mean = |arm: usize| {
        if counts[arm] == 0 {
            0.0
        } else {
            sums[arm] / (counts[arm] as f64 * kept)
        }
    };
    DmParts { tau_hat: arm_mean(1) - arm_mean(0), k1: counts[1], k0: counts[0] }
}

/// Difference-in-means estimate with block summaries.
pub fn dm_estimate(traj: &Trajectory, plan: &AssignmentPlan, design: &SwitchbackDesign) -> Result<EstimateReport> {
    check_horizon(&traj.outcomes, design)?;
    if plan.block_treatments.len() != design.block_count() {
        return Err(Error::Consistency(format!(
            "plan has {} blocks, design has {}",
            plan.block_treatments.len(),
            design.block_count()
        )));
    }
    let covered = design.covered();
    if plan.treatments.len() < covered || traj.treatments.len() < covered {
        return Err(Error::Consistency("treatment paths do not cover every block".into()));
    }
    if let Some(t) = (0..covered).find(|&t| plan.treatments[t] != traj.treatments[t]) {
        return Err(Error::Consistency(format!(
            "plan assigns {} at period {} but the trajectory received {}",
            plan.treatments[t],
            t + 1,
            traj.treatments[t]
        )));
    }
    let l = design.block_length();
    if let Some(i) = (0..design.block_count()).find(|&i| plan.block_treatments[i] != plan.treatments[i * l]) {
        return Err(Error::Consistency(format!("block {} draw disagrees with its treatment path", i + 1)));
    }

    let parts = dm_from_outcomes(&traj.outcomes, &plan.block_treatments, design);
    let block_means = block_means_of(&traj.outcomes, design)
        .into_iter()
        .zip(&plan.block_treatments)
        .enumerate()
        .map(|(i, (mean, &z))| BlockMean { block: i + 1, z, mean })
        .collect();
    Ok(EstimateReport {
        tau_hat: parts.tau_hat,
        k1: parts.k1,
        k0: parts.k0,
        block_means,
        degenerate: parts.degenerate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn traj(w: Vec<u8>, y: Vec<f64>) -> Trajectory {
        let n = y.len();
        Trajectory { treatments: w, states: vec![0; n], outcomes: y, seed: 0 }
    }

    #[test]
    fn constant_outcomes() {
        let d = SwitchbackDesign::new(12, 3, 1).unwrap();
        let plan = AssignmentPlan::from_blocks(&d, vec![1, 0, 0, 1], 0).unwrap();
        let t = traj(plan.treatments.clone(), vec![4.5; 12]);
        assert_eq!(block_means(&t, &d).unwrap(), vec![4.5; 4]);
        let r = dm_estimate(&t, &plan, &d).unwrap();
        assert_eq!(r.tau_hat, 0.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn hand_block_mean() {
        let d = SwitchbackDesign::new(3, 3, 1).unwrap();
        let t = traj(vec![1; 3], vec![9.0, 4.0, 6.0]);
        assert_eq!(block_means(&t, &d).unwrap(), vec![5.0]);
    }

    #[test]
    fn last_period_only_when_burn_in_is_maximal() {
        let d = SwitchbackDesign::new(8, 4, 3).unwrap();
        let y: Vec<f64> = (1..=8).map(f64::from).collect();
        let t = traj(vec![0; 8], y);
        assert_eq!(block_means(&t, &d).unwrap(), vec![4.0, 8.0]);
    }

    #[test]
    fn hand_difference_in_means() {
        let d = SwitchbackDesign::new(4, 2, 0).unwrap();
        let plan = AssignmentPlan::from_blocks(&d, vec![1, 0], 0).unwrap();
        let t = traj(plan.treatments.clone(), vec![3.0, 5.0, 1.0, 2.0]);
        let r = dm_estimate(&t, &plan, &d).unwrap();
        assert_abs_diff_eq!(r.tau_hat, 2.5, epsilon = 1e-15);
        assert_eq!((r.k1, r.k0), (1, 1));
    }

    #[test]
    fn all_treated_is_degenerate() {
        let d = SwitchbackDesign::new(6, 3, 0).unwrap();
        let plan = AssignmentPlan::from_blocks(&d, vec![1, 1], 0).unwrap();
        let t = traj(plan.treatments.clone(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = dm_estimate(&t, &plan, &d).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.k0, 0);
        assert_abs_diff_eq!(r.tau_hat, 3.5, epsilon = 1e-15);
    }

    #[test]
    fn mismatched_plan_rejected() {
        let d = SwitchbackDesign::new(4, 2, 0).unwrap();
        let plan = AssignmentPlan::from_blocks(&d, vec![1, 0], 0).unwrap();
        let t = traj(vec![0, 0, 1, 1], vec![0.0; 4]);
        assert!(matches!(dm_estimate(&t, &plan, &d), Err(Error::Consistency(_))));
    }

    #[test]
    fn short_trajectory_rejected() {
        let d = SwitchbackDesign::new(4, 2, 0).unwrap();
        let t = traj(vec![1], vec![0.0]);
        assert!(matches!(block_means(&t, &d), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn csv_row() {
        let d = SwitchbackDesign::new(4, 2, 0).unwrap();
        let plan = AssignmentPlan::from_blocks(&d, vec![1, 0], 0).unwrap();
        let t = traj(plan.treatments.clone(), vec![3.0, 5.0, 1.0, 2.0]);
        let mut buf = Vec::new();
        dm_estimate(&t, &plan, &d).unwrap().write_csv_row(&mut buf, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tau_hat,k1,k0,degenerate\n2.5,1,1,false\n");
    }

    proptest! {
        #[test]
        fn raw_sums_match_block_means(
            blocks in prop::collection::vec(0u8..2, 1..12),
            l in 2usize..8,
            b_frac in 0.0f64..1.0,
            ys in prop::collection::vec(-50.0f64..50.0, 96),
        ) {
            let b = ((l as f64) * b_frac) as usize % l;
            let d = SwitchbackDesign::new(blocks.len() * l, l, b).unwrap();
            let plan = AssignmentPlan::from_blocks(&d, blocks.clone(), 0).unwrap();
            let t = traj(plan.treatments.clone(), ys[..d.horizon()].to_vec());
            let r = dm_estimate(&t, &plan, &d).unwrap();
            let arm = |w: u8| {
                let v: Vec<f64> = r.block_means.iter().filter(|m| m.z == w).map(|m| m.mean).collect();
                if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
            };
            prop_assert!((r.tau_hat - (arm(1) - arm(0))).abs() < 1e-12);
        }
    }
}
