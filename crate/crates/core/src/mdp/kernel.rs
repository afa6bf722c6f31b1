use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums and distribution totals.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A row-stochastic transition matrix over states `0..n`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct Kernel {
    n: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    n: usize,
    data: Vec<f64>,
}

impl TryFrom<KernelRepr> for Kernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        Kernel::from_row_major(r.n, r.data)
    }
}

impl From<Kernel> for KernelRepr {
    fn from(k: Kernel) -> Self {
        KernelRepr { n: k.n, data: k.data }
    }
}

impl Kernel {
    /// Builds a kernel from `n * n` row-major entries, checking stochasticity.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("kernel must have at least one state"));
        }
        if data.len() != n * n {
            return Err(Error::invalid(format!("kernel needs {} entries for {n} states, got {}", n * n, data.len())));
        }
        for (i, row) in data.chunks_exact(n).enumerate() {
            if let Some(&bad) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::invalid(format!("kernel row {i} has entry {bad} outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("kernel row {i} sums to {total}")));
            }
        }
        Ok(Kernel { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("kernel rows must all have length equal to the row count"));
        }
        Kernel::from_row_major(n, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Kernel { n, data }
    }

    /// Kernel whose every row equals `row`.
    pub fn constant_rows(row: &[f64]) -> Result<Self> {
        let n = row.len();
        Kernel::from_row_major(n, row.repeat(n))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &Kernel) -> Result<Kernel> {
        if self.n != other.n {
            return Err(Error::invalid("kernel dimensions differ"));
        }
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let dst = &mut out[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        // Products drift off the simplex by rounding; skip re-validation.
        Ok(Kernel { n, data: out })
    }
}

/// Checks that `dist` is a probability vector of length `n`.
pub fn check_distribution(dist: &[f64], n: usize) -> Result<()> {
    if dist.len() != n {
        return Err(Error::invalid(format!("distribution has length {}, expected {n}", dist.len())));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("distribution has negative or non-finite mass"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(format!("distribution sums to {total}")));
    }
    Ok(())
}

/// Total-variation distance, half the L1 distance.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Push-forward of a distribution through a kernel, `dist * kernel`.
pub fn step_distribution(dist: &[f64], kernel: &Kernel) -> Result<Vec<f64>> {
    if dist.len() != kernel.size() {
        return Err(Error::invalid(format!(
            "distribution length {} does not match kernel size {}",
            dist.len(),
            kernel.size()
        )));
    }
    Ok(push_forward(dist, kernel))
}

pub(crate) fn push_forward(dist: &[f64], kernel: &Kernel) -> Vec<f64> {
    let n = kernel.size();
    let mut out = vec![0.0; n];
    for (i, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &q) in out.iter_mut().zip(kernel.row(i)) {
            *o += p * q;
        }
    }
    out
}

/// Nonzero entries of each row, for repeated push-forwards.
#[derive(Debug, Clone)]
pub(crate) struct SparseKernel {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseKernel {
    pub fn new(kernel: &Kernel) -> Self {
        let rows = (0..kernel.size())
            .map(|i| kernel.row(i).iter().enumerate().filter(|(_, p)| **p != 0.0).map(|(j, p)| (j, *p)).collect())
            .collect();
        SparseKernel { rows }
    }

    pub fn push_forward(&self, dist: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (row, &p) in self.rows.iter().zip(dist) {
            if p == 0.0 {
                continue;
            }
            for &(j, q) in row {
                out[j] += p * q;
            }
        }
    }
}
