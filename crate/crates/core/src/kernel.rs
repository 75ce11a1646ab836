//! Substochastic transition kernels.

use ndarray::Array2;
use thiserror::Error;

/// Default slack for the substochasticity invariants.
pub const KERNEL_SLACK: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("entry ({x},{y}) = {value} outside [0, 1] beyond slack")]
    EntryOutOfRange { x: usize, y: usize, value: f64 },
    #[error("row {x} sums to {sum}, above 1 beyond slack")]
    RowMassExceedsOne { x: usize, sum: f64 },
}

/// The transition kernel `P(u, ·; t, ·)` on a finite state space: rows are
/// starting states, columns target states, and each row is a sub-probability
/// vector.  The per-row defect `1 − Σ_y P[x][y]` is the mass lost to
/// explosion or kill.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub u: f64,
    pub t: f64,
    pub matrix: Array2<f64>,
}

impl Kernel {
    pub fn identity(n: usize, u: f64, t: f64) -> Self {
        Self {
            u,
            t,
            matrix: Array2::eye(n),
        }
    }

    pub fn zeros(n: usize, u: f64, t: f64) -> Self {
        Self {
            u,
            t,
            matrix: Array2::zeros((n, n)),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row_sum(&self, x: usize) -> f64 {
        self.matrix.row(x).sum()
    }

    /// `1 − Σ_y P[x][y]`.
    pub fn defect(&self, x: usize) -> f64 {
        1.0 - self.row_sum(x)
    }

    pub fn defects(&self) -> Vec<f64> {
        (0..self.n()).map(|x| self.defect(x)).collect()
    }

    pub fn max_defect(&self) -> f64 {
        self.defects().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest entrywise absolute difference to another kernel.
    pub fn max_abs_diff(&self, other: &Kernel) -> Result<f64, KernelError> {
        if self.n() != other.n() {
            return Err(KernelError::DimensionMismatch(self.n(), other.n()));
        }
        Ok(self
            .matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Checks entries in `[0 − slack, 1 + slack]` and row sums `≤ 1 + slack`.
    pub fn validate(&self, slack: f64) -> Result<(), KernelError> {
        for ((x, y), &v) in self.matrix.indexed_iter() {
            if !(v >= -slack && v <= 1.0 + slack) {
                return Err(KernelError::EntryOutOfRange { x, y, value: v });
            }
        }
        for x in 0..self.n() {
            let sum = self.row_sum(x);
            if sum > 1.0 + slack {
                return Err(KernelError::RowMassExceedsOne { x, sum });
            }
        }
        Ok(())
    }
}
