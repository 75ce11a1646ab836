//! Time-varying rate profiles.
//!
//! A [`TimeProfile`] describes a nonnegative rate as a function of time
//! `t > 0` in one of three shapes: constant, piecewise constant, or
//! piecewise linear.  All three reduce to a canonical piecewise-affine
//! curve, so evaluation, the cumulative integral `Λ(u,t) = ∫_u^t r(s) ds`,
//! the supremum over all times, and the inverse of the cumulative integral
//! (needed for holding-time sampling) are all available in closed form.
//!
//! Conventions:
//! * at a breakpoint the profile is right-continuous (the value of the
//!   piece starting there),
//! * the last piece extends to `+∞`; for piecewise-linear profiles the
//!   curve is constant before the first node and after the last node, so
//!   every profile is bounded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile needs at least one value")]
    Empty,
    #[error("expected {expected} values for {got_breakpoints} breakpoints, got {got}")]
    LengthMismatch {
        expected: usize,
        got: usize,
        got_breakpoints: usize,
    },
    #[error("breakpoints must be strictly increasing (violated at index {0})")]
    NonIncreasingBreakpoints(usize),
    #[error("breakpoints must be positive and finite (index {0})")]
    InvalidBreakpoint(usize),
    #[error("rate values must be finite and nonnegative (index {0})")]
    InvalidValue(usize),
}

/// Shape tag of a [`TimeProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    #[serde(rename = "constant")]
    Constant,
    #[serde(rename = "piecewise-constant")]
    PiecewiseConstant,
    #[serde(rename = "piecewise-linear")]
    PiecewiseLinear,
}

/// A nonnegative, bounded, piecewise-defined rate function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeProfile {
    kind: ProfileKind,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    curve: PiecewiseAffine,
}

impl TimeProfile {
    pub fn constant(value: f64) -> Result<Self, ProfileError> {
        check_values(&[value])?;
        Ok(Self {
            kind: ProfileKind::Constant,
            breakpoints: Vec::new(),
            values: vec![value],
            curve: PiecewiseAffine {
                starts: vec![0.0],
                a: vec![value],
                b: vec![0.0],
            },
        })
    }

    /// `values[i]` holds on the i-th piece; piece boundaries are the
    /// breakpoints, so `values` has one more entry than `breakpoints`.
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ProfileError> {
        if values.len() != breakpoints.len() + 1 {
            return Err(ProfileError::LengthMismatch {
                expected: breakpoints.len() + 1,
                got: values.len(),
                got_breakpoints: breakpoints.len(),
            });
        }
        check_breakpoints(&breakpoints)?;
        check_values(&values)?;
        let mut starts = Vec::with_capacity(values.len());
        starts.push(0.0);
        starts.extend_from_slice(&breakpoints);
        let curve = PiecewiseAffine {
            starts,
            a: values.clone(),
            b: vec![0.0; values.len()],
        };
        Ok(Self {
            kind: ProfileKind::PiecewiseConstant,
            breakpoints,
            values,
            curve,
        })
    }

    /// `values[i]` is the rate at node `breakpoints[i]`; the rate
    /// interpolates linearly between consecutive nodes and is constant
    /// before the first node and after the last one.
    pub fn piecewise_linear(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ProfileError> {
        if breakpoints.is_empty() {
            return Err(ProfileError::Empty);
        }
        if values.len() != breakpoints.len() {
            return Err(ProfileError::LengthMismatch {
                expected: breakpoints.len(),
                got: values.len(),
                got_breakpoints: breakpoints.len(),
            });
        }
        check_breakpoints(&breakpoints)?;
        check_values(&values)?;
        let n = breakpoints.len();
        let mut starts = Vec::with_capacity(n + 1);
        let mut a = Vec::with_capacity(n + 1);
        let mut b = Vec::with_capacity(n + 1);
        starts.push(0.0);
        a.push(values[0]);
        b.push(0.0);
        for i in 0..n - 1 {
            starts.push(breakpoints[i]);
            a.push(values[i]);
            b.push((values[i + 1] - values[i]) / (breakpoints[i + 1] - breakpoints[i]));
        }
        starts.push(breakpoints[n - 1]);
        a.push(values[n - 1]);
        b.push(0.0);
        Ok(Self {
            kind: ProfileKind::PiecewiseLinear,
            breakpoints,
            values,
            curve: PiecewiseAffine { starts, a, b },
        })
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rate at time `t` (right-continuous at breakpoints).
    pub fn value(&self, t: f64) -> f64 {
        self.curve.value(t)
    }

    /// Exact cumulative integral `∫_u^t` of the rate, `u ≤ t`.
    pub fn integral(&self, u: f64, t: f64) -> f64 {
        self.curve.integral(u, t)
    }

    /// Supremum of the rate over all times.
    pub fn sup(&self) -> f64 {
        self.curve.sup()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Smallest `t ≥ u` with `∫_u^t = target`, or `None` when the total
    /// remaining integral stays below `target` (rate vanishes eventually).
    pub fn invert_integral(&self, u: f64, target: f64) -> Option<f64> {
        self.curve.invert(u, target)
    }

    pub(crate) fn curve(&self) -> &PiecewiseAffine {
        &self.curve
    }

    /// Affine coefficients `(value_at_a, slope)` valid on the whole closed
    /// interval `[a, b]`, which must not straddle a breakpoint.
    pub(crate) fn affine_on(&self, a: f64, b: f64) -> (f64, f64) {
        self.curve.affine_on(a, b)
    }
}

fn check_breakpoints(breakpoints: &[f64]) -> Result<(), ProfileError> {
    for (i, &bp) in breakpoints.iter().enumerate() {
        if !bp.is_finite() || bp <= 0.0 {
            return Err(ProfileError::InvalidBreakpoint(i));
        }
        if i > 0 && bp <= breakpoints[i - 1] {
            return Err(ProfileError::NonIncreasingBreakpoints(i));
        }
    }
    Ok(())
}

fn check_values(values: &[f64]) -> Result<(), ProfileError> {
    if values.is_empty() {
        return Err(ProfileError::Empty);
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(ProfileError::InvalidValue(i));
        }
    }
    Ok(())
}

/// Canonical piecewise-affine curve on `[0, ∞[`.
///
/// Panel `i` covers `[starts[i], starts[i+1][` (the last panel extends to
/// `+∞` and always has zero slope) and evaluates to
/// `a[i] + b[i]·(t − starts[i])`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PiecewiseAffine {
    starts: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PiecewiseAffine {
    pub(crate) fn zero() -> Self {
        Self {
            starts: vec![0.0],
            a: vec![0.0],
            b: vec![0.0],
        }
    }

    /// Interior panel boundaries (everything after the leading 0).
    pub(crate) fn breakpoints(&self) -> &[f64] {
        &self.starts[1..]
    }

    fn panel_index(&self, t: f64) -> usize {
        // partition_point: first index with starts[i] > t
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub(crate) fn value(&self, t: f64) -> f64 {
        let i = self.panel_index(t);
        self.a[i] + self.b[i] * (t - self.starts[i])
    }

    pub(crate) fn integral(&self, u: f64, t: f64) -> f64 {
        debug_assert!(u <= t, "integral bounds out of order: {u} > {t}");
        if u >= t {
            return 0.0;
        }
        let first = self.panel_index(u);
        let last = self.panel_index(t);
        let mut total = 0.0;
        for i in first..=last {
            let lo = if i == first { u } else { self.starts[i] };
            let hi = if i == last { t } else { self.starts[i + 1] };
            let s = self.starts[i];
            total += self.a[i] * (hi - lo) + 0.5 * self.b[i] * ((hi - s).powi(2) - (lo - s).powi(2));
        }
        total
    }

    pub(crate) fn sup(&self) -> f64 {
        let n = self.starts.len();
        let mut sup = 0.0f64;
        for i in 0..n {
            sup = sup.max(self.a[i]);
            if i + 1 < n {
                sup = sup.max(self.a[i] + self.b[i] * (self.starts[i + 1] - self.starts[i]));
            }
        }
        debug_assert_eq!(self.b[n - 1], 0.0, "unbounded tail panel");
        sup
    }

    pub(crate) fn invert(&self, u: f64, target: f64) -> Option<f64> {
        debug_assert!(target >= 0.0);
        if target <= 0.0 {
            return Some(u);
        }
        let n = self.starts.len();
        let mut remaining = target;
        let mut i = self.panel_index(u);
        loop {
            let lo = if i == self.panel_index(u) { u } else { self.starts[i] };
            let v_lo = self.a[i] + self.b[i] * (lo - self.starts[i]);
            let slope = self.b[i];
            if i + 1 == n {
                // tail panel: constant rate v_lo forever
                if v_lo <= 0.0 {
                    return None;
                }
                return Some(lo + remaining / v_lo);
            }
            let hi = self.starts[i + 1];
            let width = hi - lo;
            let panel_integral = v_lo * width + 0.5 * slope * width * width;
            if panel_integral >= remaining {
                let delta = if slope == 0.0 {
                    if v_lo <= 0.0 {
                        // zero-rate panel with zero mass; remaining must be 0
                        0.0
                    } else {
                        remaining / v_lo
                    }
                } else {
                    let disc = (v_lo * v_lo + 2.0 * slope * remaining).max(0.0);
                    2.0 * remaining / (v_lo + disc.sqrt())
                };
                return Some(lo + delta.min(width));
            }
            remaining -= panel_integral;
            i += 1;
        }
    }

    /// Time from which the curve is identically zero, if any.
    pub(crate) fn zero_tail_start(&self) -> Option<f64> {
        let last = self.starts.len() - 1;
        (self.a[last] == 0.0 && self.b[last] == 0.0).then(|| self.starts[last])
    }

    pub(crate) fn affine_on(&self, a: f64, b: f64) -> (f64, f64) {
        debug_assert!(a < b);
        let i = self.panel_index(0.5 * (a + b));
        debug_assert!(
            self.starts[i] <= a + 1e-12 && (i + 1 == self.starts.len() || self.starts[i + 1] >= b - 1e-12),
            "interval [{a}, {b}] straddles a profile breakpoint"
        );
        (self.a[i] + self.b[i] * (a - self.starts[i]), self.b[i])
    }

    /// Pointwise sum of several curves, on the merged panel set.
    pub(crate) fn sum<'a>(curves: impl Iterator<Item = &'a PiecewiseAffine>) -> PiecewiseAffine {
        let curves: Vec<&PiecewiseAffine> = curves.collect();
        if curves.is_empty() {
            return PiecewiseAffine::zero();
        }
        let mut starts: Vec<f64> = curves.iter().flat_map(|c| c.starts.iter().copied()).collect();
        starts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        starts.dedup();
        let mut a = Vec::with_capacity(starts.len());
        let mut b = Vec::with_capacity(starts.len());
        for &s in &starts {
            let mut va = 0.0;
            let mut vb = 0.0;
            for c in &curves {
                let i = c.panel_index(s);
                va += c.a[i] + c.b[i] * (s - c.starts[i]);
                vb += c.b[i];
            }
            a.push(va);
            b.push(vb);
        }
        PiecewiseAffine { starts, a, b }
    }
}
