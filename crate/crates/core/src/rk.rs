//! Embedded Dormand-Prince 5(4) integrator on flat state vectors.
//!
//! Plain explicit adaptive stepping with a PI-free standard controller.
//! Callers are responsible for splitting the integration range at points
//! where the right-hand side is discontinuous; within a call the RHS must be
//! smooth.  Supports decreasing time (backward integration) via `t1 < t0`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RkError {
    #[error("step size underflow at t = {t} (|h| = {h:.3e}): problem too stiff for explicit stepping")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct RkOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard cap on |h|; ties the explicit method to the stiffness scale.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for RkOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_error_estimate: f64,
}

// Dormand-Prince coefficients.
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const A7: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// b − b̂ (5th-order weights minus the embedded 4th-order weights)
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrate `y' = rhs(t, y)` from `t0` to `t1`, advancing `y` in place.
/// `observe` runs on every accepted state.
pub fn integrate<F, O>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y: &mut [f64],
    opts: &RkOptions,
    stats: &mut RkStats,
    mut observe: O,
) -> Result<(), RkError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(());
    }
    let dir = span.signum();
    let n = y.len();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    let min_step = span.abs() * 1e-14;
    let mut h = (span.abs() / 100.0).min(opts.max_step).max(min_step) * dir;
    let mut t = t0;
    rhs(t, y, &mut k[0]);
    let mut fsal_fresh = true;
    let mut just_rejected = false;

    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(RkError::MaxSteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if !fsal_fresh {
            rhs(t, y, &mut k[0]);
            fsal_fresh = true;
        }

        stage(&mut rhs, t + C[0] * h, h, y, &A2, &mut ytmp, &mut k);
        stage(&mut rhs, t + C[1] * h, h, y, &A3, &mut ytmp, &mut k);
        stage(&mut rhs, t + C[2] * h, h, y, &A4, &mut ytmp, &mut k);
        stage(&mut rhs, t + C[3] * h, h, y, &A5, &mut ytmp, &mut k);
        stage(&mut rhs, t + C[4] * h, h, y, &A6, &mut ytmp, &mut k);
        // 5th-order solution (also the last stage combination)
        for i in 0..n {
            let mut acc = 0.0;
            for (j, aj) in A7.iter().enumerate() {
                acc += aj * k[j][i];
            }
            ynew[i] = y[i] + h * acc;
        }
        rhs(t + h, &ynew, &mut k[6]);

        // scaled RMS error estimate
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, ej) in E.iter().enumerate() {
                e += ej * k[j][i];
            }
            e *= h;
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(ynew[i].abs());
            let r = e / sc;
            err_sq += r * r;
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            stats.accepted += 1;
            stats.max_error_estimate = stats.max_error_estimate.max(err);
            t += h;
            y.copy_from_slice(&ynew);
            observe(t, y);
            k.swap(0, 6); // FSAL
            let facmax = if just_rejected { 1.0 } else { 5.0 };
            let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, facmax);
            h = (h.abs() * fac).min(opts.max_step) * dir;
            just_rejected = false;
        } else {
            stats.rejected += 1;
            just_rejected = true;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h = h.abs() * fac * dir;
            fsal_fresh = true; // k1 still valid at unchanged (t, y)
            if h.abs() < min_step {
                return Err(RkError::StepUnderflow { t, h: h.abs() });
            }
        }
    }
    Ok(())
}

// Computes stage `a.len()` from the previous stages (the row length fixes
// which stage this is) and stores its slope into `k[a.len()]`.
#[inline]
fn stage<F>(rhs: &mut F, ts: f64, h: f64, y: &[f64], a: &[f64], ytmp: &mut [f64], k: &mut [Vec<f64>])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let (prev, rest) = k.split_at_mut(a.len());
    for i in 0..n {
        let mut acc = 0.0;
        for (j, aj) in a.iter().enumerate() {
            acc += aj * prev[j][i];
        }
        ytmp[i] = y[i] + h * acc;
    }
    rhs(ts, ytmp, &mut rest[0]);
}
