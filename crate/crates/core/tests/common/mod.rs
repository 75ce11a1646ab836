//! Independent reference oracle for the integration tests.
//!
//! For models whose rates are constant or piecewise constant, the kernel is
//! a product of matrix exponentials, one per rate segment.  Each factor is
//! evaluated by uniformization: with `λ ≥ max_x q(x)` on the segment and
//! `M = I + Q/λ`,
//!
//! ```text
//! e^{QΔ} = Σ_k e^{−λΔ} (λΔ)^k / k! · M^k,
//! ```
//!
//! a series of nonnegative substochastic matrices with Poisson weights.  It
//! shares no code with the solver routes other than rate evaluation.

use jumpq_core::qmodel::QModel;
use ndarray::Array2;

/// Generator matrix frozen on a rate segment (evaluated at the midpoint,
/// valid for piecewise-constant profiles).
fn segment_generator(model: &QModel, a: f64, b: f64) -> Array2<f64> {
    let n = model.n_total();
    let mid = 0.5 * (a + b);
    let mut q = Array2::<f64>::zeros((n, n));
    for tr in model.transitions() {
        q[(tr.from, tr.to)] += tr.profile.value(mid);
    }
    for x in 0..n {
        q[(x, x)] = -model.total_rate(x, mid).unwrap();
    }
    q
}

fn expm_uniformized(q: &Array2<f64>, delta: f64) -> Array2<f64> {
    let n = q.nrows();
    let lambda = (0..n).map(|x| -q[(x, x)]).fold(0.0f64, f64::max);
    if lambda == 0.0 {
        return Array2::eye(n);
    }
    // scaling and squaring keeps the Poisson weights away from underflow;
    // every factor is nonnegative, so squaring is cancellation-free
    let squarings = (lambda * delta).log2().ceil().max(0.0) as u32;
    let rho = lambda * delta / 2f64.powi(squarings as i32);

    let m = {
        let mut m = q / lambda;
        for x in 0..n {
            m[(x, x)] += 1.0;
        }
        m
    };
    let mut weight = (-rho).exp();
    let mut power = Array2::<f64>::eye(n); // M^k
    let mut acc = &power * weight;
    let mut k = 0usize;
    let mut tail = 1.0 - weight;
    while tail > 1e-18 && k < 10_000 {
        k += 1;
        weight *= rho / k as f64;
        power = power.dot(&m);
        acc.scaled_add(weight, &power);
        tail -= weight;
    }
    for _ in 0..squarings {
        acc = acc.dot(&acc);
    }
    acc
}

/// Kernel `P(u, ·; t, ·)` as a product of per-segment matrix exponentials.
/// Only valid for constant / piecewise-constant rate models.
pub fn uniformization_kernel(model: &QModel, u: f64, t: f64) -> Array2<f64> {
    let mut boundaries = vec![u];
    boundaries.extend(model.breakpoints_within(u, t));
    boundaries.push(t);
    let mut kernel = Array2::<f64>::eye(model.n_total());
    for w in boundaries.windows(2) {
        let q = segment_generator(model, w[0], w[1]);
        kernel = kernel.dot(&expm_uniformized(&q, w[1] - w[0]));
    }
    kernel
}

/// Max absolute entry difference.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
