//! Jump-count series construction of the minimal transition function.
//!
//! The kernel is assembled as `P̄ = Σ_n P̄⁽ⁿ⁾`, where `P̄⁽ⁿ⁾(u,x;t,B)` is the
//! probability of sitting in `B` at time `t` after exactly `n` jumps past
//! `u`.  The zeroth term is the no-jump survival kernel; higher terms follow
//! either the backward recursion (condition on the first jump) or the
//! forward recursion through the jump-then-survive kernel `Π`.  Both
//! recursions are integral operators evaluated by composite Simpson rules on
//! panels aligned with every profile breakpoint, with the survival factor
//! between panel boundaries taken in closed form, so panel-to-panel error
//! accumulation is multiplicative in exact exponentials.
//!
//! Partial sums increase entrywise towards the minimal solution; the
//! remainder after `N` terms is bounded per row by the tail of a Poisson
//! variable with mean `q̄·(t−u)` (a uniformized dominating jump count,
//! valid because rates are bounded on finite spaces), or is exactly zero
//! once a term vanishes identically.

use crate::kernel::Kernel;
use crate::qmodel::{QModel, QModelError, SegmentRates};
use ndarray::Array2;
use statrs::function::gamma::gamma_lr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FellerError {
    #[error("window out of order: u = {u} must satisfy 0 <= u < t = {t}")]
    InvalidWindow { u: f64, t: f64 },
    #[error("tail tolerance must be positive, got {0}")]
    TailTolNotPositive(f64),
    #[error("family grid is not aligned with the model breakpoint at t = {breakpoint}")]
    GridMisaligned { breakpoint: f64 },
    #[error("family on {got} nodes does not match grid with {expected} nodes")]
    FamilySize { expected: usize, got: usize },
    #[error("kernel dimension {got} does not match the model ({expected} states)")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "series tail still {achieved:.3e} > {tol:.3e} after {terms} terms: convergence too slow"
    )]
    SlowConvergence { terms: usize, achieved: f64, tol: f64 },
    #[error(transparent)]
    Model(#[from] QModelError),
}

/// Quadrature controls for the series recursions.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Approximate number of panels across the whole window; every profile
    /// breakpoint additionally becomes a panel boundary.
    pub target_panels: usize,
    /// Panels where `q(x,·)·width` exceeds this are integrated on
    /// subdivided sub-intervals (with interpolated integrand samples) so a
    /// fast survival factor cannot be misread as smooth.
    pub stiffness_threshold: f64,
    /// Cap on the per-panel subdivision count.
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            target_panels: 192,
            stiffness_threshold: 0.5,
            max_subdivisions: 256,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FellerOptions {
    pub quad: QuadOptions,
    /// Hard cap on the number of series terms.
    pub max_terms: usize,
}

impl Default for FellerOptions {
    fn default() -> Self {
        Self {
            quad: QuadOptions::default(),
            max_terms: 10_000,
        }
    }
}

/// Panel mesh on `[u, t]`: breakpoint-delimited segments, each split into
/// equal panels, each panel carrying its midpoint as a node.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    u: f64,
    t: f64,
    nodes: Vec<f64>,
    /// `(left, mid, right)` node indices per panel, in ascending order.
    panels: Vec<[usize; 3]>,
    panel_segment: Vec<usize>,
    segments: Vec<(f64, f64)>,
}

impl QuadratureGrid {
    pub fn build(model: &QModel, u: f64, t: f64, opts: &QuadOptions) -> Result<Arc<Self>, FellerError> {
        check_window(u, t)?;
        let mut boundaries = vec![u];
        boundaries.extend(model.breakpoints_within(u, t));
        boundaries.push(t);
        let h_target = (t - u) / opts.target_panels.max(1) as f64;

        let mut nodes = Vec::new();
        let mut panels = Vec::new();
        let mut panel_segment = Vec::new();
        let mut segments = Vec::new();
        nodes.push(u);
        for w in boundaries.windows(2) {
            let (a, b) = (w[0], w[1]);
            segments.push((a, b));
            let seg_idx = segments.len() - 1;
            let count = (((b - a) / h_target).ceil() as usize).max(1);
            for k in 0..count {
                let left_idx = nodes.len() - 1;
                let right = if k + 1 == count {
                    b
                } else {
                    a + (b - a) * (k + 1) as f64 / count as f64
                };
                let left = nodes[left_idx];
                nodes.push(0.5 * (left + right));
                nodes.push(right);
                panels.push([left_idx, left_idx + 1, left_idx + 2]);
                panel_segment.push(seg_idx);
            }
        }
        Ok(Arc::new(Self {
            u,
            t,
            nodes,
            panels,
            panel_segment,
            segments,
        }))
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_panels(&self) -> usize {
        self.panels.len()
    }

    /// `(left, mid, right)` node indices of panel `i`.
    pub fn panel(&self, i: usize) -> [usize; 3] {
        self.panels[i]
    }

    /// Whether `time` is one of the grid's segment boundaries.
    pub fn has_boundary(&self, time: f64) -> bool {
        self.segments.iter().any(|&(a, b)| a == time || b == time)
    }

    fn is_aligned_with(&self, model: &QModel) -> Result<(), FellerError> {
        for bp in model.breakpoints_within(self.u, self.t) {
            if !self.segments.iter().any(|&(a, b)| a == bp || b == bp) {
                return Err(FellerError::GridMisaligned { breakpoint: bp });
            }
        }
        Ok(())
    }
}

fn check_window(u: f64, t: f64) -> Result<(), FellerError> {
    if !(u >= 0.0 && t > u && t.is_finite()) {
        return Err(FellerError::InvalidWindow { u, t });
    }
    Ok(())
}

/// Kernels `P(s, ·; t, ·)` for every grid node `s` (fixed terminal time).
#[derive(Debug, Clone)]
pub struct BackwardFamily {
    grid: Arc<QuadratureGrid>,
    kernels: Vec<Array2<f64>>,
}

/// Kernels `P(u, ·; s, ·)` for every grid node `s` (fixed start time).
#[derive(Debug, Clone)]
pub struct ForwardFamily {
    grid: Arc<QuadratureGrid>,
    kernels: Vec<Array2<f64>>,
}

macro_rules! family_common {
    ($name:ident) => {
        impl $name {
            pub fn new(
                grid: Arc<QuadratureGrid>,
                kernels: Vec<Array2<f64>>,
            ) -> Result<Self, FellerError> {
                if kernels.len() != grid.nodes.len() {
                    return Err(FellerError::FamilySize {
                        expected: grid.nodes.len(),
                        got: kernels.len(),
                    });
                }
                Ok(Self { grid, kernels })
            }

            pub fn grid(&self) -> &Arc<QuadratureGrid> {
                &self.grid
            }

            pub fn kernels(&self) -> &[Array2<f64>] {
                &self.kernels
            }

            pub fn node_kernel(&self, i: usize) -> &Array2<f64> {
                &self.kernels[i]
            }

            pub fn is_identically_zero(&self) -> bool {
                self.kernels.iter().all(|k| k.iter().all(|&v| v == 0.0))
            }
        }
    };
}

family_common!(BackwardFamily);
family_common!(ForwardFamily);

impl BackwardFamily {
    /// The kernel anchored at the window start: `P(u, ·; t, ·)`.
    pub fn at_window(&self) -> Kernel {
        Kernel {
            u: self.grid.u,
            t: self.grid.t,
            matrix: self.kernels[0].clone(),
        }
    }
}

impl ForwardFamily {
    pub fn at_window(&self) -> Kernel {
        Kernel {
            u: self.grid.u,
            t: self.grid.t,
            matrix: self.kernels[self.kernels.len() - 1].clone(),
        }
    }
}

/// No-jump survival kernel: `I{x ∈ B}·e^{−∫_u^t q(x,s) ds}`.
pub fn p0(model: &QModel, u: f64, t: f64) -> Result<Kernel, FellerError> {
    check_window(u, t)?;
    let n = model.n_total();
    let mut k = Kernel::zeros(n, u, t);
    for x in 0..n {
        k.matrix[(x, x)] = (-model.cumulative_rate(x, u, t)?).exp();
    }
    Ok(k)
}

/// Zeroth-term family over the backward grid orientation.
pub fn backward_p0_family(model: &QModel, grid: &Arc<QuadratureGrid>) -> BackwardFamily {
    let n = model.n_total();
    let t = grid.t;
    let kernels = grid
        .nodes
        .iter()
        .map(|&s| {
            let mut m = Array2::zeros((n, n));
            for x in 0..n {
                m[(x, x)] = (-model.total_rate_curve(x).integral(s, t)).exp();
            }
            m
        })
        .collect();
    BackwardFamily {
        grid: Arc::clone(grid),
        kernels,
    }
}

/// Zeroth-term family over the forward grid orientation.
pub fn forward_p0_family(model: &QModel, grid: &Arc<QuadratureGrid>) -> ForwardFamily {
    let n = model.n_total();
    let u = grid.u;
    let kernels = grid
        .nodes
        .iter()
        .map(|&s| {
            let mut m = Array2::zeros((n, n));
            for x in 0..n {
                m[(x, x)] = (-model.total_rate_curve(x).integral(u, s)).exp();
            }
            m
        })
        .collect();
    ForwardFamily {
        grid: Arc::clone(grid),
        kernels,
    }
}

/// Jump-then-survive kernel `Π(s, y; t, {z}) = q(y,s,{z})·e^{−∫_s^t q(z,θ)dθ}`.
pub fn pi_kernel(model: &QModel, s: f64, t: f64) -> Result<Array2<f64>, FellerError> {
    check_window(s, t)?;
    let n = model.n_total();
    let mut pi = Array2::zeros((n, n));
    for tr in model.transitions() {
        pi[(tr.from, tr.to)] =
            tr.profile.value(s) * (-model.cumulative_rate(tr.to, s, t)?).exp();
    }
    Ok(pi)
}

// Quadratic interpolation coefficients on a panel scaled to [0, 1]
// (nodes at 0, 1/2, 1).
#[inline]
fn lagrange3(xi: f64) -> (f64, f64, f64) {
    (
        2.0 * (xi - 0.5) * (xi - 1.0),
        4.0 * xi * (1.0 - xi),
        2.0 * xi * (xi - 0.5),
    )
}

#[inline]
fn interp_clip(xi: f64, gl: f64, gm: f64, gr: f64) -> f64 {
    let (cl, cm, cr) = lagrange3(xi);
    let v = cl * gl + cm * gm + cr * gr;
    // samples can carry -1e-16 noise when they come from an ODE route
    v.clamp(0.0, gl.max(gm).max(gr).max(0.0))
}

struct PanelFrame {
    left: f64,
    width: f64,
}

impl PanelFrame {
    #[inline]
    fn xi(&self, s: f64) -> f64 {
        (s - self.left) / self.width
    }
}

/// One application of the backward integral operator:
/// `out(s,x;t,B) = ∫_s^t e^{−∫_s^r q(x)} Σ_y q(x,r,{y}) prev(r,y;t,B) dr`.
///
/// With `prev` the n-th term family this yields the (n+1)-th term family;
/// the same operator drives the fixed-point residual of the backward
/// integral equation.
pub fn pn_backward(model: &QModel, prev: &BackwardFamily) -> Result<BackwardFamily, FellerError> {
    let grid = &prev.grid;
    grid.is_aligned_with(model)?;
    let n = model.n_total();
    if prev.kernels[0].nrows() != n {
        return Err(FellerError::DimensionMismatch {
            expected: n,
            got: prev.kernels[0].nrows(),
        });
    }
    let opts = QuadOptions::default();
    Ok(apply_backward(model, prev, &opts))
}

/// One application of the forward integral operator through `Π`:
/// `out(u,x;s,B) = ∫_u^s Σ_y Π(r,y;s,B) prev(u,x;r,{y}) dr`.
pub fn pn_forward(model: &QModel, prev: &ForwardFamily) -> Result<ForwardFamily, FellerError> {
    let grid = &prev.grid;
    grid.is_aligned_with(model)?;
    let n = model.n_total();
    if prev.kernels[0].nrows() != n {
        return Err(FellerError::DimensionMismatch {
            expected: n,
            got: prev.kernels[0].nrows(),
        });
    }
    let opts = QuadOptions::default();
    Ok(apply_forward(model, prev, &opts))
}

fn segment_tables(model: &QModel, grid: &QuadratureGrid) -> Vec<SegmentRates> {
    grid.segments
        .iter()
        .map(|&(a, b)| model.segment_rates(a, b))
        .collect()
}

fn apply_backward(model: &QModel, prev: &BackwardFamily, opts: &QuadOptions) -> BackwardFamily {
    let grid = Arc::clone(&prev.grid);
    let n = model.n_total();
    let nodes = &grid.nodes;
    let seg_rates = segment_tables(model, &grid);
    let mut out: Vec<Array2<f64>> = nodes.iter().map(|_| Array2::zeros((n, n))).collect();

    let mut g_l = vec![0.0; n];
    let mut g_m = vec![0.0; n];
    let mut g_r = vec![0.0; n];
    let mut f_r = vec![0.0; n];
    let mut f_m = vec![0.0; n];
    let mut f_l = vec![0.0; n];
    let mut ghat = vec![0.0; n];

    for x in 0..n {
        let out_idx = model.transition_indices_from(x);
        if out_idx.is_empty() {
            continue; // absorbing: all higher terms vanish from x
        }
        f_r.iter_mut().for_each(|v| *v = 0.0); // value at the terminal node t
        for p in (0..grid.panels.len()).rev() {
            let [l, m, r] = grid.panels[p];
            let seg = &seg_rates[grid.panel_segment[p]];
            let (sl, sm, sr) = (nodes[l], nodes[m], nodes[r]);
            let frame = PanelFrame {
                left: sl,
                width: sr - sl,
            };
            gather_backward(prev, seg, out_idx, l, sl, &mut g_l);
            gather_backward(prev, seg, out_idx, m, sm, &mut g_m);
            gather_backward(prev, seg, out_idx, r, sr, &mut g_r);

            let q_max = seg.total_rate(x, sl).max(seg.total_rate(x, sr));
            let h = sr - sl;
            let curve = model.total_rate_curve(x);

            if q_max * h <= opts.stiffness_threshold {
                let e_lm = (-curve.integral(sl, sm)).exp();
                let e_lr = (-curve.integral(sl, sr)).exp();
                let e_mr = (-curve.integral(sm, sr)).exp();
                let mid2 = 0.5 * (sm + sr);
                let e_m_mid2 = (-curve.integral(sm, mid2)).exp();
                let half = sr - sm;
                for c in 0..n {
                    let gh = interp_clip(frame.xi(mid2), g_l[c], g_m[c], g_r[c]);
                    let i_half = half / 6.0 * (g_m[c] + 4.0 * e_m_mid2 * gh + e_mr * g_r[c]);
                    let i_full = h / 6.0 * (g_l[c] + 4.0 * e_lm * g_m[c] + e_lr * g_r[c]);
                    f_m[c] = i_half + e_mr * f_r[c];
                    f_l[c] = i_full + e_lr * f_r[c];
                }
            } else {
                let e_mr = (-curve.integral(sm, sr)).exp();
                let e_lm = (-curve.integral(sl, sm)).exp();
                stiff_integral_backward(
                    curve, &frame, opts, q_max, sm, sr, &g_l, &g_m, &g_r, &mut ghat, &mut f_m,
                );
                for c in 0..n {
                    f_m[c] += e_mr * f_r[c];
                }
                stiff_integral_backward(
                    curve, &frame, opts, q_max, sl, sm, &g_l, &g_m, &g_r, &mut ghat, &mut f_l,
                );
                for c in 0..n {
                    f_l[c] += e_lm * f_m[c];
                }
            }
            out[m].row_mut(x).iter_mut().zip(&f_m).for_each(|(o, &v)| *o = v);
            out[l].row_mut(x).iter_mut().zip(&f_l).for_each(|(o, &v)| *o = v);
            f_r.copy_from_slice(&f_l);
        }
    }
    BackwardFamily { grid, kernels: out }
}

#[inline]
fn gather_backward(
    prev: &BackwardFamily,
    seg: &SegmentRates,
    out_idx: &[usize],
    node: usize,
    s: f64,
    g: &mut [f64],
) {
    g.iter_mut().for_each(|v| *v = 0.0);
    let kernel = &prev.kernels[node];
    for &ti in out_idx {
        let rate = seg.entry_rate(ti, s);
        if rate == 0.0 {
            continue;
        }
        let (_, to, _, _) = seg.entries[ti];
        let row = kernel.row(to);
        for (gc, &pv) in g.iter_mut().zip(row.iter()) {
            *gc += rate * pv;
        }
    }
}

/// `∫_a^b e^{−∫_a^s q(x)} ĝ(s) ds` on a stiff stretch, by subdividing until
/// the survival factor is resolved; `ĝ` interpolates the three panel samples
/// and is clipped to their range so overshoot cannot manufacture mass.
#[allow(clippy::too_many_arguments)]
fn stiff_integral_backward(
    curve: &crate::profile::PiecewiseAffine,
    frame: &PanelFrame,
    opts: &QuadOptions,
    q_max: f64,
    a: f64,
    b: f64,
    g_l: &[f64],
    g_m: &[f64],
    g_r: &[f64],
    ghat: &mut [f64],
    out: &mut [f64],
) {
    let n = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    let m_sub = (((q_max * (b - a)) / opts.stiffness_threshold).ceil() as usize)
        .clamp(1, opts.max_subdivisions);
    let hs = (b - a) / m_sub as f64;
    let mut prefix = 1.0; // e^{−∫_a^{a_j} q}
    for j in 0..m_sub {
        let aj = a + hs * j as f64;
        let bj = if j + 1 == m_sub { b } else { a + hs * (j + 1) as f64 };
        let mj = 0.5 * (aj + bj);
        let e_half = (-curve.integral(aj, mj)).exp();
        let e_full = (-curve.integral(aj, bj)).exp();
        for c in 0..n {
            let ga = interp_clip(frame.xi(aj), g_l[c], g_m[c], g_r[c]);
            let gm = interp_clip(frame.xi(mj), g_l[c], g_m[c], g_r[c]);
            let gb = interp_clip(frame.xi(bj), g_l[c], g_m[c], g_r[c]);
            ghat[c] = (bj - aj) / 6.0 * (ga + 4.0 * e_half * gm + e_full * gb);
        }
        for c in 0..n {
            out[c] += prefix * ghat[c];
        }
        prefix *= e_full;
    }
}

fn apply_forward(model: &QModel, prev: &ForwardFamily, opts: &QuadOptions) -> ForwardFamily {
    let grid = Arc::clone(&prev.grid);
    let n = model.n_total();
    let nodes = &grid.nodes;
    let seg_rates = segment_tables(model, &grid);
    let mut out: Vec<Array2<f64>> = nodes.iter().map(|_| Array2::zeros((n, n))).collect();

    let mut h_l = Array2::<f64>::zeros((n, n));
    let mut h_m = Array2::<f64>::zeros((n, n));
    let mut h_r = Array2::<f64>::zeros((n, n));

    for p in 0..grid.panels.len() {
        let [l, m, r] = grid.panels[p];
        let seg = &seg_rates[grid.panel_segment[p]];
        let (sl, sm, sr) = (nodes[l], nodes[m], nodes[r]);
        let frame = PanelFrame {
            left: sl,
            width: sr - sl,
        };
        gather_forward(prev, seg, l, sl, &mut h_l);
        gather_forward(prev, seg, m, sm, &mut h_m);
        gather_forward(prev, seg, r, sr, &mut h_r);

        let h = sr - sl;
        let half1 = sm - sl;
        let mid1 = 0.5 * (sl + sm);
        // out[l] is already final (zero for the first panel's left node)
        let f_l = out[l].clone();
        for z in 0..n {
            let curve = model.total_rate_curve(z);
            let q_max = seg.total_rate(z, sl).max(seg.total_rate(z, sr));
            if q_max * h <= opts.stiffness_threshold {
                let e_lr = (-curve.integral(sl, sr)).exp();
                let e_mr = (-curve.integral(sm, sr)).exp();
                let e_lm = (-curve.integral(sl, sm)).exp();
                let e_mid1_m = (-curve.integral(mid1, sm)).exp();
                let xi_mid1 = frame.xi(mid1);
                for x in 0..n {
                    let (hl, hm, hr) = (h_l[(x, z)], h_m[(x, z)], h_r[(x, z)]);
                    let hh = interp_clip(xi_mid1, hl, hm, hr);
                    let i_half = half1 / 6.0 * (e_lm * hl + 4.0 * e_mid1_m * hh + hm);
                    let i_full = h / 6.0 * (e_lr * hl + 4.0 * e_mr * hm + hr);
                    out[m][(x, z)] = e_lm * f_l[(x, z)] + i_half;
                    out[r][(x, z)] = e_lr * f_l[(x, z)] + i_full;
                }
            } else {
                let e_lm = (-curve.integral(sl, sm)).exp();
                let e_mr = (-curve.integral(sm, sr)).exp();
                for x in 0..n {
                    let (hl, hm, hr) = (h_l[(x, z)], h_m[(x, z)], h_r[(x, z)]);
                    let i_half =
                        stiff_integral_forward(curve, &frame, opts, q_max, sl, sm, hl, hm, hr);
                    out[m][(x, z)] = e_lm * f_l[(x, z)] + i_half;
                    let i_second =
                        stiff_integral_forward(curve, &frame, opts, q_max, sm, sr, hl, hm, hr);
                    out[r][(x, z)] = e_mr * out[m][(x, z)] + i_second;
                }
            }
        }
    }
    ForwardFamily { grid, kernels: out }
}

#[inline]
fn gather_forward(
    prev: &ForwardFamily,
    seg: &SegmentRates,
    node: usize,
    s: f64,
    h: &mut Array2<f64>,
) {
    h.fill(0.0);
    let kernel = &prev.kernels[node];
    let n = h.nrows();
    for (ti, &(from, to, _, _)) in seg.entries.iter().enumerate() {
        let rate = seg.entry_rate(ti, s);
        if rate == 0.0 {
            continue;
        }
        for x in 0..n {
            h[(x, to)] += rate * kernel[(x, from)];
        }
    }
}

/// `∫_a^b e^{−∫_s^b q(z)} ĥ(s) ds`, stiff-safe, for one `(x, z)` entry.
#[allow(clippy::too_many_arguments)]
fn stiff_integral_forward(
    curve: &crate::profile::PiecewiseAffine,
    frame: &PanelFrame,
    opts: &QuadOptions,
    q_max: f64,
    a: f64,
    b: f64,
    hl: f64,
    hm: f64,
    hr: f64,
) -> f64 {
    let m_sub = (((q_max * (b - a)) / opts.stiffness_threshold).ceil() as usize)
        .clamp(1, opts.max_subdivisions);
    let hs = (b - a) / m_sub as f64;
    let mut acc = 0.0;
    let mut suffix = 1.0; // e^{−∫_{b_j}^{b} q}
    for j in (0..m_sub).rev() {
        let aj = a + hs * j as f64;
        let bj = if j + 1 == m_sub { b } else { a + hs * (j + 1) as f64 };
        let mj = 0.5 * (aj + bj);
        let e_half = (-curve.integral(mj, bj)).exp();
        let e_full = (-curve.integral(aj, bj)).exp();
        let ga = interp_clip(frame.xi(aj), hl, hm, hr);
        let gm = interp_clip(frame.xi(mj), hl, hm, hr);
        let gb = interp_clip(frame.xi(bj), hl, hm, hr);
        let local = (bj - aj) / 6.0 * (e_full * ga + 4.0 * e_half * gm + gb);
        acc += suffix * local;
        suffix *= e_full;
    }
    acc
}

/// Ordered series terms at a fixed window together with their running sums
/// and the per-row bound on everything not yet summed.
#[derive(Debug, Clone)]
pub struct IterateStack {
    pub u: f64,
    pub t: f64,
    terms: Vec<Array2<f64>>,
    partial_sums: Vec<Array2<f64>>,
    tail_bounds: Vec<f64>,
}

impl IterateStack {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, i: usize) -> Kernel {
        Kernel {
            u: self.u,
            t: self.t,
            matrix: self.terms[i].clone(),
        }
    }

    pub fn partial_sum(&self, i: usize) -> Kernel {
        Kernel {
            u: self.u,
            t: self.t,
            matrix: self.partial_sums[i].clone(),
        }
    }

    pub fn final_kernel(&self) -> Kernel {
        self.partial_sum(self.partial_sums.len() - 1)
    }

    /// Upper bound on `Σ_{n>N} P̄⁽ⁿ⁾(u,x;t,X)` per row, after all stored terms.
    pub fn tail_bounds(&self) -> &[f64] {
        &self.tail_bounds
    }
}

/// `P(Poisson(λ) > n)`.
pub fn poisson_tail(n: usize, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    gamma_lr((n + 1) as f64, lambda)
}

struct SeriesState {
    stack: IterateStack,
    family: BackwardFamily,
    lambda: f64,
    zero_tail: bool,
}

impl SeriesState {
    fn start(model: &QModel, u: f64, t: f64, opts: &FellerOptions) -> Result<Self, FellerError> {
        let grid = QuadratureGrid::build(model, u, t, &opts.quad)?;
        let family = backward_p0_family(model, &grid);
        let term0 = family.kernels[0].clone();
        let stack = IterateStack {
            u,
            t,
            partial_sums: vec![term0.clone()],
            terms: vec![term0],
            tail_bounds: vec![0.0; model.n_total()],
        };
        Ok(Self {
            stack,
            family,
            lambda: model.q_bound_all() * (t - u),
            zero_tail: false,
        })
    }

    fn push_next(&mut self, model: &QModel, opts: &FellerOptions) {
        let next = apply_backward(model, &self.family, &opts.quad);
        let term = next.kernels[0].clone();
        let sum = self.stack.partial_sums.last().unwrap() + &term;
        self.stack.terms.push(term);
        self.stack.partial_sums.push(sum);
        self.zero_tail = next.is_identically_zero();
        self.family = next;
    }

    fn current_tail(&self) -> f64 {
        if self.zero_tail {
            0.0
        } else {
            poisson_tail(self.stack.n_terms() - 1, self.lambda)
        }
    }

    fn finish(mut self) -> (Kernel, IterateStack) {
        let tail = self.current_tail();
        self.stack.tail_bounds.iter_mut().for_each(|b| *b = tail);
        let kernel = self.stack.final_kernel();
        (kernel, self.stack)
    }
}

/// Sum series terms until the per-row tail bound drops to `tail_tol`.
/// The returned kernel is the partial sum, an under-approximation of the
/// minimal solution by at most the reported tail.
pub fn feller_sum(
    model: &QModel,
    u: f64,
    t: f64,
    tail_tol: f64,
    opts: &FellerOptions,
) -> Result<(Kernel, IterateStack), FellerError> {
    if !(tail_tol > 0.0) {
        return Err(FellerError::TailTolNotPositive(tail_tol));
    }
    let mut state = SeriesState::start(model, u, t, opts)?;
    while state.current_tail() > tail_tol {
        if state.stack.n_terms() > opts.max_terms {
            return Err(FellerError::SlowConvergence {
                terms: state.stack.n_terms(),
                achieved: state.current_tail(),
                tol: tail_tol,
            });
        }
        state.push_next(model, opts);
    }
    Ok(state.finish())
}

/// Fixed number of series terms (`n_terms ≥ 1` including the zeroth),
/// regardless of how much tail remains.
pub fn feller_terms(
    model: &QModel,
    u: f64,
    t: f64,
    n_terms: usize,
    opts: &FellerOptions,
) -> Result<IterateStack, FellerError> {
    let mut state = SeriesState::start(model, u, t, opts)?;
    while state.stack.n_terms() < n_terms.max(1) {
        state.push_next(model, opts);
    }
    Ok(state.finish().1)
}

/// The partial-sum family `Σ_{k<n_terms} P̄⁽ᵏ⁾(s,·;t,·)` over the whole grid,
/// together with the stack of those terms.  Applying the backward operator
/// once more to the family yields the next partial sum minus its survival
/// term, which is what the minimality induction checks exploit.
pub fn series_families(
    model: &QModel,
    u: f64,
    t: f64,
    n_terms: usize,
    opts: &FellerOptions,
) -> Result<(BackwardFamily, IterateStack), FellerError> {
    let mut state = SeriesState::start(model, u, t, opts)?;
    let mut sum_kernels = state.family.kernels.clone();
    while state.stack.n_terms() < n_terms.max(1) {
        state.push_next(model, opts);
        for (acc, term) in sum_kernels.iter_mut().zip(&state.family.kernels) {
            *acc += term;
        }
    }
    let grid = Arc::clone(&state.family.grid);
    let (_, stack) = state.finish();
    Ok((BackwardFamily::new(grid, sum_kernels)?, stack))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::TimeProfile;
    use crate::qmodel::{StateSpace, Transition};
    use approx::assert_abs_diff_eq;

    fn two_state_symmetric() -> QModel {
        QModel::new(
            StateSpace::new(2).unwrap(),
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    profile: TimeProfile::constant(1.0).unwrap(),
                },
                Transition {
                    from: 1,
                    to: 0,
                    profile: TimeProfile::constant(1.0).unwrap(),
                },
            ],
            Vec::new(),
        )
        .unwrap()
    }

    fn zero_rate(n: usize) -> QModel {
        QModel::new(StateSpace::new(n).unwrap(), Vec::new(), Vec::new()).unwrap()
    }

    #[test]
    fn p0_is_diagonal_survival() {
        let m = two_state_symmetric();
        let (u, t) = (0.5, 0.5 + 2f64.ln());
        let k = p0(&m, u, t).unwrap();
        assert_eq!(k.matrix[(0, 1)], 0.0);
        assert_abs_diff_eq!(k.matrix[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn p0_piecewise_integral() {
        let m = QModel::new(
            StateSpace::new(2).unwrap(),
            vec![Transition {
                from: 0,
                to: 1,
                profile: TimeProfile::piecewise_constant(vec![1.0], vec![1.0, 3.0]).unwrap(),
            }],
            Vec::new(),
        )
        .unwrap();
        let k = p0(&m, 0.5, 1.5).unwrap();
        assert_abs_diff_eq!(k.matrix[(0, 0)], (-2.0f64).exp(), epsilon = 1e-14);
        assert!(matches!(
            p0(&m, 1.5, 0.5),
            Err(FellerError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn first_term_two_state_closed_form() {
        // P̄⁽¹⁾(u,0;t,{1}) = τ e^{−τ} for the symmetric unit-rate pair
        let m = two_state_symmetric();
        let (u, t) = (0.2, 0.2 + 2f64.ln());
        let tau = t - u;
        let grid = QuadratureGrid::build(&m, u, t, &QuadOptions::default()).unwrap();
        let f0 = backward_p0_family(&m, &grid);
        let f1 = pn_backward(&m, &f0).unwrap();
        let k1 = f1.at_window();
        assert_abs_diff_eq!(k1.matrix[(0, 1)], tau * (-tau).exp(), epsilon = 1e-10);
        assert_eq!(k1.matrix[(0, 0)], 0.0);
    }

    #[test]
    fn first_term_matches_two_exponential_convolution() {
        // pure birth 0 →(1) 1 →(4) 2:
        // P̄⁽¹⁾(u,0;t,{1}) = (e^{−Δ} − e^{−4Δ})/3
        let m = QModel::new(
            StateSpace::new(3).unwrap(),
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    profile: TimeProfile::constant(1.0).unwrap(),
                },
                Transition {
                    from: 1,
                    to: 2,
                    profile: TimeProfile::constant(4.0).unwrap(),
                },
            ],
            Vec::new(),
        )
        .unwrap();
        let (u, t) = (0.2, 1.0);
        let delta: f64 = t - u;
        let expect = ((-delta).exp() - (-4.0 * delta).exp()) / 3.0;
        let grid = QuadratureGrid::build(&m, u, t, &QuadOptions::default()).unwrap();
        let f1 = pn_backward(&m, &backward_p0_family(&m, &grid)).unwrap();
        assert_abs_diff_eq!(f1.at_window().matrix[(0, 1)], expect, epsilon = 1e-10);
    }

    #[test]
    fn zero_rate_terms_vanish() {
        let m = zero_rate(3);
        let grid = QuadratureGrid::build(&m, 0.1, 0.9, &QuadOptions::default()).unwrap();
        let f1 = pn_backward(&m, &backward_p0_family(&m, &grid)).unwrap();
        assert!(f1.is_identically_zero());
        let f1f = pn_forward(&m, &forward_p0_family(&m, &grid)).unwrap();
        assert!(f1f.is_identically_zero());
    }

    #[test]
    fn forward_and_backward_first_terms_agree() {
        let m = two_state_symmetric();
        let (u, t) = (0.3, 0.3 + 2f64.ln());
        let tau = t - u;
        let grid = QuadratureGrid::build(&m, u, t, &QuadOptions::default()).unwrap();
        let b1 = pn_backward(&m, &backward_p0_family(&m, &grid)).unwrap();
        let f1 = pn_forward(&m, &forward_p0_family(&m, &grid)).unwrap();
        assert_abs_diff_eq!(
            f1.at_window().matrix[(0, 1)],
            tau * (-tau).exp(),
            epsilon = 1e-10
        );
        let diff = b1.at_window().max_abs_diff(&f1.at_window()).unwrap();
        assert!(diff < 1e-10, "route difference {diff}");
    }

    #[test]
    fn second_term_cross_route_three_chain() {
        let m = QModel::new(
            StateSpace::new(3).unwrap(),
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    profile: TimeProfile::constant(1.3).unwrap(),
                },
                Transition {
                    from: 1,
                    to: 2,
                    profile: TimeProfile::constant(0.7).unwrap(),
                },
            ],
            Vec::new(),
        )
        .unwrap();
        let (u, t) = (0.25, 1.5);
        let grid = QuadratureGrid::build(&m, u, t, &QuadOptions::default()).unwrap();
        let b2 = pn_backward(&m, &pn_backward(&m, &backward_p0_family(&m, &grid)).unwrap()).unwrap();
        let f2 = pn_forward(&m, &pn_forward(&m, &forward_p0_family(&m, &grid)).unwrap()).unwrap();
        let diff = b2.at_window().max_abs_diff(&f2.at_window()).unwrap();
        assert!(diff < 1e-9, "route difference {diff}");
        assert!(b2.at_window().matrix[(0, 2)] > 0.0);
    }

    #[test]
    fn series_sums_to_two_state_closed_form() {
        let m = two_state_symmetric();
        let (u, t) = (0.5, 0.5 + 2f64.ln());
        let (kernel, stack) = feller_sum(&m, u, t, 1e-10, &FellerOptions::default()).unwrap();
        assert_abs_diff_eq!(kernel.matrix[(0, 0)], 0.625, epsilon = 1e-8);
        assert_abs_diff_eq!(kernel.matrix[(0, 1)], 0.375, epsilon = 1e-8);
        assert!(stack.n_terms() > 3);
        // monotone, substochastic partial sums
        for i in 1..stack.n_terms() {
            let prev = stack.partial_sum(i - 1);
            let cur = stack.partial_sum(i);
            for (a, b) in prev.matrix.iter().zip(cur.matrix.iter()) {
                assert!(b >= a);
            }
            cur.validate(1e-10).unwrap();
        }
        assert!(stack.tail_bounds().iter().all(|&b| b <= 1e-10));
    }

    #[test]
    fn series_matches_counting_distribution() {
        // all states share rate 1: jump count over Δ=1 is Poisson(1)
        let n = 12;
        let transitions = (0..n - 1)
            .map(|i| Transition {
                from: i,
                to: i + 1,
                profile: TimeProfile::constant(1.0).unwrap(),
            })
            .collect();
        let m = QModel::new(StateSpace::new(n).unwrap(), transitions, Vec::new()).unwrap();
        let (kernel, _) = feller_sum(&m, 0.5, 1.5, 1e-10, &FellerOptions::default()).unwrap();
        let e1 = (-1.0f64).exp();
        assert_abs_diff_eq!(kernel.matrix[(0, 0)], e1, epsilon = 1e-9);
        assert_abs_diff_eq!(kernel.matrix[(0, 1)], e1, epsilon = 1e-9);
        assert_abs_diff_eq!(kernel.matrix[(0, 3)], e1 / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_rate_series_is_identity_immediately() {
        let m = zero_rate(2);
        let (kernel, stack) = feller_sum(&m, 0.2, 0.9, 1e-12, &FellerOptions::default()).unwrap();
        assert_eq!(stack.n_terms(), 1);
        assert_eq!(kernel.matrix, Array2::<f64>::eye(2));
        assert_eq!(stack.tail_bounds(), &[0.0, 0.0]);
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        let smooth = two_state_symmetric();
        let grid = QuadratureGrid::build(&smooth, 0.5, 1.5, &QuadOptions::default()).unwrap();
        let pw = QModel::new(
            StateSpace::new(2).unwrap(),
            vec![Transition {
                from: 0,
                to: 1,
                profile: TimeProfile::piecewise_constant(vec![1.1], vec![1.0, 2.0]).unwrap(),
            }],
            Vec::new(),
        )
        .unwrap();
        let fam = backward_p0_family(&pw, &grid);
        assert!(matches!(
            pn_backward(&pw, &fam),
            Err(FellerError::GridMisaligned { .. })
        ));
    }

    #[test]
    fn slow_convergence_is_reported() {
        let m = two_state_symmetric();
        let opts = FellerOptions {
            max_terms: 2,
            ..Default::default()
        };
        let err = feller_sum(&m, 0.1, 10.0, 1e-14, &opts).unwrap_err();
        assert!(matches!(err, FellerError::SlowConvergence { .. }));
    }

    #[test]
    fn poisson_tail_sanity() {
        assert_eq!(poisson_tail(5, 0.0), 0.0);
        // P(Pois(1) > 0) = 1 − e^{−1}
        assert_abs_diff_eq!(poisson_tail(0, 1.0), 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert!(poisson_tail(40, 1.0) < 1e-12);
    }
}
