//! Monte Carlo path sampling from the exact conditional laws.
//!
//! Given the state `x` at time `u`, the next jump time has survival function
//! `e^{−∫_u^t q(x,s) ds}`, sampled by drawing a standard exponential and
//! inverting the cumulative hazard in closed form; given the jump time, the
//! destination follows the normalized jump intensities at that instant.  A
//! thinning sampler against the per-state rate bound is kept as an
//! independent cross-check of the holding-time law.
//!
//! Paths are reproducible and order-independent: path `i` runs on its own
//! RNG stream derived from `(seed, i)`, so any degree of parallelism yields
//! bit-identical results.

use crate::kernel::Kernel;
use crate::qmodel::{QModel, QModelError};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema tag written into path dump headers.
pub const PATH_SCHEMA_VERSION: &str = "jumpq.paths.v1";

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("model is not conservative: route kill mass through make_conservative first")]
    NonConservative,
    #[error("simulation config invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] QModelError),
}

/// Why a sampled path stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The next jump would land past the horizon (or never happens).
    HorizonReached,
    /// The path entered the cemetery state.
    Absorbed,
    /// The jump budget ran out before the horizon: explosion proxy.
    ExplosionCapHit,
}

/// State of a path at a query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathState {
    Ordinary(usize),
    /// Past the explosion cap: the frozen isolated point.
    Exploded,
}

/// One sampled realization `(x0, (t_1, x_1), (t_2, x_2), …)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x0: usize,
    pub start_time: f64,
    /// Strictly increasing jump times with the state entered at each.
    pub events: Vec<(f64, usize)>,
    pub termination: Termination,
}

impl PathSample {
    pub fn n_jumps(&self) -> usize {
        self.events.len()
    }

    /// Time of the last jump, or the start time for jump-free paths.
    pub fn last_event_time(&self) -> f64 {
        self.events.last().map_or(self.start_time, |&(t, _)| t)
    }

    /// State at time `t ≥ start_time`, honouring the explosion convention:
    /// from the capping jump onwards the path counts as exploded.
    pub fn state_at(&self, t: f64) -> PathState {
        debug_assert!(t >= self.start_time);
        if self.termination == Termination::ExplosionCapHit && t >= self.last_event_time() {
            return PathState::Exploded;
        }
        let idx = self.events.partition_point(|&(tn, _)| tn <= t);
        if idx == 0 {
            PathState::Ordinary(self.x0)
        } else {
            PathState::Ordinary(self.events[idx - 1].1)
        }
    }

    /// Number of jumps into the masked set up to and including `t`.
    pub fn jumps_into(&self, member: &[bool], t: f64) -> usize {
        self.events
            .iter()
            .take_while(|&&(tn, _)| tn <= t)
            .filter(|&&(_, xn)| member[xn])
            .count()
    }
}

/// Line-oriented dump record for one path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    pub path: usize,
    pub x0: usize,
    pub termination: Termination,
    pub events: Vec<(f64, usize)>,
}

impl PathRecord {
    pub fn from_sample(path: usize, sample: &PathSample) -> Self {
        Self {
            path,
            x0: sample.x0,
            termination: sample.termination,
            events: sample.events.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Initial distribution over all model states (ordinary + cemetery).
    pub initial: Vec<f64>,
    pub start_time: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub jump_cap: usize,
}

impl SimulationConfig {
    pub fn point_mass(x0: usize, n_total: usize, start_time: f64, horizon: f64) -> Self {
        let mut initial = vec![0.0; n_total];
        initial[x0] = 1.0;
        Self {
            initial,
            start_time,
            horizon,
            n_paths: 10_000,
            seed: 0,
            jump_cap: 10_000,
        }
    }

    pub fn validate(&self, model: &QModel) -> Result<(), SimError> {
        if self.initial.len() != model.n_total() {
            return Err(SimError::BadConfig(format!(
                "initial distribution has {} entries for {} states",
                self.initial.len(),
                model.n_total()
            )));
        }
        if self.initial.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(SimError::BadConfig(
                "initial distribution entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = self.initial.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(SimError::BadConfig(format!(
                "initial distribution sums to {total}, expected 1"
            )));
        }
        if !(self.start_time >= 0.0 && self.horizon > self.start_time) {
            return Err(SimError::BadConfig(format!(
                "need 0 <= start_time < horizon, got [{}, {}]",
                self.start_time, self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(SimError::BadConfig("n_paths must be at least 1".into()));
        }
        if self.jump_cap == 0 {
            return Err(SimError::BadConfig("jump_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Independent RNG stream for path `index` under `seed`.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn standard_exponential<R: Rng>(rng: &mut R) -> f64 {
    // 1 − U ∈ (0, 1], so the log is finite
    -(1.0 - rng.random::<f64>()).ln()
}

/// Next jump time after `u` for a path sitting in `x`, by exact inversion of
/// the cumulative hazard; `+∞` when the remaining hazard is insufficient.
pub fn sample_holding_time<R: Rng>(model: &QModel, x: usize, u: f64, rng: &mut R) -> f64 {
    let target = standard_exponential(rng);
    model
        .total_rate_curve(x)
        .invert(u, target)
        .unwrap_or(f64::INFINITY)
}

/// Thinning sampler for the same law, using the per-state rate bound as the
/// dominating intensity.  Retained as a distribution-level cross-check of
/// the inversion sampler.
pub fn sample_holding_time_thinning<R: Rng>(model: &QModel, x: usize, u: f64, rng: &mut R) -> f64 {
    let bound = model.stable_bound(x).expect("valid state");
    if bound <= 0.0 {
        return f64::INFINITY;
    }
    let curve = model.total_rate_curve(x);
    let dead_from = curve.zero_tail_start();
    let mut s = u;
    loop {
        s += standard_exponential(rng) / bound;
        if let Some(d) = dead_from {
            if s >= d {
                return f64::INFINITY;
            }
        }
        if rng.random::<f64>() * bound < curve.value(s) {
            return s;
        }
    }
}

/// Destination of a jump out of `x` at time `t_jump`, by inverse CDF over
/// the sparse targets.
pub fn sample_jump<R: Rng>(
    model: &QModel,
    x: usize,
    t_jump: f64,
    rng: &mut R,
) -> Result<usize, SimError> {
    let law = model.jump_distribution(x, t_jump)?;
    if law.kill > 0.0 {
        return Err(SimError::NonConservative);
    }
    if law.targets.len() == 1 {
        return Ok(law.targets[0].0);
    }
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for &(y, p) in &law.targets {
        acc += p;
        if u < acc {
            return Ok(y);
        }
    }
    Ok(law.targets.last().expect("nonempty law").0)
}

fn draw_initial(initial: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in initial.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    initial.len() - 1
}

fn sample_one(model: &QModel, cfg: &SimulationConfig, index: usize) -> PathSample {
    let mut rng = path_rng(cfg.seed, index);
    let x0 = draw_initial(&cfg.initial, &mut rng);
    let mut events: Vec<(f64, usize)> = Vec::new();
    let mut x = x0;
    let mut t = cfg.start_time;
    let termination = loop {
        if model.space().is_cemetery(x) {
            break Termination::Absorbed;
        }
        if events.len() >= cfg.jump_cap {
            break Termination::ExplosionCapHit;
        }
        let t_next = sample_holding_time(model, x, t, &mut rng);
        if t_next > cfg.horizon {
            break Termination::HorizonReached;
        }
        let y = sample_jump(model, x, t_next, &mut rng).expect("active state in conservative model");
        events.push((t_next, y));
        x = y;
        t = t_next;
    };
    PathSample {
        x0,
        start_time: cfg.start_time,
        events,
        termination,
    }
}

/// Run all paths, mapping each through `f` as soon as it is complete.  The
/// output is indexed by path, so results do not depend on thread count or
/// scheduling.  Use this instead of [`simulate_paths`] when paths are long
/// and only summaries are needed.
pub fn simulate_map<T, F>(model: &QModel, cfg: &SimulationConfig, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(PathSample) -> T + Sync,
{
    if !model.is_conservative() {
        return Err(SimError::NonConservative);
    }
    cfg.validate(model)?;
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|i| f(sample_one(model, cfg, i)))
        .collect())
}

/// Sample and keep every path.
pub fn simulate_paths(model: &QModel, cfg: &SimulationConfig) -> Result<Vec<PathSample>, SimError> {
    simulate_map(model, cfg, |p| p)
}

/// Empirical transition frequencies between two observation times, with
/// per-entry confidence half-widths.
#[derive(Debug, Clone)]
pub struct EmpiricalKernel {
    pub kernel: Kernel,
    /// 3σ binomial half-width per entry, from the observed frequency.
    pub half_width: Array2<f64>,
    /// Paths observed per starting state; zero marks a no-data row.
    pub counts: Vec<usize>,
    /// Per-row fraction of paths exploded by `t` (counts toward the defect).
    pub exploded: Vec<f64>,
}

impl EmpiricalKernel {
    pub fn has_data(&self, x: usize) -> bool {
        self.counts[x] > 0
    }
}

/// Tabulate `P(X_t = y | X_u = x)` from sampled paths.  Paths already
/// exploded at `u` are not observable in any ordinary state and are skipped;
/// paths exploding between `u` and `t` count toward the row defect.
pub fn empirical_kernel(
    paths: &[PathSample],
    u: f64,
    t: f64,
    n_states: usize,
) -> Result<EmpiricalKernel, SimError> {
    if !(u < t) {
        return Err(SimError::BadConfig(format!(
            "need u < t, got u = {u}, t = {t}"
        )));
    }
    let mut counts = vec![0usize; n_states];
    let mut hits = Array2::<f64>::zeros((n_states, n_states));
    let mut exploded_hits = vec![0usize; n_states];
    for p in paths {
        let PathState::Ordinary(x) = p.state_at(u) else {
            continue;
        };
        counts[x] += 1;
        match p.state_at(t) {
            PathState::Ordinary(y) => hits[(x, y)] += 1.0,
            PathState::Exploded => exploded_hits[x] += 1,
        }
    }
    let mut kernel = Kernel::zeros(n_states, u, t);
    let mut half_width = Array2::<f64>::zeros((n_states, n_states));
    let mut exploded = vec![0.0; n_states];
    for x in 0..n_states {
        if counts[x] == 0 {
            continue;
        }
        let m = counts[x] as f64;
        for y in 0..n_states {
            let p_hat = hits[(x, y)] / m;
            kernel.matrix[(x, y)] = p_hat;
            half_width[(x, y)] = 3.0 * (p_hat * (1.0 - p_hat) / m).sqrt();
        }
        exploded[x] = exploded_hits[x] as f64 / m;
    }
    Ok(EmpiricalKernel {
        kernel,
        half_width,
        counts,
        exploded,
    })
}

/// Integrated jump intensity `ν(]start, t], B)` along one path: the exact
/// integral of `q(x_m, s, B ∖ {x_m})` over each sojourn interval.  For paths
/// stopped by the explosion cap the integral runs to the capping jump.
pub fn compensator_along_path(model: &QModel, path: &PathSample, t: f64, member: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut x = path.x0;
    let mut seg_start = path.start_time;
    for &(tn, xn) in &path.events {
        if tn >= t {
            total += model.jump_intensity_integral(x, member, seg_start, t);
            return total;
        }
        total += model.jump_intensity_integral(x, member, seg_start, tn);
        x = xn;
        seg_start = tn;
    }
    if path.termination != Termination::ExplosionCapHit && t > seg_start {
        total += model.jump_intensity_integral(x, member, seg_start, t);
    }
    total
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
    fn holding_time_absorbing_is_infinite() {
        let m = zero_rate(1);
        let mut rng = path_rng(7, 0);
        for _ in 0..16 {
            assert_eq!(sample_holding_time(&m, 0, 0.5, &mut rng), f64::INFINITY);
        }
    }

    #[test]
    fn holding_time_unit_rate_has_unit_mean() {
        let m = two_state_symmetric();
        let mut rng = path_rng(11, 3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_holding_time(&m, 0, 0.0, &mut rng))
            .sum::<f64>()
            / n as f64;
        // 3σ of the sample mean of Exp(1): 3/√n
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn holding_time_piecewise_inversion_value() {
        // force the exponential draw to E = 2: U = 1 − e^{−2}
        struct FixedU(u64);
        impl rand::RngCore for FixedU {
            fn next_u32(&mut self) -> u32 {
                self.next_u64() as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, dest: &mut [u8]) {
                dest.fill(0);
            }
        }
        let u_target = 1.0 - (-2.0f64).exp();
        let raw = ((u_target * (1u64 << 53) as f64) as u64) << 11;
        let mut rng = FixedU(raw);

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
        let t = sample_holding_time(&m, 0, 0.0, &mut rng);
        assert_abs_diff_eq!(t, 4.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn jump_frequencies_follow_rates() {
        let m = QModel::new(
            StateSpace::new(3).unwrap(),
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    profile: TimeProfile::constant(2.0).unwrap(),
                },
                Transition {
                    from: 0,
                    to: 2,
                    profile: TimeProfile::constant(3.0).unwrap(),
                },
            ],
            Vec::new(),
        )
        .unwrap();
        let mut rng = path_rng(5, 1);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_jump(&m, 0, 1.0, &mut rng).unwrap() == 1)
            .count() as f64
            / n as f64;
        let sigma = (0.4f64 * 0.6 / n as f64).sqrt();
        assert!((ones - 0.4).abs() < 3.0 * sigma, "freq {ones}");
    }

    #[test]
    fn jump_split_with_time_dependent_rate() {
        // q(0,t,{1}) = t (linear ramp), q(0,t,{2}) = 1: at t = 1 the split is 1:1
        let m = QModel::new(
            StateSpace::new(3).unwrap(),
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    profile: TimeProfile::piecewise_linear(vec![0.5, 2.0], vec![0.5, 2.0]).unwrap(),
                },
                Transition {
                    from: 0,
                    to: 2,
                    profile: TimeProfile::constant(1.0).unwrap(),
                },
            ],
            Vec::new(),
        )
        .unwrap();
        let mut rng = path_rng(19, 0);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_jump(&m, 0, 1.0, &mut rng).unwrap() == 1)
            .count() as f64
            / n as f64;
        let sigma = (0.25f64 / n as f64).sqrt();
        assert!((ones - 0.5).abs() < 3.0 * sigma, "freq {ones}");
    }

    #[test]
    fn single_target_is_deterministic() {
        let m = two_state_symmetric();
        let mut rng = path_rng(1, 1);
        for _ in 0..8 {
            assert_eq!(sample_jump(&m, 0, 0.7, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn zero_rate_paths_have_no_jumps() {
        let m = zero_rate(2);
        let cfg = SimulationConfig {
            n_paths: 50,
            ..SimulationConfig::point_mass(0, 2, 0.0, 1.0)
        };
        let paths = simulate_paths(&m, &cfg).unwrap();
        assert_eq!(paths.len(), 50);
        for p in &paths {
            assert_eq!(p.n_jumps(), 0);
            assert_eq!(p.termination, Termination::HorizonReached);
            assert_eq!(p.state_at(0.9), PathState::Ordinary(0));
        }
    }

    #[test]
    fn two_state_occupancy_matches_kernel() {
        let m = two_state_symmetric();
        let horizon = 2f64.ln();
        let cfg = SimulationConfig {
            n_paths: 100_000,
            seed: 42,
            ..SimulationConfig::point_mass(0, 2, 0.0, horizon)
        };
        let in_zero = simulate_map(&m, &cfg, |p| {
            matches!(p.state_at(horizon), PathState::Ordinary(0))
        })
        .unwrap()
        .iter()
        .filter(|&&b| b)
        .count() as f64
            / cfg.n_paths as f64;
        let sigma = (0.625f64 * 0.375 / cfg.n_paths as f64).sqrt();
        assert!((in_zero - 0.625).abs() < 3.0 * sigma, "freq {in_zero}");
    }

    #[test]
    fn fixed_seed_reproduces_paths_bitwise() {
        let m = two_state_symmetric();
        let cfg = SimulationConfig {
            n_paths: 200,
            seed: 9,
            ..SimulationConfig::point_mass(0, 2, 0.2, 3.0)
        };
        let a = simulate_paths(&m, &cfg).unwrap();
        let b = simulate_paths(&m, &cfg).unwrap();
        assert_eq!(a, b);
        // different seeds diverge
        let cfg2 = SimulationConfig { seed: 10, ..cfg };
        let c = simulate_paths(&m, &cfg2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn non_conservative_model_is_rejected() {
        let m = QModel::new(
            StateSpace::new(1).unwrap(),
            Vec::new(),
            vec![(0, TimeProfile::constant(1.0).unwrap())],
        )
        .unwrap();
        let cfg = SimulationConfig::point_mass(0, 1, 0.0, 1.0);
        assert_eq!(
            simulate_paths(&m, &cfg).unwrap_err(),
            SimError::NonConservative
        );
        // completion fixes it
        let c = m.make_conservative();
        let cfg = SimulationConfig::point_mass(0, 2, 0.0, 1.0);
        assert!(simulate_paths(&c, &cfg).is_ok());
    }

    #[test]
    fn kill_paths_absorb_in_cemetery() {
        let m = QModel::new(
            StateSpace::new(1).unwrap(),
            Vec::new(),
            vec![(0, TimeProfile::constant(50.0).unwrap())],
        )
        .unwrap()
        .make_conservative();
        let cfg = SimulationConfig {
            n_paths: 64,
            ..SimulationConfig::point_mass(0, 2, 0.0, 5.0)
        };
        let paths = simulate_paths(&m, &cfg).unwrap();
        assert!(paths
            .iter()
            .all(|p| p.termination == Termination::Absorbed && p.n_jumps() == 1));
    }

    #[test]
    fn explosion_cap_fires_on_fast_chain() {
        let n = 40;
        let transitions = (0..n - 1)
            .map(|i| Transition {
                from: i,
                to: i + 1,
                profile: TimeProfile::constant(((i + 1) * (i + 1)) as f64).unwrap(),
            })
            .collect();
        let m = QModel::new(StateSpace::new(n).unwrap(), transitions, Vec::new()).unwrap();
        let cfg = SimulationConfig {
            n_paths: 32,
            jump_cap: n - 1,
            ..SimulationConfig::point_mass(0, n, 0.0, 1000.0)
        };
        let paths = simulate_paths(&m, &cfg).unwrap();
        for p in &paths {
            assert_eq!(p.termination, Termination::ExplosionCapHit);
            assert_eq!(p.n_jumps(), cfg.jump_cap);
            assert_eq!(p.state_at(999.0), PathState::Exploded);
        }
    }

    #[test]
    fn empirical_kernel_zero_rate_is_exact_identity() {
        let m = zero_rate(2);
        let cfg = SimulationConfig {
            n_paths: 100,
            ..SimulationConfig::point_mass(0, 2, 0.0, 1.0)
        };
        let paths = simulate_paths(&m, &cfg).unwrap();
        let ek = empirical_kernel(&paths, 0.0, 0.9, 2).unwrap();
        assert_eq!(ek.kernel.matrix[(0, 0)], 1.0);
        assert_eq!(ek.half_width[(0, 0)], 0.0);
        assert!(ek.has_data(0));
        assert!(!ek.has_data(1)); // no path ever visits state 1
        assert_eq!(ek.counts[0], 100);
    }

    #[test]
    fn compensator_examples() {
        let zero = zero_rate(2);
        let p = PathSample {
            x0: 0,
            start_time: 0.0,
            events: vec![],
            termination: Termination::HorizonReached,
        };
        assert_eq!(compensator_along_path(&zero, &p, 0.8, &[true, true]), 0.0);

        // constant rate 1 into state 1, no jump before t: ν(]0,t],{1}) = t
        let m = QModel::new(
            StateSpace::new(2).unwrap(),
            vec![Transition {
                from: 0,
                to: 1,
                profile: TimeProfile::constant(1.0).unwrap(),
            }],
            Vec::new(),
        )
        .unwrap();
        let member = [false, true];
        assert_abs_diff_eq!(compensator_along_path(&m, &p, 0.7, &member), 0.7, epsilon = 1e-14);

        // with a jump at 0.4 the intensity stops accruing there
        let pj = PathSample {
            events: vec![(0.4, 1)],
            ..p
        };
        assert_abs_diff_eq!(compensator_along_path(&m, &pj, 0.7, &member), 0.4, epsilon = 1e-14);
        // monotone in t
        assert!(compensator_along_path(&m, &pj, 0.3, &member) <= compensator_along_path(&m, &pj, 0.7, &member));
    }

    #[test]
    fn thinning_and_inversion_agree_on_first_moments() {
        let m = QModel::new(
            StateSpace::new(2).unwrap(),
            vec![Transition {
                from: 0,
                to: 1,
                profile: TimeProfile::piecewise_constant(vec![0.8], vec![0.5, 2.0]).unwrap(),
            }],
            Vec::new(),
        )
        .unwrap();
        let n = 60_000;
        let mut r1 = path_rng(3, 0);
        let mut r2 = path_rng(3, 1);
        let mean_inv: f64 = (0..n)
            .map(|_| sample_holding_time(&m, 0, 0.0, &mut r1).min(50.0))
            .sum::<f64>()
            / n as f64;
        let mean_thin: f64 = (0..n)
            .map(|_| sample_holding_time_thinning(&m, 0, 0.0, &mut r2).min(50.0))
            .sum::<f64>()
            / n as f64;
        assert!((mean_inv - mean_thin).abs() < 0.02, "{mean_inv} vs {mean_thin}");
    }
}
