//! Bundled reference scenarios and the per-scenario check battery.
//!
//! Each scenario fixes a model, a principal window `(u, t)`, simulation
//! parameters, per-scenario tolerances, and regression-pinned expected
//! values with their provenance.  [`run_scenario`] executes the full
//! battery — route agreement, Chapman-Kolmogorov, boundary behaviour,
//! minimality, uniqueness or its non-uniqueness witness, truncation
//! refinement, Monte Carlo consistency, compensator centering, and the
//! Markov history check — and returns a [`Report`].
//!
//! Pinned values were computed before the solvers were trusted, either
//! from closed forms or from an independent uniformization oracle
//! (product of per-segment matrix exponentials with scaling-and-squaring).

use crate::feller::{FellerOptions, QuadOptions};
use crate::kolmogorov::{self, OdeOptions};
use crate::profile::TimeProfile;
use crate::qmodel::{QModel, StateSpace, Transition};
use crate::simulator::{self, PathSample, SimulationConfig, Termination};
use crate::stats;
use crate::verify::{
    self, CheckEntry, MinimalityParams, Report, UniquenessParams, VerifyError,
};

/// Where a pinned value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Immediate from definitions (identity kernels, zero rates).
    Definition,
    /// Closed-form calculation (exponentials, counting distributions).
    ClosedForm,
    /// Independent uniformization oracle.
    Oracle,
    /// Statistical estimate with an explicit band.
    Statistical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectedQuantity {
    KernelEntry { from: usize, to: usize },
    /// `1 − Σ_{y ordinary} P[from][y]`: mass off the ordinary states.
    OrdinaryRowDefect { from: usize },
}

#[derive(Debug, Clone)]
pub struct Expected {
    pub name: &'static str,
    pub quantity: ExpectedQuantity,
    pub value: f64,
    pub tolerance: f64,
    pub provenance: Provenance,
    pub oracle: &'static str,
}

/// Nested truncations of a countable model.
pub struct TruncationFamily {
    pub levels: Vec<usize>,
    pub build: fn(usize) -> QModel,
    pub monotone_tol: f64,
    pub cauchy_tol: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ScenarioTolerances {
    pub route_agreement: f64,
    pub ck_residual: f64,
    pub minimality: f64,
    pub tail_tol: f64,
    pub boundary_slack: f64,
    /// `Some(bound)` runs the regular-case uniqueness checks.
    pub regular_defect: Option<f64>,
}

impl Default for ScenarioTolerances {
    fn default() -> Self {
        Self {
            route_agreement: 1e-6,
            ck_residual: 1e-8,
            minimality: 1e-6,
            tail_tol: 1e-10,
            boundary_slack: 1e-10,
            regular_defect: Some(1e-8),
        }
    }
}

pub struct Scenario {
    pub id: &'static str,
    pub description: &'static str,
    pub model: QModel,
    /// Principal window `(u, t)` for kernel checks.
    pub window: (f64, f64),
    /// Interior time for the Chapman-Kolmogorov composition.
    pub mid: f64,
    pub sim: SimulationConfig,
    /// Simulation model when it differs from the solver model
    /// (the explosive scenario samples a much deeper chain).
    pub sim_model: Option<QModel>,
    /// Reduced model/window for series-route checks when the principal
    /// model is too stiff for breakpoint-panel quadrature.
    pub series_model: Option<QModel>,
    pub series_window: Option<(f64, f64)>,
    pub series_quad: Option<QuadOptions>,
    pub series_terms: usize,
    /// Run the non-uniqueness witness, returning lost mass to this state.
    pub witness_return_state: Option<usize>,
    pub witness_min_defect: f64,
    /// Witness model: must genuinely lose mass, so the kill-truncated
    /// variant rather than its conservative completion.
    pub witness_model: Option<QModel>,
    pub truncation: Option<TruncationFamily>,
    pub markov_check: bool,
    pub tol: ScenarioTolerances,
    pub expected: Vec<Expected>,
}

impl Scenario {
    /// Model all solver checks run on (kill mass routed to the cemetery).
    pub fn checks_model(&self) -> QModel {
        if self.model.is_conservative() {
            self.model.clone()
        } else {
            self.model.make_conservative()
        }
    }

    fn series_setup(&self) -> (QModel, (f64, f64), FellerOptions) {
        let model = self.series_model.clone().unwrap_or_else(|| self.checks_model());
        let window = self.series_window.unwrap_or(self.window);
        let feller = FellerOptions {
            quad: self.series_quad.unwrap_or_default(),
            ..Default::default()
        };
        (model, window, feller)
    }
}

fn constant(v: f64) -> TimeProfile {
    TimeProfile::constant(v).expect("valid rate")
}

fn pc(breaks: Vec<f64>, values: Vec<f64>) -> TimeProfile {
    TimeProfile::piecewise_constant(breaks, values).expect("valid profile")
}

fn chain(transitions: Vec<Transition>, n: usize) -> QModel {
    QModel::new(StateSpace::new(n).expect("nonempty"), transitions, Vec::new()).expect("valid model")
}

pub fn zero_rate() -> Scenario {
    let model = chain(Vec::new(), 2);
    Scenario {
        id: "zero-rate",
        description: "no transitions at all: the kernel is the identity",
        window: (0.2, 0.9),
        mid: 0.5,
        sim: SimulationConfig {
            n_paths: 2_000,
            seed: 101,
            ..SimulationConfig::point_mass(0, 2, 0.2, 0.9)
        },
        sim_model: None,
        series_model: None,
        series_window: None,
        series_quad: None,
        series_terms: 3,
        witness_return_state: None,
        witness_min_defect: 0.0,
        witness_model: None,
        truncation: None,
        markov_check: false,
        tol: ScenarioTolerances {
            regular_defect: Some(1e-12),
            ..Default::default()
        },
        expected: vec![Expected {
            name: "identity is preserved",
            quantity: ExpectedQuantity::KernelEntry { from: 0, to: 0 },
            value: 1.0,
            tolerance: 1e-12,
            provenance: Provenance::Definition,
            oracle: "zero generator leaves the identity fixed",
        }],
        model,
    }
}

pub fn two_state_symmetric() -> Scenario {
    let model = chain(
        vec![
            Transition { from: 0, to: 1, profile: constant(1.0) },
            Transition { from: 1, to: 0, profile: constant(1.0) },
        ],
        2,
    );
    let u = 0.5;
    let t = u + std::f64::consts::LN_2;
    Scenario {
        id: "two-state-symmetric",
        description: "unit-rate flip-flop; eigenvalues 0 and -2 give closed forms",
        window: (u, t),
        mid: 0.85,
        sim: SimulationConfig {
            n_paths: 100_000,
            seed: 202,
            ..SimulationConfig::point_mass(0, 2, u, t)
        },
        sim_model: None,
        series_model: None,
        series_window: None,
        series_quad: None,
        series_terms: 12,
        witness_return_state: None,
        witness_min_defect: 0.0,
        witness_model: None,
        truncation: None,
        markov_check: true,
        tol: ScenarioTolerances::default(),
        expected: vec![
            Expected {
                name: "stay probability at ln 2",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 0 },
                value: 0.625,
                tolerance: 1e-6,
                provenance: Provenance::ClosedForm,
                oracle: "(1 + e^(-2 ln 2))/2",
            },
            Expected {
                name: "flip probability at ln 2",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 1 },
                value: 0.375,
                tolerance: 1e-6,
                provenance: Provenance::ClosedForm,
                oracle: "(1 - e^(-2 ln 2))/2",
            },
        ],
        model,
    }
}

pub fn two_state_asymmetric_piecewise() -> Scenario {
    let model = chain(
        vec![
            Transition { from: 0, to: 1, profile: pc(vec![1.0], vec![1.0, 3.0]) },
            Transition { from: 1, to: 0, profile: pc(vec![0.75], vec![2.0, 0.5]) },
        ],
        2,
    );
    Scenario {
        id: "two-state-asymmetric-piecewise",
        description: "rates jump at 0.75 and 1.0: measurable-not-continuous intensities",
        window: (0.5, 1.5),
        mid: 1.0,
        sim: SimulationConfig {
            n_paths: 100_000,
            seed: 303,
            ..SimulationConfig::point_mass(0, 2, 0.5, 1.5)
        },
        sim_model: None,
        series_model: None,
        series_window: None,
        series_quad: None,
        series_terms: 14,
        witness_return_state: None,
        witness_min_defect: 0.0,
        witness_model: None,
        truncation: None,
        markov_check: false,
        tol: ScenarioTolerances::default(),
        expected: vec![
            Expected {
                name: "stay probability across both breakpoints",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 0 },
                value: 0.234_573_310_866_440_9,
                tolerance: 1e-6,
                provenance: Provenance::Oracle,
                oracle: "product of segment matrix exponentials (uniformization)",
            },
            Expected {
                name: "cross probability from the second state",
                quantity: ExpectedQuantity::KernelEntry { from: 1, to: 0 },
                value: 0.178_157_171_362_663_5,
                tolerance: 1e-6,
                provenance: Provenance::Oracle,
                oracle: "product of segment matrix exponentials (uniformization)",
            },
        ],
        model,
    }
}

pub fn poisson_nonhomogeneous() -> Scenario {
    let n = 31;
    let profile = pc(vec![1.0], vec![1.0, 3.0]);
    let transitions = (0..n - 1)
        .map(|i| Transition { from: i, to: i + 1, profile: profile.clone() })
        .collect();
    let model = chain(transitions, n);
    Scenario {
        id: "poisson-nonhomogeneous",
        description: "counting process with rate 1 then 3; counts are Poisson(lambda)",
        window: (0.5, 1.5),
        mid: 1.1,
        sim: SimulationConfig {
            n_paths: 100_000,
            seed: 404,
            jump_cap: n - 1,
            ..SimulationConfig::point_mass(0, n, 0.5, 1.5)
        },
        sim_model: None,
        series_model: None,
        series_window: None,
        series_quad: None,
        series_terms: 16,
        witness_return_state: None,
        witness_min_defect: 0.0,
        witness_model: None,
        truncation: None,
        markov_check: false,
        tol: ScenarioTolerances::default(),
        expected: vec![
            Expected {
                name: "no events over mass 2",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 0 },
                value: 0.135_335_283_236_612_7,
                tolerance: 1e-6,
                provenance: Provenance::ClosedForm,
                oracle: "e^(-2)",
            },
            Expected {
                name: "one event over mass 2",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 1 },
                value: 0.270_670_566_473_225_4,
                tolerance: 1e-6,
                provenance: Provenance::ClosedForm,
                oracle: "2 e^(-2)",
            },
            Expected {
                name: "three events over mass 2",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 3 },
                value: 0.180_447_044_315_483_6,
                tolerance: 1e-6,
                provenance: Provenance::ClosedForm,
                oracle: "e^(-2) 2^3/3!",
            },
        ],
        model,
    }
}

fn birth_death_killed(n: usize) -> QModel {
    let mut transitions = Vec::new();
    for i in 0..n {
        if i + 1 < n {
            transitions.push(Transition { from: i, to: i + 1, profile: constant(1.5) });
        }
        if i > 0 {
            transitions.push(Transition { from: i, to: i - 1, profile: constant(1.0) });
        }
    }
    let kill = vec![(n - 1, constant(1.5))];
    QModel::new(StateSpace::new(n).expect("nonempty"), transitions, kill).expect("valid model")
}

pub fn birth_death_bounded() -> Scenario {
    let n = 16;
    let mut transitions = Vec::new();
    for i in 0..n {
        if i + 1 < n {
            transitions.push(Transition { from: i, to: i + 1, profile: constant(1.5) });
        }
        if i > 0 {
            transitions.push(Transition { from: i, to: i - 1, profile: constant(1.0) });
        }
    }
    let model = chain(transitions, n);
    Scenario {
        id: "birth-death-bounded",
        description: "reflecting birth-death chain: bounded rates, exactly regular",
        window: (0.3, 1.1),
        mid: 0.7,
        sim: SimulationConfig {
            n_paths: 100_000,
            seed: 3,
            ..SimulationConfig::point_mass(0, n, 0.3, 1.1)
        },
        sim_model: None,
        series_model: None,
        series_window: None,
        series_quad: None,
        series_terms: 14,
        witness_return_state: None,
        witness_min_defect: 0.0,
        witness_model: None,
        truncation: Some(TruncationFamily {
            levels: vec![6, 10, 14],
            build: birth_death_killed,
            monotone_tol: 1e-9,
            cauchy_tol: 1e-4,
        }),
        markov_check: false,
        tol: ScenarioTolerances::default(),
        expected: vec![
            Expected {
                name: "stay probability",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 0 },
                value: 0.430_808_383_971_686_7,
                tolerance: 1e-6,
                provenance: Provenance::Oracle,
                oracle: "uniformization matrix exponential",
            },
            Expected {
                name: "one-up probability",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 1 },
                value: 0.328_868_544_248_601_2,
                tolerance: 1e-6,
                provenance: Provenance::Oracle,
                oracle: "uniformization matrix exponential",
            },
        ],
        model,
    }
}

/// Pure-birth rates `q_n = (n+1)^2` truncated at `n` states, overflow killed.
pub fn explosive_truncation(n: usize) -> QModel {
    let transitions = (0..n - 1)
        .map(|i| Transition {
            from: i,
            to: i + 1,
            profile: constant(((i + 1) * (i + 1)) as f64),
        })
        .collect();
    let kill = vec![(n - 1, constant((n * n) as f64))];
    QModel::new(StateSpace::new(n).expect("nonempty"), transitions, kill).expect("valid model")
}

/// Deep conservative pure-birth chain for path sampling: the top state is
/// reached exactly at the jump cap.
pub fn explosive_sim_chain(cap: usize) -> QModel {
    let n = cap + 1;
    let transitions = (0..cap)
        .map(|i| Transition {
            from: i,
            to: i + 1,
            profile: constant(((i + 1) * (i + 1)) as f64),
        })
        .collect();
    chain(transitions, n)
}

pub fn pure_birth_explosive() -> Scenario {
    let cap = 10_000;
    let model = explosive_truncation(50).make_conservative();
    let series_model = explosive_truncation(25).make_conservative();
    Scenario {
        id: "pure-birth-explosive",
        description: "rates (n+1)^2: jumps accumulate, mass escapes in finite time",
        window: (0.1, 2.0),
        mid: 1.0,
        sim: SimulationConfig {
            initial: {
                let mut v = vec![0.0; cap + 1];
                v[0] = 1.0;
                v
            },
            start_time: 0.1,
            horizon: 2.0,
            n_paths: 10_000,
            seed: 606,
            jump_cap: cap,
        },
        sim_model: Some(explosive_sim_chain(cap)),
        series_window: Some((0.1, 0.6)),
        series_quad: Some(QuadOptions {
            target_panels: 1400,
            ..Default::default()
        }),
        series_terms: 30,
        witness_return_state: Some(0),
        witness_min_defect: 0.04,
        witness_model: Some(explosive_truncation(25)),
        truncation: Some(TruncationFamily {
            levels: vec![50, 100, 200],
            build: explosive_truncation,
            monotone_tol: 1e-9,
            // tail mass above level N scales like 1/N; see the sweep report
            cauchy_tol: 5e-3,
        }),
        markov_check: false,
        tol: ScenarioTolerances {
            ck_residual: 1e-6,
            minimality: 1e-4,
            route_agreement: 1e-4,
            regular_defect: None,
            ..Default::default()
        },
        expected: vec![Expected {
            name: "escape mass of the 50-state truncation",
            quantity: ExpectedQuantity::OrdinaryRowDefect { from: 0 },
            value: 0.707_652_800_087,
            tolerance: 1e-6,
            provenance: Provenance::Oracle,
            oracle: "uniformization matrix exponential, scaling-and-squaring",
        }],
        model,
        series_model: Some(series_model),
    }
}

pub fn single_state_kill() -> Scenario {
    let model = QModel::new(
        StateSpace::new(1).expect("nonempty"),
        Vec::new(),
        vec![(0, pc(vec![1.0], vec![1.0, 3.0]))],
    )
    .expect("valid model");
    Scenario {
        id: "single-state-kill",
        description: "pure kill with a rate jump: completion routes mass to the cemetery",
        window: (0.25, 1.5),
        mid: 1.0,
        sim: SimulationConfig {
            n_paths: 100_000,
            seed: 707,
            ..SimulationConfig::point_mass(0, 2, 0.25, 1.5)
        },
        sim_model: None,
        series_model: None,
        series_window: None,
        series_quad: None,
        series_terms: 4,
        witness_return_state: None,
        witness_min_defect: 0.0,
        witness_model: None,
        truncation: None,
        markov_check: false,
        tol: ScenarioTolerances::default(),
        expected: vec![
            Expected {
                name: "survival over mass 2.25",
                quantity: ExpectedQuantity::KernelEntry { from: 0, to: 0 },
                value: 0.105_399_224_561_864_3,
                tolerance: 1e-8,
                provenance: Provenance::ClosedForm,
                oracle: "e^(-(0.75 + 3*0.5))",
            },
            Expected {
                name: "killed mass equals the cemetery inflow",
                quantity: ExpectedQuantity::OrdinaryRowDefect { from: 0 },
                value: 0.894_600_775_438_135_7,
                tolerance: 1e-8,
                provenance: Provenance::ClosedForm,
                oracle: "1 - e^(-2.25)",
            },
        ],
        model,
    }
}

/// The whole library, in a stable order.
pub fn all() -> Vec<Scenario> {
    vec![
        zero_rate(),
        two_state_symmetric(),
        two_state_asymmetric_piecewise(),
        poisson_nonhomogeneous(),
        birth_death_bounded(),
        pure_birth_explosive(),
        single_state_kill(),
    ]
}

pub fn ids() -> Vec<&'static str> {
    all().into_iter().map(|s| s.id).collect()
}

pub fn by_id(id: &str) -> Option<Scenario> {
    all().into_iter().find(|s| s.id == id)
}

/// Run the full check battery for one scenario.
pub fn run_scenario(sc: &Scenario) -> Result<Report, VerifyError> {
    let mut report = Report::new(sc.id);
    let checks_model = sc.checks_model();
    let (u, t) = sc.window;
    let ode = OdeOptions::default();

    report.push(verify::survival_term_check(&checks_model, u, t, 1e-12)?);

    // routes agree on the series-feasible model
    let (series_model, (su, st), feller_opts) = sc.series_setup();
    let (route_checks, _) = verify::route_agreement(
        &series_model,
        su,
        st,
        sc.tol.tail_tol,
        sc.tol.route_agreement,
        &feller_opts,
        &ode,
    )?;
    report.extend(route_checks);

    // Chapman-Kolmogorov composition on the principal model
    let anchored_t = kolmogorov::solve_backward(&checks_model, t, u, &ode, &[sc.mid])?;
    let k_ut = anchored_t.kernel_at(u).expect("recorded").clone();
    let k_st = anchored_t.kernel_at(sc.mid).expect("recorded").clone();
    let k_us = kolmogorov::solve_backward(&checks_model, sc.mid, u, &ode, &[])?
        .final_kernel()
        .clone();
    let ck = verify::chapman_kolmogorov_residual(&k_us, &k_st, &k_ut)?;
    report.push(CheckEntry::at_most(
        "Chapman-Kolmogorov composition residual",
        ck,
        sc.tol.ck_residual,
        "kernel composes across an interior time",
    ));

    report.extend(verify::boundary_checks(
        &checks_model,
        t,
        &[1e-2, 1e-3, 1e-4],
        &ode,
        sc.tol.boundary_slack,
    )?);

    // minimality battery on the series-feasible model
    let minimality = MinimalityParams {
        n_terms: sc.series_terms,
        n_trials: 20,
        seed: 7,
        tol: sc.tol.minimality,
        feller: feller_opts,
        ode,
    };
    report.extend(verify::check_minimality(&series_model, su, st, &minimality)?);

    if let Some(defect_tol) = sc.tol.regular_defect {
        let params = UniquenessParams {
            defect_tol,
            ..Default::default()
        };
        report.extend(verify::check_uniqueness_regular(&checks_model, u, t, &params)?);
    }

    if let Some(return_state) = sc.witness_return_state {
        let witness_model = sc.witness_model.as_ref().unwrap_or(&series_model);
        report.extend(verify::non_uniqueness_witness(
            witness_model,
            su,
            st,
            return_state,
            sc.witness_min_defect,
            sc.tol.minimality,
            &feller_opts.quad,
            &ode,
        )?);
    }

    let mut sweep_outcome = None;
    if let Some(tf) = &sc.truncation {
        let family: Vec<QModel> = tf.levels.iter().map(|&n| (tf.build)(n)).collect();
        let (outcome, checks) = verify::truncation_sweep(
            &family,
            &tf.levels,
            u,
            t,
            0,
            &ode,
            tf.monotone_tol,
            tf.cauchy_tol,
        )?;
        report.extend(checks);
        sweep_outcome = Some(outcome);
    }

    // pinned regression values, measured on the backward route
    for e in &sc.expected {
        let measured = match e.quantity {
            ExpectedQuantity::KernelEntry { from, to } => k_ut.matrix[(from, to)],
            ExpectedQuantity::OrdinaryRowDefect { from } => {
                let ordinary = sc.model.space().n_states();
                1.0 - k_ut
                    .matrix
                    .row(from)
                    .iter()
                    .take(ordinary)
                    .sum::<f64>()
            }
        };
        report.push(CheckEntry::at_most(
            format!("pinned: {}", e.name),
            (measured - e.value).abs(),
            e.tolerance,
            e.oracle,
        ));
    }

    // path-level statistics
    match &sc.sim_model {
        None => {
            let sim_model = checks_model.clone();
            let paths = simulator::simulate_paths(&sim_model, &sc.sim)?;
            let solver = kolmogorov::solve_backward(
                &sim_model,
                sc.sim.horizon,
                sc.sim.start_time,
                &ode,
                &[],
            )?
            .final_kernel()
            .clone();
            let empirical = simulator::empirical_kernel(
                &paths,
                sc.sim.start_time,
                sc.sim.horizon,
                sim_model.n_total(),
            )?;
            report.push(verify::mc_consistency_check(
                &solver,
                &empirical,
                "paths reproduce the kernel within 3 sigma",
            ));
            report.extend(martingale_battery(&sim_model, &paths, sc.sim.start_time, sc.sim.horizon));
            if sc.markov_check {
                let mid = 0.5 * (sc.sim.start_time + sc.sim.horizon);
                report.push(verify::markov_history_check(
                    &paths,
                    mid,
                    sc.sim.horizon,
                    sim_model.n_total(),
                    1e-3,
                ));
            }
        }
        Some(sim_model) => {
            report.extend(explosive_path_checks(sc, sim_model, sweep_outcome.as_ref())?);
        }
    }

    Ok(report)
}

fn martingale_battery(model: &QModel, paths: &[PathSample], start: f64, horizon: f64) -> Vec<CheckEntry> {
    let n = model.n_total();
    let span = horizon - start;
    let times = [start + 0.25 * span, start + 0.6 * span, start + 0.95 * span];
    let sets: Vec<(String, Vec<bool>)> = vec![
        ("{first}".into(), (0..n).map(|y| y == 0).collect()),
        ("{last}".into(), (0..n).map(|y| y + 1 == n).collect()),
        ("{all}".into(), vec![true; n]),
    ];
    let mut checks = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let (label, member) = &sets[i % sets.len()];
        checks.push(verify::martingale_check(
            model,
            paths,
            t,
            member,
            &format!("compensated count centered at t = {t:.3}, B = {label}"),
        ));
    }
    checks
}

/// Path statistics for the explosive scenario, computed per path without
/// retaining the (very long) event lists: explosion frequency against the
/// extrapolated truncation defect, and compensator centering through the
/// cap via optional stopping.
fn explosive_path_checks(
    sc: &Scenario,
    sim_model: &QModel,
    sweep: Option<&verify::SweepOutcome>,
) -> Result<Vec<CheckEntry>, VerifyError> {
    let n = sim_model.n_total();
    let horizon = sc.sim.horizon;
    let sets: Vec<Vec<bool>> = vec![
        (0..n).map(|y| y == 1).collect(),
        (0..n).map(|y| y == 5).collect(),
        (0..n).map(|y| y <= 20).collect(),
    ];
    let span = horizon - sc.sim.start_time;
    let times = [
        sc.sim.start_time + 0.25 * span,
        sc.sim.start_time + 0.6 * span,
        sc.sim.start_time + 0.95 * span,
    ];

    struct Summary {
        exploded: bool,
        diffs: [f64; 3],
    }
    let summaries = simulator::simulate_map(sim_model, &sc.sim, |p| {
        let mut diffs = [0.0; 3];
        for (i, member) in sets.iter().enumerate() {
            let counted = p.jumps_into(member, times[i]) as f64;
            let nu = simulator::compensator_along_path(sim_model, &p, times[i], member);
            diffs[i] = counted - nu;
        }
        Summary {
            exploded: p.termination == Termination::ExplosionCapHit,
            diffs,
        }
    })?;

    let mut checks = Vec::new();
    let n_paths = summaries.len();
    let freq = summaries.iter().filter(|s| s.exploded).count() as f64 / n_paths as f64;
    if let Some(outcome) = sweep {
        // Richardson in 1/N: defect_N = defect_inf + c/N + O(1/N^2)
        let last = outcome.defects[outcome.defects.len() - 1];
        let prev = outcome.defects[outcome.defects.len() - 2];
        let extrapolated = 2.0 * last - prev;
        let slack = outcome.cauchy_gaps.last().copied().unwrap_or(0.0);
        let band = stats::binomial_half_width(extrapolated.clamp(0.0, 1.0), n_paths, 3.0) + slack;
        checks.push(CheckEntry::at_most(
            format!("explosion frequency {freq:.4} matches extrapolated defect {extrapolated:.4}"),
            (freq - extrapolated).abs(),
            band,
            "paths past the cap carry the defect mass",
        ));
    }
    for (i, &t) in times.iter().enumerate() {
        let diffs: Vec<f64> = summaries.iter().map(|s| s.diffs[i]).collect();
        let (mean, se) = stats::mean_and_se(&diffs);
        checks.push(CheckEntry::at_most(
            format!("compensated count centered at t = {t:.3} (set {i})"),
            mean.abs(),
            3.0 * se + 1e-12,
            "compensated jump counts are centered up to the cap",
        ));
    }
    Ok(checks)
}
