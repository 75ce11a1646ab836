//! Command implementations behind the `jumpq` binary: solve a kernel by a
//! chosen route, sample paths, or run the bundled verification battery.
//!
//! Exit-code contract (stable for CI pipelines):
//! `0` success, `1` verification check failed, `2` usage or configuration
//! error, `3` numerical failure.  Every emitted file carries the tool
//! version, the SHA-256 of the model configuration, and (for simulations)
//! the seed, so outputs are attributable and reproducible byte for byte.

use jumpq_core::config::{self, ModelConfig};
use jumpq_core::feller::{self, FellerOptions};
use jumpq_core::kernel::Kernel;
use jumpq_core::kolmogorov::{self, OdeOptions};
use jumpq_core::qmodel::QModel;
use jumpq_core::scenarios::{self, Scenario};
use jumpq_core::simulator::{self, PathRecord, SimulationConfig, PATH_SCHEMA_VERSION};
use jumpq_core::verify::Report;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable selecting the worker thread count.
pub const THREADS_ENV: &str = "JUMPQ_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Feller,
    Backward,
    Forward,
}

impl std::str::FromStr for Route {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feller" => Ok(Route::Feller),
            "backward" => Ok(Route::Backward),
            "forward" => Ok(Route::Forward),
            other => Err(format!(
                "unknown route {other:?}; expected feller, backward, or forward"
            )),
        }
    }
}

/// Model input: an explicit config file or a bundled scenario id.
#[derive(Debug, Clone)]
pub enum ModelSource {
    File(PathBuf),
    Scenario(String),
}

struct LoadedModel {
    model: QModel,
    config_hash: String,
    scenario: Option<Scenario>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("hex write");
    }
    out
}

fn load_model(source: &ModelSource) -> Result<LoadedModel, CliError> {
    match source {
        ModelSource::File(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let model = config::model_from_json(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Ok(LoadedModel {
                config_hash: sha256_hex(text.as_bytes()),
                model,
                scenario: None,
            })
        }
        ModelSource::Scenario(id) => {
            let sc = scenarios::by_id(id).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown scenario {id:?}; available: {}",
                    scenarios::ids().join(", ")
                ))
            })?;
            let model = sc.checks_model();
            let canonical = ModelConfig::from_model(&model).to_json_pretty();
            Ok(LoadedModel {
                config_hash: sha256_hex(canonical.as_bytes()),
                model,
                scenario: Some(sc),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub source: ModelSource,
    pub route: Route,
    pub u: Option<f64>,
    pub t: Option<f64>,
    pub tol: f64,
    pub out: PathBuf,
}

/// Solve a kernel and write it as CSV (rows = start states, final column =
/// defect) under a metadata header.
pub fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let loaded = load_model(&args.source)?;
    let window = loaded.scenario.as_ref().map(|s| s.window);
    let u = args
        .u
        .or(window.map(|w| w.0))
        .ok_or_else(|| CliError::Usage("--u is required without --scenario".into()))?;
    let t = args
        .t
        .or(window.map(|w| w.1))
        .ok_or_else(|| CliError::Usage("--t is required without --scenario".into()))?;
    if !(u >= 0.0 && u < t) {
        return Err(CliError::Usage(format!(
            "need 0 <= u < t, got u = {u}, t = {t}"
        )));
    }
    let started = Instant::now();
    let (kernel, tail_bound) =
        solve_kernel(&loaded.model, args.route, u, t, args.tol).map_err(CliError::Numeric)?;
    let runtime_ms = started.elapsed().as_millis();

    let mut text = String::new();
    let _ = writeln!(text, "# jumpq {VERSION}");
    let _ = writeln!(text, "# config_sha256 {}", loaded.config_hash);
    let _ = writeln!(text, "# route {:?}", args.route);
    let _ = writeln!(text, "# u {u}");
    let _ = writeln!(text, "# t {t}");
    let _ = writeln!(text, "# tol {:e}", args.tol);
    let _ = writeln!(text, "# tail_bound {tail_bound:e}");
    let _ = writeln!(text, "# runtime_ms {runtime_ms}");
    let n = kernel.n();
    let _ = write!(text, "state");
    for y in 0..n {
        let _ = write!(text, ",p{y}");
    }
    let _ = writeln!(text, ",defect");
    for x in 0..n {
        let _ = write!(text, "{x}");
        for y in 0..n {
            let _ = write!(text, ",{}", kernel.matrix[(x, y)]);
        }
        let _ = writeln!(text, ",{}", kernel.defect(x));
    }
    fs::write(&args.out, text).map_err(io_err(&args.out))?;
    Ok(())
}

fn solve_kernel(
    model: &QModel,
    route: Route,
    u: f64,
    t: f64,
    tol: f64,
) -> Result<(Kernel, f64), String> {
    match route {
        Route::Feller => {
            let opts = FellerOptions::default();
            let (kernel, stack) = feller::feller_sum(model, u, t, tol.max(1e-14), &opts)
                .map_err(|e| e.to_string())?;
            let tail = stack.tail_bounds().iter().copied().fold(0.0, f64::max);
            Ok((kernel, tail))
        }
        Route::Backward => {
            let opts = OdeOptions {
                rel_tol: tol,
                ..Default::default()
            };
            let sol =
                kolmogorov::solve_backward(model, t, u, &opts, &[]).map_err(|e| e.to_string())?;
            Ok((sol.final_kernel().clone(), 0.0))
        }
        Route::Forward => {
            let opts = OdeOptions {
                rel_tol: tol,
                ..Default::default()
            };
            let sol =
                kolmogorov::solve_forward(model, u, t, &opts, &[]).map_err(|e| e.to_string())?;
            Ok((sol.final_kernel().clone(), 0.0))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub source: ModelSource,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub u: Option<f64>,
    pub horizon: Option<f64>,
    pub jump_cap: Option<usize>,
    pub x0: usize,
    pub out_dir: PathBuf,
}

/// Sample paths and write a line-delimited path dump plus the empirical
/// kernel with confidence columns.  Byte-identical for a fixed seed.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let loaded = load_model(&args.source)?;
    let model = if loaded.model.is_conservative() {
        loaded.model.clone()
    } else {
        loaded.model.make_conservative()
    };
    let base = loaded.scenario.as_ref().map(|s| s.sim.clone());
    let n_total = model.n_total();
    if args.x0 >= n_total {
        return Err(CliError::Usage(format!(
            "--x0 {} out of range for {} states",
            args.x0, n_total
        )));
    }
    let mut cfg =
        base.unwrap_or_else(|| SimulationConfig::point_mass(args.x0, n_total, 0.0, 1.0));
    if cfg.initial.len() != n_total {
        cfg.initial = {
            let mut v = vec![0.0; n_total];
            v[args.x0] = 1.0;
            v
        };
    }
    if let Some(p) = args.paths {
        cfg.n_paths = p;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(u) = args.u {
        cfg.start_time = u;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(c) = args.jump_cap {
        cfg.jump_cap = c;
    }

    let paths = simulator::simulate_paths(&model, &cfg).map_err(|e| match e {
        simulator::SimError::BadConfig(_) | simulator::SimError::Model(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Numeric(other.to_string()),
    })?;

    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;

    // path dump: schema header line, then one record per path
    let mut dump = String::new();
    let header = serde_json::json!({
        "schema": PATH_SCHEMA_VERSION,
        "version": VERSION,
        "config_sha256": loaded.config_hash,
        "seed": cfg.seed,
        "n_paths": cfg.n_paths,
        "start_time": cfg.start_time,
        "horizon": cfg.horizon,
        "jump_cap": cfg.jump_cap,
    });
    dump.push_str(&header.to_string());
    dump.push('\n');
    for (i, p) in paths.iter().enumerate() {
        let record = PathRecord::from_sample(i, p);
        dump.push_str(&serde_json::to_string(&record).expect("record serializes"));
        dump.push('\n');
    }
    let dump_path = args.out_dir.join("paths.jsonl");
    fs::write(&dump_path, dump).map_err(io_err(&dump_path))?;

    // empirical kernel between the observation endpoints
    let empirical = simulator::empirical_kernel(&paths, cfg.start_time, cfg.horizon, n_total)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut csv = String::new();
    let _ = writeln!(csv, "# jumpq {VERSION}");
    let _ = writeln!(csv, "# config_sha256 {}", loaded.config_hash);
    let _ = writeln!(csv, "# seed {}", cfg.seed);
    let _ = writeln!(csv, "# u {}", cfg.start_time);
    let _ = writeln!(csv, "# t {}", cfg.horizon);
    let _ = write!(csv, "state,count,exploded");
    for y in 0..n_total {
        let _ = write!(csv, ",p{y}");
    }
    for y in 0..n_total {
        let _ = write!(csv, ",hw{y}");
    }
    csv.push('\n');
    for x in 0..n_total {
        let _ = write!(csv, "{x},{},{}", empirical.counts[x], empirical.exploded[x]);
        for y in 0..n_total {
            let _ = write!(csv, ",{}", empirical.kernel.matrix[(x, y)]);
        }
        for y in 0..n_total {
            let _ = write!(csv, ",{}", empirical.half_width[(x, y)]);
        }
        csv.push('\n');
    }
    let csv_path = args.out_dir.join("empirical.csv");
    fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct VerifyArgs {
    /// Scenario id or `all`.
    pub scenario: String,
    pub out_dir: PathBuf,
}

/// Run the verification battery, emit the reports, and fail on the first
/// scenario with a failing check.
pub fn cmd_verify(args: &VerifyArgs) -> Result<Vec<Report>, CliError> {
    let list: Vec<Scenario> = if args.scenario == "all" {
        scenarios::all()
    } else {
        vec![scenarios::by_id(&args.scenario).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown scenario {:?}; available: {} (or \"all\")",
                args.scenario,
                scenarios::ids().join(", ")
            ))
        })?]
    };
    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let mut reports = Vec::new();
    let mut csv = String::from("scenario,check,value,tolerance,status\n");
    for sc in &list {
        let mut report =
            scenarios::run_scenario(sc).map_err(|e| CliError::Numeric(e.to_string()))?;
        for line in report.csv_rows() {
            csv.push_str(&line);
            csv.push('\n');
        }
        let json_path = args.out_dir.join(format!("{}.report.json", sc.id));
        report.artifacts.push(json_path.display().to_string());
        let payload = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&json_path, payload).map_err(io_err(&json_path))?;
        for c in &report.checks {
            println!(
                "[{}] {} :: {} (value {:.3e}, tolerance {:.3e})",
                if c.passed() { "pass" } else { "FAIL" },
                sc.id,
                c.name,
                c.value,
                c.tolerance
            );
        }
        reports.push(report);
    }
    let csv_path = args.out_dir.join("checks.csv");
    fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;

    for report in &reports {
        if let Some(failed) = report.first_failure() {
            return Err(CliError::CheckFailed(format!(
                "{} :: {}",
                report.scenario, failed.name
            )));
        }
    }
    Ok(reports)
}

/// Install the global thread pool from `JUMPQ_THREADS` when set.
pub fn configure_threads() {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}
