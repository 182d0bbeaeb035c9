//! Command-line front end: `run`, `verify` and `sweep`.
//!
//! Exit codes: 0 success, 2 validation or input error, 3 numerical failure,
//! 4 at least one theorem verdict is `fail`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::export::{self, ConvergenceRow};
use crate::flow::{run_conjugate, run_forward, EquationKind, FlowTrajectory};
use crate::harnack::{evolution_residual_h, evolution_residual_p, verify_theorem, TheoremId, Verdict};
use crate::pathopt::{default_queries, verify_integrated_harnack};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERDICT_FAIL: i32 = 4;

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONJUGATE_FILE: &str = "conjugate.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const PATHS_FILE: &str = "corollary_2_3_paths.json";

#[derive(Debug, Parser)]
#[command(name = "ricci-harnack", version, about = "Ricci flow Harnack-estimate laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario and write its trajectory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Parent directory; the run lands in `<out>/<digest>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check theorems against a completed run directory.
    Verify {
        run_dir: PathBuf,
        /// Theorem id (repeatable); defaults to the config's list or to every
        /// theorem that matches the equation.
        #[arg(long = "theorem")]
        theorems: Vec<String>,
        /// Overrides the default tolerance max(1e-6, 5 h²).
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Run a scenario at several resolutions and tabulate residual convergence.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        resolutions: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Provenance record written into every output directory, also on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub digest: String,
    pub version: String,
    pub start_time: String,
    pub end_time: String,
    pub outputs: Vec<String>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub truncated: bool,
    pub hypothesis_violated: bool,
    pub error: Option<String>,
}

impl RunManifest {
    fn new(command: &str, digest: String) -> Self {
        Self {
            command: command.to_string(),
            digest,
            version: env!("CARGO_PKG_VERSION").to_string(),
            start_time: now(),
            end_time: String::new(),
            outputs: Vec::new(),
            verdicts: BTreeMap::new(),
            truncated: false,
            hypothesis_violated: false,
            error: None,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let bytes = std::fs::read(dir.join(MANIFEST_FILE))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::config("manifest", e.to_string()))
    }

    fn save(&mut self, dir: &Path) -> Result<()> {
        self.end_time = now();
        export::save_json(&dir.join(MANIFEST_FILE), self)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() || matches!(e, Error::Io(_)) {
        EXIT_INVALID
    } else {
        EXIT_NUMERICAL
    }
}

/// Parses `args` (program name first) and executes the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, out.as_deref()),
        Command::Verify {
            run_dir,
            theorems,
            tolerance,
        } => cmd_verify(&run_dir, &theorems, tolerance),
        Command::Sweep {
            config,
            resolutions,
            out,
        } => cmd_sweep(&config, &resolutions, out.as_deref()),
    }
}

/// Loaded config plus the directory it writes to. A config that fails to
/// parse still gets a directory, named after the hash of its raw bytes.
struct Prepared {
    config: std::result::Result<ScenarioConfig, Error>,
    bytes: Vec<u8>,
    dir: PathBuf,
    digest: String,
}

fn prepare(config_path: &Path, out: Option<&Path>, prefix: &str) -> std::result::Result<Prepared, i32> {
    let bytes = match std::fs::read(config_path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return Err(EXIT_INVALID);
        }
    };
    let config = ScenarioConfig::from_json(&bytes);
    let digest = match &config {
        Ok(c) => c.digest(),
        Err(_) => hex::encode(Sha256::digest(&bytes)),
    };
    let base = match (out, &config) {
        (Some(o), _) => o.to_path_buf(),
        (None, Ok(c)) => c
            .output_dir
            .as_deref()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs")),
        (None, Err(_)) => PathBuf::from("runs"),
    };
    let dir = base.join(format!("{prefix}{digest}"));
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return Err(EXIT_INVALID);
    }
    Ok(Prepared {
        config,
        bytes,
        dir,
        digest,
    })
}

/// Records `e` in the manifest and maps it to an exit code.
fn fail(manifest: &mut RunManifest, dir: &Path, e: Error) -> i32 {
    eprintln!("error: {e}");
    manifest.error = Some(e.to_string());
    if let Err(w) = manifest.save(dir) {
        eprintln!("error: cannot write manifest: {w}");
    }
    exit_code(&e)
}

/// Forward trajectory and, for conjugate scenarios, the backward sweep.
pub struct Execution {
    pub forward: FlowTrajectory,
    pub conjugate: Option<FlowTrajectory>,
}

/// Integrates a scenario; conjugate scenarios use `f_T = e^{−u0}` on the final metric.
pub fn execute(config: &ScenarioConfig) -> Result<Execution> {
    let forward = run_forward(config)?;
    let conjugate = match config.equation {
        EquationKind::Conjugate => {
            let terminal = forward.metrics().last().expect("nonempty trajectory");
            let f_t = config.u0.sample(terminal).map(|u| (-u).exp());
            Some(run_conjugate(&forward, &f_t)?)
        }
        _ => None,
    };
    Ok(Execution { forward, conjugate })
}

pub fn cmd_run(config_path: &Path, out: Option<&Path>) -> i32 {
    let prepared = match prepare(config_path, out, "") {
        Ok(p) => p,
        Err(code) => return code,
    };
    let dir = prepared.dir;
    let mut manifest = RunManifest::new("run", prepared.digest);
    if let Err(e) = export::save_text(&dir.join(CONFIG_FILE), &String::from_utf8_lossy(&prepared.bytes)) {
        return fail(&mut manifest, &dir, e);
    }
    manifest.outputs.push(CONFIG_FILE.into());
    let config = match prepared.config {
        Ok(c) => c,
        Err(e) => return fail(&mut manifest, &dir, e),
    };
    let run = match execute(&config) {
        Ok(r) => r,
        Err(e) => return fail(&mut manifest, &dir, e),
    };
    manifest.truncated = run.forward.truncated();
    manifest.hypothesis_violated = run.forward.hypothesis_violated();
    let mut files = vec![(TRAJECTORY_FILE, export::trajectory_csv(&run.forward))];
    if let Some(conj) = &run.conjugate {
        files.push((CONJUGATE_FILE, export::trajectory_csv(conj)));
    }
    for (name, text) in files {
        if let Err(e) = export::save_text(&dir.join(name), &text) {
            return fail(&mut manifest, &dir, e);
        }
        manifest.outputs.push(name.into());
    }
    if let Err(e) = manifest.save(&dir) {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    println!("{}", dir.display());
    EXIT_OK
}

fn default_theorems(config: &ScenarioConfig) -> Vec<TheoremId> {
    if !config.theorems.is_empty() {
        return config.theorems.clone();
    }
    TheoremId::ALL
        .into_iter()
        .filter(|id| id.equation() == config.equation)
        .collect()
}

pub fn cmd_verify(run_dir: &Path, theorems: &[String], tolerance: Option<f64>) -> i32 {
    let mut manifest = match RunManifest::load(run_dir) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {} is not a run directory: {e}", run_dir.display());
            return EXIT_INVALID;
        }
    };
    if manifest.error.is_some() || !run_dir.join(TRAJECTORY_FILE).is_file() {
        eprintln!("error: {} holds no completed trajectory", run_dir.display());
        return EXIT_INVALID;
    }
    let result = (|| -> Result<Vec<(TheoremId, Verdict)>> {
        let bytes = std::fs::read(run_dir.join(CONFIG_FILE))?;
        let config = ScenarioConfig::from_json(&bytes)?;
        let ids: Vec<TheoremId> = if theorems.is_empty() {
            default_theorems(&config)
        } else {
            theorems.iter().map(|s| s.parse()).collect::<Result<_>>()?
        };
        for id in &ids {
            if id.equation() != config.equation {
                return Err(Error::WrongEquation(format!(
                    "{id} applies to {} runs, the scenario solves {}",
                    id.equation(),
                    config.equation
                )));
            }
        }
        if let Some(tol) = tolerance {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::InvalidParameter(format!("tolerance {tol} must be nonnegative")));
            }
        }
        // The trajectory is regenerated from the stored config; runs are deterministic.
        let run = execute(&config)?;
        let tol = tolerance.unwrap_or_else(|| crate::default_tolerance(run.forward.spacing()));
        let start = config.window_start();
        let mut verdicts = Vec::new();
        for id in ids {
            let traj = run.conjugate.as_ref().unwrap_or(&run.forward);
            let report = if id == TheoremId::IntegratedHarnack {
                let queries = if config.path_queries.is_empty() {
                    default_queries(traj, start)?
                } else {
                    config.path_queries.clone()
                };
                let checked = verify_integrated_harnack(traj, &queries, tol)?;
                export::write_paths(&run_dir.join(PATHS_FILE), &checked.paths)?;
                manifest.outputs.push(PATHS_FILE.into());
                checked.report
            } else {
                verify_theorem(traj, id, start, tol)?
            };
            for file in export::write_report(run_dir, &report)? {
                manifest
                    .outputs
                    .push(file.file_name().unwrap().to_string_lossy().into_owned());
            }
            println!(
                "{id}: {} (max violation {:.3e}, tolerance {:.3e})",
                report.verdict.as_str(),
                report.max_violation,
                report.tolerance
            );
            verdicts.push((id, report.verdict));
        }
        Ok(verdicts)
    })();
    match result {
        Ok(verdicts) => {
            let mut failed = false;
            for (id, verdict) in verdicts {
                failed |= verdict == Verdict::Fail;
                manifest.verdicts.insert(id.to_string(), verdict);
            }
            manifest.outputs.sort();
            manifest.outputs.dedup();
            if let Err(e) = manifest.save(run_dir) {
                eprintln!("error: {e}");
                return EXIT_INVALID;
            }
            if failed {
                EXIT_VERDICT_FAIL
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Residuals and mass drift of one scenario at its configured resolution.
pub fn convergence_row(config: &ScenarioConfig) -> Result<ConvergenceRow> {
    let run = execute(config)?;
    let mid = 0.5 * (config.window_start() + config.t_end);
    Ok(match &run.conjugate {
        Some(conj) => ConvergenceRow {
            n: config.grid_size,
            residual_h: None,
            residual_p: Some(evolution_residual_p(conj, mid)?),
            mass_drift: conj.mass_drift(),
        },
        None => ConvergenceRow {
            n: config.grid_size,
            residual_h: Some(evolution_residual_h(&run.forward, mid)?),
            residual_p: None,
            mass_drift: None,
        },
    })
}

pub fn cmd_sweep(config_path: &Path, resolutions: &[usize], out: Option<&Path>) -> i32 {
    let prepared = match prepare(config_path, out, "sweep-") {
        Ok(p) => p,
        Err(code) => return code,
    };
    let dir = prepared.dir;
    let mut manifest = RunManifest::new("sweep", prepared.digest);
    let config = match prepared.config {
        Ok(c) => c,
        Err(e) => return fail(&mut manifest, &dir, e),
    };
    if resolutions.len() < 2 {
        let e = Error::InvalidResolution(format!(
            "a sweep needs at least two resolutions, got {}",
            resolutions.len()
        ));
        return fail(&mut manifest, &dir, e);
    }
    if let Some(&n) = resolutions.iter().find(|&&n| n < crate::geometry::MIN_NODES) {
        let e = Error::InvalidResolution(format!(
            "N = {n} is below the minimum of {}",
            crate::geometry::MIN_NODES
        ));
        return fail(&mut manifest, &dir, e);
    }
    if let Err(e) = export::save_text(&dir.join(CONFIG_FILE), &String::from_utf8_lossy(&prepared.bytes)) {
        return fail(&mut manifest, &dir, e);
    }
    manifest.outputs.push(CONFIG_FILE.into());
    let mut rows = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        match convergence_row(&config.with_grid_size(n)) {
            Ok(row) => rows.push(row),
            Err(e) => return fail(&mut manifest, &dir, e),
        }
    }
    if let Err(e) = export::save_text(&dir.join(CONVERGENCE_FILE), &export::convergence_csv(&rows)) {
        return fail(&mut manifest, &dir, e);
    }
    manifest.outputs.push(CONVERGENCE_FILE.into());
    if let Err(e) = manifest.save(&dir) {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    println!("{}", dir.display());
    EXIT_OK
}
