//! Scenario runner behind the `conicflow` binary.
//!
//! A run reads an optional TOML file, solves one scenario, and writes its CSV
//! tables plus `summary.json` and `manifest.json` into an output directory.
//! The manifest is written for failed runs too.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
//! 4 a violated invariant.

pub mod config;
pub mod output;
pub mod scenarios;

pub use scenarios::Kind;

use config::{ConfigError, Reader};
use output::Manifest;
use scenarios::{Failure, Report, Scales};
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    /// Defaults to `out/<kind>`.
    pub out: Option<PathBuf>,
    pub grid_scale: f64,
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { config: None, out: None, grid_scale: 1.0, tol_scale: 1.0 }
    }
}

pub struct Outcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

fn failure_code(f: &Failure) -> (i32, String) {
    match f {
        Failure::Config(e) => (EXIT_CONFIG, e.to_string()),
        Failure::Solver(e) if e.is_invariant() => (EXIT_INVARIANT, e.to_string()),
        Failure::Solver(e) => (EXIT_SOLVER, e.to_string()),
    }
}

/// Runs one scenario. Only I/O problems on the output directory are returned
/// as `Err`; everything else ends up in the manifest and the exit code.
pub fn run(kind: Kind, opts: &RunOptions) -> std::io::Result<Outcome> {
    let out_dir = opts.out.clone().unwrap_or_else(|| Path::new("out").join(kind.name()));
    fs::create_dir_all(&out_dir)?;
    let mut manifest = Manifest {
        kind: kind.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: opts.config.as_ref().map(|p| p.display().to_string()),
        grid_scale: opts.grid_scale,
        tol_scale: opts.tol_scale,
        parameters: Default::default(),
        status: String::new(),
        exit_code: EXIT_OK,
        error: None,
        identity_suite: None,
        invariants: Vec::new(),
        artifacts: Vec::new(),
    };

    let result = prepare(kind, opts).and_then(|(plan, params)| {
        manifest.parameters = params;
        scenarios::execute(&plan)
    });

    let report = match result {
        Ok(r) => r,
        Err(f) => {
            let (code, msg) = failure_code(&f);
            manifest.exit_code = code;
            manifest.error = Some(msg);
            Report::default()
        }
    };
    for (name, text) in &report.files {
        fs::write(out_dir.join(name), text)?;
        manifest.artifacts.push(name.clone());
    }
    let summary = serde_json::to_string_pretty(&report.summary).expect("summary serializes");
    fs::write(out_dir.join("summary.json"), summary + "\n")?;
    manifest.artifacts.push("summary.json".into());

    manifest.identity_suite = report.identity.clone();
    manifest.invariants = report.invariants;
    if manifest.exit_code == EXIT_OK {
        let identity_ok = report.identity.as_ref().map_or(true, |i| i.passed);
        if !identity_ok || manifest.invariants.iter().any(|c| !c.passed) {
            manifest.exit_code = EXIT_INVARIANT;
            let failed: Vec<&str> =
                manifest.invariants.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            manifest.error = Some(if identity_ok {
                format!("invariant violated: {}", failed.join(", "))
            } else {
                "background identity suite failed".into()
            });
        }
    }
    manifest.status = match manifest.exit_code {
        EXIT_OK => "ok",
        EXIT_CONFIG => "config_error",
        EXIT_SOLVER => "solver_error",
        _ => "invariant_violated",
    }
    .into();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(Outcome { exit_code: manifest.exit_code, out_dir, manifest })
}

fn prepare(kind: Kind, opts: &RunOptions) -> Result<(scenarios::Plan, serde_json::Map<String, serde_json::Value>), Failure> {
    let mut problems = Vec::new();
    for (flag, v) in [("--grid-scale", opts.grid_scale), ("--tol-scale", opts.tol_scale)] {
        if !(v.is_finite() && v > 0.0) {
            problems.push(format!("{flag} = {v}: must be positive"));
        }
    }
    let text = match &opts.config {
        None => None,
        Some(p) => match fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(format!("cannot read {}: {e}", p.display()));
                None
            }
        },
    };
    if !problems.is_empty() {
        return Err(Failure::Config(ConfigError { problems }));
    }
    let mut reader = Reader::new(text.as_deref())?;
    let plan = scenarios::configure(kind, &mut reader, &Scales { grid: opts.grid_scale, tol: opts.tol_scale });
    let params = reader.finish()?;
    Ok((plan, params))
}
