//! Command-line front end for `rydq-core`: configuration, deterministic
//! seeding and the `reproduce-all` pipeline.
//!
//! Output layout under `--out` (default `rydq-out`):
//!
//! ```text
//! <out>/provenance.json        every config key with value, default and source
//! <out>/summary.json           per-target status, seed and headline numbers
//! <out>/<target>/<table>.csv   '#' metadata line, header row, data rows
//! <out>/<target>/summary.json  headline numbers and full results
//! ```

pub mod config;
pub mod output;
pub mod targets;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::{parse_config, provenance, ConfigError, RunConfig};
use output::{write_json, Artifact, Meta, VERSION};
use targets::{run_target, Context, TARGETS};

#[derive(Debug, Parser)]
#[command(name = "rydq", version, about = "Rydberg qubit preparation and readout simulator")]
pub struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blockade radii for the preparation and detection pair channels.
    Blockade,
    /// Cloud geometry: pair distance, optical depth, density.
    Ensemble,
    /// Preparation sequence.
    Prep {
        #[command(subcommand)]
        cmd: PrepCmd,
    },
    /// Photon-count statistics of the detection window.
    Detect {
        #[command(subcommand)]
        cmd: DetectCmd,
    },
    /// Classification, fits and repeated measurements.
    Readout {
        #[command(subcommand)]
        cmd: ReadoutCmd,
    },
    /// Coherent qubit dynamics.
    Qubit {
        #[command(subcommand)]
        cmd: QubitCmd,
    },
    /// Regenerate every figure and table target.
    ReproduceAll,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Subcommand)]
pub enum PrepCmd {
    /// Three-photon detuning scan and resonant trajectory.
    Scan,
}

#[derive(Debug, Subcommand)]
pub enum DetectCmd {
    /// Exact and sampled count histograms.
    Histogram,
    /// Mean detected rate versus time.
    Trace,
    /// Two-window joint counts.
    Joint,
}

#[derive(Debug, Subcommand)]
pub enum ReadoutCmd {
    /// Telegraph fit. Without inputs, fits simulated multi-start histograms.
    Fit {
        /// Histogram CSV files (columns count,occurrences). Each needs a
        /// sidecar `<name>.json` holding {"t_start": .., "t_len": ..}.
        #[arg(long = "histogram")]
        histograms: Vec<PathBuf>,
    },
    /// Repeated-measurement table.
    Table,
    /// Detected-photon gain.
    Gain,
    /// Detection fidelity versus probe rate.
    Sweep,
}

#[derive(Debug, Subcommand)]
pub enum QubitCmd {
    Rabi,
    Ramsey,
    /// Two-excitation dephasing envelope.
    Washout,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub completed: Vec<String>,
    pub failed: Vec<(String, String)>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.failed.is_empty() {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

pub fn meta(cfg: &RunConfig) -> Meta {
    Meta {
        version: VERSION.to_string(),
        config_hash: cfg.hash(),
    }
}

fn pool(jobs: usize) -> io::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(io::Error::other)
}

fn compute(cfg: &RunConfig, names: &[&str]) -> Vec<(String, Result<Artifact, String>)> {
    match Context::new(cfg) {
        Ok(ctx) => names
            .par_iter()
            .map(|n| (n.to_string(), run_target(n, &ctx).map_err(|e| e.to_string())))
            .collect(),
        Err(e) => names
            .iter()
            .map(|n| (n.to_string(), Err(format!("operating point: {e}"))))
            .collect(),
    }
}

/// Runs the named targets and writes their outputs, the run summary and the
/// provenance record. A failing target does not stop the others.
pub fn run_targets(cfg: &RunConfig, out: &Path, jobs: usize, names: &[&str]) -> io::Result<RunReport> {
    let results = pool(jobs)?.install(|| compute(cfg, names));
    let meta = meta(cfg);
    std::fs::create_dir_all(out)?;
    let mut report = RunReport {
        completed: Vec::new(),
        failed: Vec::new(),
    };
    let mut summary = BTreeMap::new();
    for (name, res) in results {
        match res {
            Ok(a) => {
                a.write(out, &meta)?;
                summary.insert(
                    name.clone(),
                    json!({ "status": "ok", "seed": a.seed, "headline": a.headline }),
                );
                report.completed.push(name);
            }
            Err(e) => {
                summary.insert(name.clone(), json!({ "status": "failed", "error": e }));
                report.failed.push((name, e));
            }
        }
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "version": meta.version,
            "config_hash": meta.config_hash,
            "master_seed": cfg.master_seed,
            "targets": summary,
        }),
    )?;
    write_json(
        &out.join("provenance.json"),
        &json!({
            "version": meta.version,
            "config_hash": meta.config_hash,
            "keys": provenance(cfg),
        }),
    )?;
    Ok(report)
}

pub fn reproduce_all(cfg: &RunConfig, out: &Path, jobs: usize) -> io::Result<RunReport> {
    run_targets(cfg, out, jobs, &TARGETS)
}

/// Reads a `count,occurrences` CSV and its JSON window sidecar.
pub fn read_histogram(path: &Path) -> Result<rydq_core::readout::WindowHistogram, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut occ: Vec<u64> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("count") {
            continue;
        }
        let bad = || format!("{}:{}: expected `count,occurrences`", path.display(), lineno + 1);
        let (c, o) = line.split_once(',').ok_or_else(bad)?;
        let c: usize = c.trim().parse().map_err(|_| bad())?;
        let o: u64 = o.trim().parse().map_err(|_| bad())?;
        if occ.len() <= c {
            occ.resize(c + 1, 0);
        }
        occ[c] += o;
    }
    let sidecar = path.with_extension("json");
    let win: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&sidecar).map_err(|e| format!("{}: {e}", sidecar.display()))?,
    )
    .map_err(|e| format!("{}: {e}", sidecar.display()))?;
    let field = |k: &str| {
        win.get(k)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| format!("{}: missing number `{k}`", sidecar.display()))
    };
    let window = rydq_core::telegraph::Window::new(field("t_start")?, field("t_len")?)
        .map_err(|e| e.to_string())?;
    Ok(rydq_core::readout::WindowHistogram {
        window,
        occurrences: occ,
    })
}

fn fit_inputs(cfg: &RunConfig, out: &Path, paths: &[PathBuf]) -> Result<RunReport, String> {
    use rydq_core::readout::{fit_histograms, FitOptions};
    let data = paths
        .iter()
        .map(|p| read_histogram(p))
        .collect::<Result<Vec<_>, _>>()?;
    let ctx = Context::new(cfg).map_err(|e| e.to_string())?;
    let seed = ctx.seed("readout_fit");
    let opts = FitOptions {
        fit_gamma_imp: cfg.readout.fit_gamma_imp,
        restarts: cfg.readout.fit_restarts,
        seed,
    };
    let fit = fit_histograms(&data, &ctx.params, true, &opts).map_err(|e| e.to_string())?;
    let mut a = Artifact::new("readout_fit", seed);
    a.headline("f_prep", fit.f_prep);
    a.headline("gamma_loss", fit.gamma_loss);
    a.headline("r_high", fit.r_high);
    a.headline("r_low", fit.r_low);
    a.results = json!({
        "inputs": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "fit": output::to_value(&fit),
    });
    a.write(out, &meta(cfg)).map_err(|e| e.to_string())?;
    Ok(RunReport {
        completed: vec!["readout_fit".into()],
        failed: Vec::new(),
    })
}

/// Loads the configuration and applies command-line overrides.
pub fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return EXIT_CONFIG;
        }
    };
    let jobs = cli.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let out = cfg.output_dir.clone();
    let names: &[&str] = match &cli.command {
        Command::Config => {
            return match cfg.to_toml_string() {
                Ok(s) => {
                    print!("{s}");
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("configuration error: {e}");
                    EXIT_CONFIG
                }
            };
        }
        Command::Readout {
            cmd: ReadoutCmd::Fit { histograms },
        } if !histograms.is_empty() => {
            return match fit_inputs(&cfg, &out, histograms) {
                Ok(r) => finish(&out, r),
                Err(e) => {
                    eprintln!("readout fit failed: {e}");
                    EXIT_PARTIAL
                }
            };
        }
        Command::ReproduceAll => &TARGETS,
        Command::Blockade => &["figS5b_blockade_prep", "figS6_detection_blockade"],
        Command::Ensemble => &["ensemble"],
        Command::Prep { cmd: PrepCmd::Scan } => &["figS1a_prep_scan"],
        Command::Detect { cmd } => match cmd {
            DetectCmd::Histogram => &["fig2a_histograms"],
            DetectCmd::Trace => &["fig2b_rate"],
            DetectCmd::Joint => &["detect_joint"],
        },
        Command::Readout { cmd } => match cmd {
            ReadoutCmd::Fit { .. } => &["figS3_multistart"],
            ReadoutCmd::Table => &["fig2c_table1"],
            ReadoutCmd::Gain => &["readout_gain"],
            ReadoutCmd::Sweep => &["figS4_rate_sweep"],
        },
        Command::Qubit { cmd } => match cmd {
            QubitCmd::Rabi => &["fig3_rabi"],
            QubitCmd::Ramsey => &["fig4_ramsey"],
            QubitCmd::Washout => &["qubit_washout"],
        },
    };
    match run_targets(&cfg, &out, jobs, names) {
        Ok(r) => finish(&out, r),
        Err(e) => {
            eprintln!("cannot write outputs to {}: {e}", out.display());
            EXIT_PARTIAL
        }
    }
}

fn finish(out: &Path, r: RunReport) -> i32 {
    for name in &r.completed {
        println!("{name}: ok -> {}", out.join(name).display());
    }
    for (name, e) in &r.failed {
        eprintln!("{name}: failed: {e}");
    }
    r.exit_code()
}
