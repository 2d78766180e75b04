//! `netloss`: run experiments, check certificates, design gains and compare
//! tail bounds against exact enumeration.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible design, 4 I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use netloss::experiment::{
    certificates_for, emit, fmt_f64, preset_names, resolve_controller, run_experiment,
    to_exact_json, ControllerSpec, ExperimentError, ExperimentSpec, Format,
};
use netloss::loss::MarkovLossModel;
use netloss::tail::{exact_tail_oracle, psi_k, TailBoundSpec, TailError};
use netloss::Verdict;

#[derive(Parser)]
#[command(name = "netloss", version, about = "Event-triggered control over lossy, jammed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every path of an experiment and write the requested series.
    Run {
        /// Experiment file, or the name of a bundled preset.
        spec: String,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Evaluate the experiment's certificates without simulating.
    Certify {
        spec: String,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Search for a certified gain (the experiment's controller must be a
    /// design request).
    Design {
        spec: String,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Compare the Chernoff-type bound with the exact tail probability.
    Oracle {
        /// Tail-bound file: `{"model": ..., "rho": ..., "k_max": ...}`.
        spec: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct CommonOpts {
    /// Override the batch seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Directory for result files; nothing is written without it.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Infeasible(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Infeasible(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_infeasible() {
            Failure::Infeasible(e.to_string())
        } else if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

impl From<TailError> for Failure {
    fn from(e: TailError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load_spec(arg: &str, opts: &CommonOpts) -> Result<ExperimentSpec, Failure> {
    let path = Path::new(arg);
    let mut spec = if path.exists() {
        ExperimentSpec::load(path)?
    } else if preset_names().contains(&arg) {
        ExperimentSpec::preset(arg)?
    } else {
        return Err(Failure::Io(format!(
            "{arg}: no such file and not a preset ({})",
            preset_names().join(", ")
        )));
    };
    if let Some(seed) = opts.seed {
        spec.sim.config.seed = seed;
    }
    if let Some(paths) = opts.paths {
        spec.paths = paths;
    }
    spec.validate()?;
    Ok(spec)
}

fn format_of(opts: &CommonOpts) -> Result<Format, Failure> {
    Ok(opts.format.parse::<Format>()?)
}

fn write_out(dir: &Path, name: &str, text: &str) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn cmd_run(arg: &str, opts: &CommonOpts) -> Outcome {
    let format = format_of(opts)?;
    let spec = load_spec(arg, opts)?;
    let result = run_experiment(&spec)?;
    println!(
        "{}: {} paths, {} converged, {} diverged, {} inconclusive",
        result.name,
        result.summaries.len(),
        result.verdict_count(Verdict::Converged),
        result.verdict_count(Verdict::Diverged),
        result.verdict_count(Verdict::Inconclusive)
    );
    for c in &result.certificates {
        println!("  {} certificate: {}", c.kind(), if c.pass() { "pass" } else { "fail" });
    }
    if let Some(dir) = &opts.out_dir {
        let files = emit(&result, format, dir)?;
        println!("  wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn cmd_certify(arg: &str, opts: &CommonOpts) -> Outcome {
    let format = format_of(opts)?;
    let spec = load_spec(arg, opts)?;
    let resolved = resolve_controller(&spec.plant, &spec.controller)?;
    let reports = certificates_for(&spec, &resolved)?;
    if reports.is_empty() {
        return Err(Failure::Invalid("the experiment configures no certificates".into()));
    }
    for r in &reports {
        println!("{} certificate: {}", r.kind(), if r.pass() { "pass" } else { "fail" });
        for (field, value) in r.fields() {
            println!("  {field} = {}", fmt_f64(value));
        }
    }
    if let Some(dir) = &opts.out_dir {
        match format {
            Format::Json => write_out(dir, "certificates.json", &to_exact_json(&reports)?)?,
            Format::Csv => {
                let mut s = String::from("certificate,field,value\n");
                for r in &reports {
                    for (field, value) in r.fields() {
                        s.push_str(&format!("{},{field},{}\n", r.kind(), fmt_f64(value)));
                    }
                }
                write_out(dir, "certificates.csv", &s)?;
            }
        }
    }
    Ok(())
}

fn cmd_design(arg: &str, opts: &CommonOpts) -> Outcome {
    let spec = load_spec(arg, opts)?;
    if !matches!(spec.controller, ControllerSpec::Design { .. }) {
        return Err(Failure::Invalid("the experiment's controller is not a design request".into()));
    }
    let resolved = resolve_controller(&spec.plant, &spec.controller)?;
    let design = resolved.design.expect("design request yields a design");
    let json = to_exact_json(&design)?;
    println!("{json}");
    if let Some(dir) = &opts.out_dir {
        write_out(dir, "design.json", &json)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct OracleSpec {
    model: MarkovLossModel,
    rho: f64,
    k_max: usize,
    /// Defaults to the model's failure-probability bound.
    #[serde(default)]
    p_tilde: Option<f64>,
}

#[derive(Serialize)]
struct OracleRow {
    k: usize,
    exact: f64,
    psi: f64,
    holds: bool,
}

fn cmd_oracle(path: &Path, opts: &CommonOpts) -> Outcome {
    let format = format_of(opts)?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let spec: OracleSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::Invalid(format!("cannot parse tail-bound spec: {e}")))?;
    if spec.k_max == 0 {
        return Err(Failure::Invalid("k_max must be positive".into()));
    }
    let bound = TailBoundSpec::random_only(spec.rho, spec.p_tilde.unwrap_or(spec.model.p1_bound()))?;
    let rows = (1..=spec.k_max)
        .map(|k| {
            let exact = exact_tail_oracle(&spec.model, k, spec.rho)?;
            let psi = psi_k(&bound, 0.0, k as u64)?;
            Ok(OracleRow {
                k,
                exact,
                psi,
                holds: exact <= psi + 1e-12,
            })
        })
        .collect::<Result<Vec<_>, TailError>>()?;
    let mut csv = String::from("k,exact,psi,holds\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.k, fmt_f64(r.exact), fmt_f64(r.psi), r.holds));
    }
    print!("{csv}");
    if let Some(dir) = &opts.out_dir {
        match format {
            Format::Csv => write_out(dir, "oracle.csv", &csv)?,
            Format::Json => write_out(dir, "oracle.json", &to_exact_json(&rows)?)?,
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { spec, opts } => cmd_run(spec, opts),
        Command::Certify { spec, opts } => cmd_certify(spec, opts),
        Command::Design { spec, opts } => cmd_design(spec, opts),
        Command::Oracle { spec, opts } => cmd_oracle(spec, opts),
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("netloss: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
