//! Command-line front end: bias analysis of a covariance structure, the
//! Monte Carlo sign experiment, the randomized theory battery, and the
//! panel validation pipeline.
//!
//! Every command is a pure function of (inputs, flags, seed): data outputs
//! are byte-identical on rerun. Exit codes: 0 success, 1 property or
//! runtime failure, 2 input error.

mod input;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use biaslab::montecarlo::{self, SimConfig};
use biaslab::panel::{
    self, cluster_bootstrap, default_combos, synth_panel, ComboSpec, PanelDataset, Pollutant,
    SynthConfig,
};
use biaslab::theory::{self, Fault};
use biaslab::{assumptions, bias, Error};

#[derive(Parser)]
#[command(name = "biaslab", version, about = "Bias analysis for regression with omitted or error-prone covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the bias formulas on a covariance structure from JSON.
    Analyze {
        /// Input JSON (blocks or a classical shorthand plus coefficients).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run the Monte Carlo sign experiment and tally the phenomena.
    Simulate {
        /// Full experiment config as JSON (flags below override it).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run the randomized verification battery for the sign guarantees.
    TheoryCheck {
        #[arg(long, default_value_t = 200)]
        instances: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON report here as well as to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corrupt an intermediate quantity to prove the battery notices.
        #[arg(long, value_parser = ["omega-sign"])]
        inject_fault: Option<String>,
    },
    /// Run the three-regression validation triples and the cluster
    /// bootstrap on a panel (from CSV or a synthetic generator config).
    ValidatePanel {
        /// Panel CSV path.
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Synthetic generator config JSON.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Explicit combinations "main:control:crop,..." (default: all
        /// ordered pollutant pairs for every crop with data).
        #[arg(long)]
        combos: Option<String>,
        /// Restrict default combinations to these crops (comma list).
        #[arg(long)]
        crops: Option<String>,
        #[arg(long, default_value_t = 200)]
        bootstrap: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Also summarize the subset of combos whose control is not this
        /// pollutant.
        #[arg(long)]
        exclude_control: Option<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

/// Run metadata written next to every command's outputs.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    library_version: &'static str,
    wall_clock_unix_seconds: u64,
    outputs: Vec<String>,
}

const MANIFEST_FILE: &str = "manifest.json";

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("BIASLAB_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Schema(_)
        | Error::UnknownPollutant(_)
        | Error::DimensionMismatch(_)
        | Error::IndexOutOfRange(_)
        | Error::PreconditionViolated(_)
        | Error::NotPositiveDefinite(_) => 2,
        _ => 1,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Schema(format!("cannot read {what} '{}': {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("malformed {what} '{}': {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Schema(format!("serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    outputs: &[&str],
) -> Result<(), Error> {
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seed,
        library_version: env!("CARGO_PKG_VERSION"),
        wall_clock_unix_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)
}

fn run_analyze(input_path: &Path, out_dir: &Path) -> Result<(), Error> {
    let input: input::AnalyzeInput = read_json(input_path, "analyze input")?;
    let (blocks, beta, err) = input.build()?;
    let report = bias::analyze(&blocks, &beta, err.as_ref())?;

    // assumption profile over the X pollutants plus any declared Z ones
    let n_pollutants = blocks.num_x + input.pollutant_z_indices.len();
    let profile = if n_pollutants >= 2 {
        let mut beta_pollutants = beta.beta_x.clone();
        beta_pollutants.extend(input.pollutant_z_indices.iter().map(|&k| beta.beta_z[k]));
        Some(assumptions::profile(
            &blocks.joint_zx(),
            blocks.num_z,
            &input.pollutant_z_indices,
            &beta_pollutants,
        )?)
    } else {
        None
    };

    #[derive(Serialize)]
    struct AnalyzeOutput {
        manifest: &'static str,
        report: bias::BiasReport,
        #[serde(skip_serializing_if = "Option::is_none")]
        assumptions: Option<assumptions::AssumptionProfile>,
    }
    std::fs::create_dir_all(out_dir)?;
    let out = AnalyzeOutput {
        manifest: MANIFEST_FILE,
        report,
        assumptions: profile,
    };
    write_json(&out_dir.join("report.json"), &out)?;
    write_manifest(
        out_dir,
        "analyze",
        serde_json::json!({ "input": input_path.display().to_string() }),
        None,
        &["report.json"],
    )?;
    eprintln!("wrote {}", out_dir.join("report.json").display());
    Ok(())
}

fn run_simulate(
    config_path: Option<&Path>,
    trials: Option<u64>,
    seed: Option<u64>,
    threads: Option<usize>,
    out_dir: &Path,
) -> Result<(), Error> {
    let mut config: SimConfig = match config_path {
        Some(p) => read_json(p, "simulation config")?,
        None => SimConfig::default(),
    };
    if let Some(t) = trials {
        config.n_trials = t;
    }
    // flag wins, then an explicit config file's seed, then the env default
    if let Some(s) = seed {
        config.seed = s;
    } else if config_path.is_none() {
        config.seed = resolve_seed(None);
    }
    if let Some(t) = threads {
        config.threads = Some(t);
    }
    let tally = montecarlo::run_experiment(&config)?;

    #[derive(Serialize)]
    struct SimOutput<'a> {
        manifest: &'static str,
        tally: &'a montecarlo::SimTally,
    }
    std::fs::create_dir_all(out_dir)?;
    write_json(
        &out_dir.join("tally.json"),
        &SimOutput {
            manifest: MANIFEST_FILE,
            tally: &tally,
        },
    )?;
    std::fs::write(out_dir.join("tally.csv"), montecarlo::tally_to_csv(&tally))?;
    write_manifest(
        out_dir,
        "simulate",
        serde_json::to_value(&config).unwrap_or_default(),
        Some(config.seed),
        &["tally.json", "tally.csv"],
    )?;
    print!("{}", montecarlo::format_table(&tally));
    Ok(())
}

fn run_theory_check(
    instances: u64,
    seed: Option<u64>,
    out: Option<&Path>,
    inject_fault: Option<&str>,
) -> Result<bool, Error> {
    let fault = match inject_fault {
        Some("omega-sign") => Fault::OmegaSignFlip,
        _ => Fault::None,
    };
    let seed = resolve_seed(seed);
    let report = theory::run_battery(instances, seed, fault);
    for check in &report.checks {
        eprintln!(
            "check {:<34} {} ({} instances, {} failures)",
            check.name,
            if check.passed { "ok" } else { "FAILED" },
            check.n_instances,
            check.n_failures
        );
    }
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Schema(format!("serialization: {e}")))?;
    println!("{json}");
    if let Some(path) = out {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, format!("{json}\n"))?;
    }
    Ok(report.all_passed)
}

fn parse_combos(spec: &str) -> Result<Vec<ComboSpec>, Error> {
    let mut combos = Vec::new();
    for part in spec.split(',').filter(|s| !s.is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            return Err(Error::Schema(format!(
                "combo '{part}' is not main:control:crop"
            )));
        }
        let main = Pollutant::from_key(fields[0])?;
        let control = Pollutant::from_key(fields[1])?;
        if main == control {
            return Err(Error::PreconditionViolated(format!(
                "combo '{part}': main and control pollutant must differ"
            )));
        }
        combos.push(ComboSpec {
            main,
            control,
            crop: fields[2].to_string(),
        });
    }
    if combos.is_empty() {
        return Err(Error::Schema("empty combo list".into()));
    }
    Ok(combos)
}

#[allow(clippy::too_many_arguments)]
fn run_validate_panel(
    data_path: Option<&Path>,
    synthetic_path: Option<&Path>,
    combos_spec: Option<&str>,
    crops_spec: Option<&str>,
    n_reps: u64,
    seed: Option<u64>,
    threads: Option<usize>,
    exclude_control: Option<&str>,
    out_dir: &Path,
) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let mut outputs: Vec<&str> = vec!["results.json"];
    let mut config_echo = serde_json::Map::new();
    let data: PanelDataset = match (data_path, synthetic_path) {
        (Some(p), None) => {
            config_echo.insert(
                "data".into(),
                serde_json::Value::String(p.display().to_string()),
            );
            PanelDataset::read_csv_path(p)?
        }
        (None, Some(p)) => {
            let synth_config: SynthConfig = read_json(p, "synthetic config")?;
            let (data, manifest) = synth_panel(&synth_config)?;
            data.write_csv_path(&out_dir.join("panel.csv"))?;
            write_json(&out_dir.join("generator_manifest.json"), &manifest)?;
            outputs.push("panel.csv");
            outputs.push("generator_manifest.json");
            config_echo.insert(
                "synthetic".into(),
                serde_json::to_value(&synth_config).unwrap_or_default(),
            );
            data
        }
        _ => {
            return Err(Error::Schema(
                "exactly one of --data or --synthetic is required".into(),
            ))
        }
    };

    let combos = match combos_spec {
        Some(spec) => parse_combos(spec)?,
        None => {
            let crops: Vec<String> = match crops_spec {
                Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
                None => data.crops().to_vec(),
            };
            default_combos(&data, &crops)
        }
    };
    let exclude = exclude_control.map(Pollutant::from_key).transpose()?;
    let seed = resolve_seed(seed);
    let results = cluster_bootstrap(&data, &combos, n_reps, seed, exclude, threads)?;

    #[derive(Serialize)]
    struct ValidateOutput<'a> {
        manifest: &'static str,
        entries: &'a [panel::ComboOutcome],
        bootstrap: &'a panel::BootstrapSummary,
    }
    write_json(
        &out_dir.join("results.json"),
        &ValidateOutput {
            manifest: MANIFEST_FILE,
            entries: &results.outcomes,
            bootstrap: &results.summary,
        },
    )?;
    config_echo.insert("bootstrap".into(), serde_json::json!(n_reps));
    if let Some(e) = exclude {
        config_echo.insert("exclude_control".into(), serde_json::json!(e.key()));
    }
    write_manifest(
        out_dir,
        "validate-panel",
        serde_json::Value::Object(config_echo),
        Some(seed),
        &outputs,
    )?;
    let s = &results.summary.all.point;
    eprintln!(
        "combos evaluated: {} (skipped {}); negative OVB {}/{}, negative MEB {}/{}",
        s.n_evaluated,
        s.n_skipped,
        s.count_negative_ovb,
        s.n_evaluated,
        s.count_negative_meb,
        s.n_evaluated
    );
    eprintln!("wrote {}", out_dir.join("results.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze { input, out_dir } => run_analyze(input, out_dir).map(|()| true),
        Command::Simulate {
            config,
            trials,
            seed,
            threads,
            out_dir,
        } => run_simulate(config.as_deref(), *trials, *seed, *threads, out_dir).map(|()| true),
        Command::TheoryCheck {
            instances,
            seed,
            out,
            inject_fault,
        } => run_theory_check(*instances, *seed, out.as_deref(), inject_fault.as_deref()),
        Command::ValidatePanel {
            data,
            synthetic,
            combos,
            crops,
            bootstrap,
            seed,
            threads,
            exclude_control,
            out_dir,
        } => run_validate_panel(
            data.as_deref(),
            synthetic.as_deref(),
            combos.as_deref(),
            crops.as_deref(),
            *bootstrap,
            *seed,
            *threads,
            exclude_control.as_deref(),
            out_dir,
        )
        .map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
