//! Command-line front end for the survey simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tioli::benchmark::{render_table, report_from_mean_cost};
use tioli::harness::{
    self, load_config, output, run_selected_suites, run_trials, ConfigError, ExperimentSpec,
    SweepGrid,
};
use tioli::mechanism::MechanismConfig;
use tioli::population::PopulationModel;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

enum CliError {
    /// Bad or unreadable config; exits with status 2.
    Config(ConfigError),
    /// Any other failure; exits with status 1.
    Run(String),
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        CliError::Config(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Run(err.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "tioli",
    about = "Take-it-or-leave-it survey simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Master seed; every output is a pure function of (config, seed).
    #[arg(long, env = "TIOLI_SEED", default_value_t = 0)]
    seed: u64,

    /// Override the config's trial count (runs per arm for `audit`).
    #[arg(long)]
    trials: Option<u64>,

    /// Directory for output files.
    #[arg(long, env = "TIOLI_OUT", default_value = ".")]
    out: PathBuf,

    /// Terminal output format.
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment batch; emits summary.json and epochs.csv.
    Run(CommonArgs),
    /// Run a grid of experiments over alpha, eta, and cost values.
    Sweep(CommonArgs),
    /// Empirical privacy audit of the offer stage; emits audit.json.
    Audit(CommonArgs),
    /// Cost comparison against the envy-free benchmark; emits benchmark.json.
    Benchmark(CommonArgs),
    /// Run the config's verification suites; non-zero exit on any failure.
    Verify(CommonArgs),
}

fn load_spec(args: &CommonArgs) -> Result<(ExperimentSpec, Option<SweepGrid>), CliError> {
    let loaded = load_config(&args.config)?;
    let mut spec = loaded.spec.with_seed(args.seed);
    if let Some(trials) = args.trials {
        spec = spec.with_trials(trials)?;
    }
    Ok((spec, loaded.sweep))
}

fn ensure_out_dir(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)
}

fn cmd_run(args: &CommonArgs) -> Result<u8, CliError> {
    let (spec, _) = load_spec(args)?;
    let output_data = run_trials(&spec);
    ensure_out_dir(&args.out)?;
    output::write_summary_json(&args.out, &output_data.summary)?;
    output::write_epochs_csv(&args.out, &output_data.epoch_rows)?;
    match args.format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&output_data.summary)
                .map_err(|e| CliError::Run(e.to_string()))?;
            println!("{text}");
        }
        OutputFormat::Csv => print!("{}", output::summary_csv(&output_data.summary)),
    }
    Ok(0)
}

/// One sweep cell: fresh `(alpha, eta)` with the base config's structural
/// knobs, over a copy of the population with every cost value replaced.
fn sweep_cell_spec(
    base: &ExperimentSpec,
    alpha: f64,
    eta: f64,
    value: f64,
    trials: u64,
) -> Result<ExperimentSpec, CliError> {
    let mechanism = MechanismConfig::new(alpha, eta)
        .and_then(|c| c.with_epoch_constant(base.mechanism.epoch_constant()))
        .and_then(|c| c.with_base_price(base.mechanism.base_price()))
        .and_then(|c| c.with_max_epochs(base.mechanism.max_epochs()))
        .map_err(|e| CliError::Run(e.to_string()))?;
    let cells: Vec<_> = base
        .population
        .cells()
        .iter()
        .map(|c| tioli::population::Cell { value, ..*c })
        .collect();
    let population = PopulationModel::new(
        base.population.universe().clone(),
        cells,
        base.population.mode(),
    )
    .map_err(|e| CliError::Run(e.to_string()))?
    .with_strategy(base.population.strategy());
    Ok(
        ExperimentSpec::new(mechanism, population, trials, base.master_seed)?
            .with_params(base.params),
    )
}

fn cmd_sweep(args: &CommonArgs) -> Result<u8, CliError> {
    let (spec, sweep) = load_spec(args)?;
    let Some(grid) = sweep else {
        return Err(CliError::Config(ConfigError::Invalid(
            "sweep requires a [sweep] section in the config".into(),
        )));
    };
    ensure_out_dir(&args.out)?;
    let trials = args.trials.unwrap_or(grid.trials);
    let mut manifest = Vec::new();
    for &alpha in &grid.alphas {
        for &eta in &grid.etas {
            for &value in &grid.values {
                let cell = sweep_cell_spec(&spec, alpha, eta, value, trials)?;
                let result = run_trials(&cell);
                let report = report_from_mean_cost(
                    &cell.population,
                    &cell.mechanism,
                    result.summary.mean_cost,
                    trials as usize,
                );
                let name = format!("summary_alpha{alpha}_eta{eta}_v{value}.json");
                output::write_json(&args.out.join(&name), &result.summary)?;
                manifest.push(serde_json::json!({
                    "alpha": alpha,
                    "eta": eta,
                    "value": value,
                    "summary_file": name,
                    "mean_cost": result.summary.mean_cost,
                    "failure_rate": result.summary.failure_rate,
                    "benchmark": report,
                }));
                eprintln!(
                    "cell alpha={alpha} eta={eta} v={value}: mean cost {:.2}, ratio {:.4}",
                    result.summary.mean_cost, report.ratio
                );
            }
        }
    }
    output::write_json(&args.out.join("sweep.json"), &manifest)?;
    Ok(0)
}

fn cmd_audit(args: &CommonArgs) -> Result<u8, CliError> {
    let (mut spec, _) = load_spec(args)?;
    if let Some(runs) = args.trials {
        spec.params.audit_runs_per_arm = runs;
    }
    let (script_a, script_b) = harness::default_audit_scripts(&spec.mechanism);
    let report = harness::empirical_dp_audit(
        &spec.mechanism,
        &script_a,
        &script_b,
        spec.params.audit_runs_per_arm,
        spec.master_seed,
        &spec.params,
    )
    .map_err(|e| CliError::Run(e.to_string()))?;
    ensure_out_dir(&args.out)?;
    output::write_json(&args.out.join("audit.json"), &report)?;
    println!(
        "{} audit: max lower-CI ratio {:.4} vs bound {:.4} over {} bins",
        if report.passes { "PASS" } else { "FAIL" },
        report.max_lower_ratio,
        report.threshold,
        report.bins.len()
    );
    Ok(if report.passes { 0 } else { EXIT_FAILURE })
}

fn cmd_benchmark(args: &CommonArgs) -> Result<u8, CliError> {
    let (spec, _) = load_spec(args)?;
    let result = run_trials(&spec);
    let report = report_from_mean_cost(
        &spec.population,
        &spec.mechanism,
        result.summary.mean_cost,
        spec.trials as usize,
    );
    ensure_out_dir(&args.out)?;
    output::write_json(&args.out.join("benchmark.json"), &report)?;
    print!("{}", render_table(&report));
    Ok(0)
}

fn cmd_verify(args: &CommonArgs) -> Result<u8, CliError> {
    let (spec, _) = load_spec(args)?;
    let reports = run_selected_suites(&spec);
    let mut all_passed = true;
    for report in &reports {
        println!("{}", report.render());
        all_passed &= report.passed;
    }
    Ok(if all_passed { 0 } else { EXIT_FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Config(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Run(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
