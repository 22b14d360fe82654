use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rdff::construct::expand_representation;
use rdff::format::{instance_to_json, read_instance, StreamFile};
use rdff::harness::config::{InstanceConfig, LearnerConfig, Seeds, StreamConfig, TeacherConfig};
use rdff::harness::sweep::write_transcript;
use rdff::harness::{
    default_output_dir, plan_trial, run_trial, verify_bounds, write_outputs, BoundCheck,
    Experiment, SweepFile, SweepReport, TrialReport,
};
use rdff::stochastic::{DeletionClock, LogBase};
use rdff::streams::{gen_random_instance, InstanceParams, Placement};
use rdff::{validate_instance, ExceptionStrategy};

#[derive(Parser)]
#[command(
    name = "rdff",
    version,
    about = "Simulate robust discriminative feature feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance and write it as JSON.
    GenInstance(GenArgs),
    /// Run the robust learner on an adversarial stream.
    RunAdversarial(AdversarialArgs),
    /// Run the stochastic learner on an i.i.d. stream.
    RunStochastic(StochasticArgs),
    /// Run the robust learner on the hidden-pair lower-bound stream.
    RunLowerBound(LowerBoundArgs),
    /// Rewrite an instance as an exception-free one.
    ExpandRepresentation(ExpandArgs),
    /// Re-check the closed-form bounds of a trial or sweep report.
    VerifyBounds(VerifyArgs),
    /// Run every experiment of a config file over its seeds.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    /// Number of distinct labels; defaults to m.
    #[arg(long)]
    labels: Option<u16>,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    s: usize,
    #[arg(long, default_value_t = 4)]
    per_component: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to $RDFF_OUTPUT_DIR, then ./rdff-out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Skip writing the transcript.
    #[arg(long)]
    no_transcript: bool,
}

#[derive(Args)]
struct AdversarialArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Replay this stream file instead of generating one.
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long, default_value = "shared-feature", value_parser = parse_strategy)]
    strategy: ExceptionStrategy,
    /// Run with k = s = 0 instead of the instance's budgets.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value_t = 3)]
    passes: usize,
    #[arg(long, default_value = "uniform", value_parser = parse_placement)]
    placement: Placement,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct StochasticArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Defaults to epsilon.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long)]
    length: usize,
    /// Total exception mass; defaults to epsilon.
    #[arg(long)]
    exception_mass: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<u64>,
    #[arg(long, default_value = "rule-creation", value_parser = parse_clock)]
    clock: DeletionClock,
    #[arg(long, default_value = "natural", value_parser = parse_log_base)]
    log_base: LogBase,
    #[arg(long, default_value = "shared-feature", value_parser = parse_strategy)]
    strategy: ExceptionStrategy,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[arg(long)]
    m: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// A trial report or a sweep report.json.
    report: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Run only this seed, replacing the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Overrides output.dir from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<ExceptionStrategy, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_clock(s: &str) -> Result<DeletionClock, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_log_base(s: &str) -> Result<LogBase, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn print_bounds(checks: &[BoundCheck]) {
    for c in checks {
        let status = if c.pass { "pass" } else { "FAIL" };
        print!(
            "  {:<8} bound {:>10.3}  observed {:>8}  margin {:>10.3}  {status}",
            c.name, c.bound, c.observed, c.margin
        );
        match &c.detail {
            Some(d) => println!("  ({d})"),
            None => println!(),
        }
    }
}

fn print_report(report: &TrialReport) {
    println!(
        "rounds {}  mistakes {}  rules created {}  deleted {}",
        report.rounds, report.mistakes, report.rules_created, report.rules_deleted
    );
    if report.flagged > 0 || report.teacher_overruns > 0 {
        println!(
            "flagged feedback {}  teacher overruns {}",
            report.flagged, report.teacher_overruns
        );
    }
    for (check, result) in &report.invariants {
        if !result.passed() {
            println!(
                "  invariant {} violated {} times",
                check.as_str(),
                result.violations
            );
        }
    }
    print_bounds(&report.bounds);
}

fn run_single(exp: Experiment, stream: Option<&Path>, run: &RunArgs) -> anyhow::Result<ExitCode> {
    let mut planned = plan_trial(&exp, run.seed, !run.no_transcript)?;
    if let Some(path) = stream {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: StreamFile = serde_json::from_str(&text)?;
        file.check(&planned.instance)?;
        planned.stream = file.ids();
    }
    if planned.stream.is_empty() {
        bail!("empty stream");
    }
    let trial = run_trial(&planned.instance, &planned.stream, &planned.spec)?;

    let dir = run.out_dir.clone().unwrap_or_else(default_output_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let report_path = dir.join(format!("trial-{}.json", run.seed));
    let mut json = serde_json::to_string_pretty(&trial.report)?;
    json.push('\n');
    fs::write(&report_path, json)?;
    if !run.no_transcript {
        write_transcript(
            &dir.join(format!("trial-{}.jsonl", run.seed)),
            &trial.transcript,
        )?;
    }

    print_report(&trial.report);
    println!("wrote {}", report_path.display());
    let ok = trial.report.bounds_pass() && trial.report.invariant_violations() == 0;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn gen_instance(args: GenArgs) -> anyhow::Result<ExitCode> {
    let params = InstanceParams {
        m: args.m,
        d: args.d,
        labels: args.labels.unwrap_or(args.m as u16),
        k: args.k,
        s: args.s,
        per_component: args.per_component,
    };
    let instance = gen_random_instance(&params, args.seed)?;
    write_or_print(args.out.as_deref(), &instance_to_json(&instance))?;
    Ok(ExitCode::SUCCESS)
}

fn expand(args: ExpandArgs) -> anyhow::Result<ExitCode> {
    let instance = read_instance(&args.instance)
        .with_context(|| format!("reading {}", args.instance.display()))?;
    let expanded = expand_representation(&instance)?;
    let report = validate_instance(&expanded);
    eprintln!(
        "components {} -> {}  exceptions {} -> {}  valid {}",
        instance.m(),
        expanded.m(),
        instance.computed_exceptions().len(),
        expanded.computed_exceptions().len(),
        report.ok()
    );
    write_or_print(args.out.as_deref(), &instance_to_json(&expanded))?;
    Ok(if report.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let mut all = true;
    if let Ok(report) = serde_json::from_str::<TrialReport>(&text) {
        let checks = verify_bounds(&report);
        all = checks.iter().all(|c| c.pass);
        print_bounds(&checks);
    } else {
        let sweep: SweepReport =
            serde_json::from_str(&text).context("neither a trial nor a sweep report")?;
        for trial in &sweep.trials {
            let Some(report) = &trial.report else {
                println!(
                    "{} seed {}: no report ({})",
                    trial.experiment,
                    trial.seed,
                    trial.error.as_deref().unwrap_or("?")
                );
                continue;
            };
            let checks = verify_bounds(report);
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name.as_str())
                .collect();
            if !failed.is_empty() {
                all = false;
                println!(
                    "{} seed {}: {} failed",
                    trial.experiment,
                    trial.seed,
                    failed.join(", ")
                );
            }
        }
        println!("{} trials checked", sweep.trials.len());
    }
    println!(
        "{}",
        if all {
            "all bounds hold"
        } else {
            "bound violations found"
        }
    );
    Ok(if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let mut file = SweepFile::read(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        file.sweep.seeds = Seeds::List(vec![seed]);
    }
    if args.parallelism.is_some() {
        file.sweep.parallelism = args.parallelism;
    }
    file.check()?;
    let dir = args
        .out_dir
        .or_else(|| file.output.dir.clone())
        .unwrap_or_else(default_output_dir);
    let result = rdff::harness::sweep(&file)?;
    let written = write_outputs(&result, &dir, &file.output)?;

    for s in &result.report.experiments {
        println!(
            "{}: {} trials, {} failed, mistakes mean {:.2} max {}, invariants {:.3}",
            s.id, s.trials, s.failures, s.mistakes.mean, s.mistakes.max, s.all_invariants_pass_rate
        );
        for (name, rate) in &s.bound_pass_rate {
            println!("  {name} pass rate {rate:.3}");
        }
    }
    println!("wrote {} files to {}", written.len(), dir.display());
    let failures: usize = result.report.experiments.iter().map(|s| s.failures).sum();
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn experiment(
    instance: InstanceConfig,
    strategy: ExceptionStrategy,
    learner: LearnerConfig,
    stream: StreamConfig,
) -> Experiment {
    Experiment {
        id: None,
        instance,
        teacher: TeacherConfig {
            strategies: vec![strategy],
        },
        learner,
        stream,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenInstance(args) => gen_instance(args),
        Command::RunAdversarial(args) => {
            let learner = if args.baseline {
                LearnerConfig::Baseline
            } else {
                LearnerConfig::Robust
            };
            let exp = experiment(
                InstanceConfig::File {
                    path: args.instance,
                },
                args.strategy,
                learner,
                StreamConfig::Adversarial {
                    passes: args.passes,
                    placement: args.placement,
                },
            );
            run_single(exp, args.stream.as_deref(), &args.run)
        }
        Command::RunStochastic(args) => {
            let exp = experiment(
                InstanceConfig::File {
                    path: args.instance,
                },
                args.strategy,
                LearnerConfig::Stochastic {
                    epsilon: args.epsilon,
                    sigma: args.sigma.unwrap_or(args.epsilon),
                    delta: args.delta,
                    clock: args.clock,
                    log_base: args.log_base,
                },
                StreamConfig::Stochastic {
                    length: args.length,
                    exception_mass: args.exception_mass,
                    checkpoints: args.checkpoints,
                },
            );
            run_single(exp, None, &args.run)
        }
        Command::RunLowerBound(args) => {
            let exp = experiment(
                InstanceConfig::LowerBound { m: args.m },
                ExceptionStrategy::SharedFeature,
                LearnerConfig::Robust,
                StreamConfig::LowerBound,
            );
            run_single(exp, None, &args.run)
        }
        Command::ExpandRepresentation(args) => expand(args),
        Command::VerifyBounds(args) => verify(args),
        Command::Sweep(args) => run_sweep(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
