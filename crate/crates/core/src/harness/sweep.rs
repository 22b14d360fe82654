//! Seed sweeps over experiments, aggregation and output files.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::read_instance;
use crate::model::{ExampleId, Instance};
use crate::stochastic::StroParams;
use crate::streams::{
    adversarial_stream, gen_random_instance, lower_bound_stream, min_features, InstanceParams,
    StochasticSampler,
};
use crate::teacher::{ExceptionStrategy, SimilarityBudget};
use crate::validate::validate_instance;

use super::config::{
    Experiment, InstanceConfig, LearnerConfig, OutputConfig, OutputFormat, StreamConfig, SweepFile,
};
use super::invariants::Check;
use super::trial::{run_trial, LearnerSpec, TranscriptRow, TrialReport, TrialSpec};

/// The parameters a trial actually ran with, after sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub learner: String,
    pub strategy: ExceptionStrategy,
    pub m: usize,
    pub d: usize,
    pub labels: u16,
    pub k: usize,
    pub s: usize,
    /// Stream length, including the first example.
    pub n: usize,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
}

/// Everything needed to run one trial.
#[derive(Clone, Debug)]
pub struct PlannedTrial {
    pub instance: Instance,
    pub stream: Vec<ExampleId>,
    pub spec: TrialSpec,
    pub params: TrialParams,
}

fn build_instance(
    config: &InstanceConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Instance, Option<Vec<ExampleId>>)> {
    match config {
        InstanceConfig::Random {
            m,
            d,
            labels,
            k,
            s,
            per_component,
        } => {
            let per_component = per_component.sample(rng)?;
            let m = m.sample(rng)?;
            let labels = match labels {
                Some(l) => l.sample(rng)?,
                None => m,
            };
            let labels = u16::try_from(labels)
                .map_err(|_| Error::Config(format!("{labels} labels is too many")))?;
            let k = k.sample(rng)?.min(m * per_component);
            let s = s.sample(rng)?.min(k);
            let lo = d.min().max(min_features(m, labels, per_component));
            if lo > d.max() {
                return Err(Error::Config(format!(
                    "m = {m} with {labels} labels and {per_component} examples per component needs d >= {lo}, above the configured maximum {}",
                    d.max()
                )));
            }
            let d = rng.gen_range(lo..=d.max());
            let params = InstanceParams {
                m,
                d,
                labels,
                k,
                s,
                per_component,
            };
            Ok((gen_random_instance(&params, rng.gen())?, None))
        }
        InstanceConfig::LowerBound { m } => {
            let lb = lower_bound_stream(*m, rng.gen())?;
            Ok((lb.instance, Some(lb.stream)))
        }
        InstanceConfig::File { path } => {
            let inst = read_instance(path)?;
            let report = validate_instance(&inst);
            if !report.ok() {
                return Err(Error::InvalidInstance(format!(
                    "{}: {} violations, first: {}",
                    path.display(),
                    report.violations.len(),
                    report.violations[0].detail
                )));
            }
            Ok((inst, None))
        }
    }
}

/// Samples parameters and builds the instance, stream and trial spec for
/// `seed`. A pure function of its inputs.
pub fn plan_trial(exp: &Experiment, seed: u64, record_transcript: bool) -> Result<PlannedTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strategies = &exp.teacher.strategies;
    if strategies.is_empty() {
        return Err(Error::Config("no teacher strategies".into()));
    }
    let strategy = strategies[rng.gen_range(0..strategies.len())];
    let (instance, fixed_stream) = build_instance(&exp.instance, &mut rng)?;
    let stream_seed: u64 = rng.gen();
    let teacher_seed: u64 = rng.gen();

    let m = instance.m();
    let (learner, learner_name, stochastic) = match exp.learner {
        LearnerConfig::Robust => (
            LearnerSpec::Robust {
                m,
                k: instance.k,
                s: instance.s,
            },
            "robust",
            None,
        ),
        LearnerConfig::Baseline => (LearnerSpec::Robust { m, k: 0, s: 0 }, "baseline", None),
        LearnerConfig::Stochastic {
            epsilon,
            sigma,
            delta,
            clock,
            log_base,
        } => {
            let p = StroParams {
                m,
                epsilon,
                sigma,
                delta,
                clock,
                log_base,
            };
            p.validate()?;
            (LearnerSpec::Stochastic(p), "stochastic", Some(p))
        }
    };

    let mut budget = SimilarityBudget::Count(instance.s);
    let mut weights = None;
    let mut checkpoints = Vec::new();
    let stream = match &exp.stream {
        StreamConfig::Adversarial { passes, placement } => {
            adversarial_stream(&instance, *passes, *placement, stream_seed)
        }
        StreamConfig::Stochastic {
            length,
            exception_mass,
            checkpoints: points,
        } => {
            let p = stochastic.ok_or_else(|| {
                Error::Config("stochastic streams need the stochastic learner".into())
            })?;
            let mut sampler = StochasticSampler::new(
                &instance,
                exception_mass.unwrap_or(p.epsilon),
                p.sigma,
                stream_seed,
            )?;
            let w = sampler.weights().to_vec();
            budget = SimilarityBudget::Mass {
                sigma: p.sigma,
                weights: w.clone(),
            };
            weights = Some(w);
            checkpoints = points.clone();
            sampler.draw(*length)
        }
        StreamConfig::LowerBound => fixed_stream.ok_or_else(|| {
            Error::Config("the lower-bound stream needs the lower-bound instance".into())
        })?,
    };

    let params = TrialParams {
        learner: learner_name.to_string(),
        strategy,
        m,
        d: instance.d,
        labels: instance.labels,
        k: instance.k,
        s: instance.s,
        n: stream.len(),
        epsilon: stochastic.map(|p| p.epsilon),
        sigma: stochastic.map(|p| p.sigma),
        delta: stochastic.map(|p| p.delta),
    };
    let spec = TrialSpec {
        learner,
        strategy,
        budget,
        teacher_seed,
        weights,
        checkpoints,
        record_transcript,
    };
    Ok(PlannedTrial {
        instance,
        stream,
        spec,
        params,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub seed: u64,
    pub params: Option<TrialParams>,
    pub report: Option<TrialReport>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: median_sorted(&v),
            max: v[v.len() - 1],
        }
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub round: u64,
    /// Median over trials of mistakes per round up to `round`.
    pub median_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub id: String,
    pub trials: usize,
    pub failures: usize,
    pub mistakes: Stats,
    pub rules_created: Stats,
    /// Fraction of completed trials with no violation of each invariant.
    pub invariant_pass_rate: BTreeMap<Check, f64>,
    /// Fraction of completed trials with no violation of any invariant.
    pub all_invariants_pass_rate: f64,
    pub bound_pass_rate: BTreeMap<String, f64>,
    pub rate_curve: Vec<RatePoint>,
}

impl ExperimentSummary {
    pub fn from_records(id: &str, records: &[&TrialRecord]) -> Self {
        let reports: Vec<&TrialReport> = records.iter().filter_map(|r| r.report.as_ref()).collect();
        let n = reports.len().max(1) as f64;
        let rate = |count: usize| {
            if reports.is_empty() {
                0.0
            } else {
                count as f64 / n
            }
        };

        let mut invariant_pass_rate = BTreeMap::new();
        let mut bound_pass_rate = BTreeMap::new();
        for r in &reports {
            for (check, res) in &r.invariants {
                *invariant_pass_rate.entry(*check).or_insert(0usize) += usize::from(res.passed());
            }
            for b in &r.bounds {
                *bound_pass_rate.entry(b.name.clone()).or_insert(0usize) += usize::from(b.pass);
            }
        }

        let mut rate_curve = Vec::new();
        if let Some(first) = reports.first() {
            for (i, point) in first.mistake_curve.iter().enumerate() {
                let mut rates: Vec<f64> = reports
                    .iter()
                    .filter_map(|r| r.mistake_curve.get(i))
                    .filter(|p| p.round == point.round)
                    .map(|p| p.mistakes as f64 / p.round as f64)
                    .collect();
                if rates.len() == reports.len() {
                    rates.sort_by(f64::total_cmp);
                    rate_curve.push(RatePoint {
                        round: point.round,
                        median_rate: median_sorted(&rates),
                    });
                }
            }
        }

        Self {
            id: id.to_string(),
            trials: records.len(),
            failures: records.len() - reports.len(),
            mistakes: Stats::of(
                &reports
                    .iter()
                    .map(|r| r.mistakes as f64)
                    .collect::<Vec<_>>(),
            ),
            rules_created: Stats::of(
                &reports
                    .iter()
                    .map(|r| r.rules_created as f64)
                    .collect::<Vec<_>>(),
            ),
            invariant_pass_rate: invariant_pass_rate
                .into_iter()
                .map(|(k, c)| (k, rate(c)))
                .collect(),
            all_invariants_pass_rate: rate(
                reports
                    .iter()
                    .filter(|r| r.invariant_violations() == 0)
                    .count(),
            ),
            bound_pass_rate: bound_pass_rate
                .into_iter()
                .map(|(k, c)| (k, rate(c)))
                .collect(),
            rate_curve,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub experiments: Vec<ExperimentSummary>,
    pub trials: Vec<TrialRecord>,
}

impl SweepReport {
    pub fn trials_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a TrialRecord> + 'a {
        self.trials.iter().filter(move |t| t.experiment == id)
    }

    pub fn summary(&self, id: &str) -> Option<&ExperimentSummary> {
        self.experiments.iter().find(|e| e.id == id)
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub report: SweepReport,
    /// `(experiment, seed, rows)`, kept only when transcripts are requested.
    pub transcripts: Vec<(String, u64, Vec<TranscriptRow>)>,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "trial panicked".into())
}

fn run_one(
    exp: &Experiment,
    id: &str,
    seed: u64,
    keep: bool,
) -> (TrialRecord, Option<Vec<TranscriptRow>>) {
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<_> {
        let plan = plan_trial(exp, seed, keep)?;
        let trial = run_trial(&plan.instance, &plan.stream, &plan.spec);
        Ok((plan.params, trial))
    }));
    let (params, result) = match outcome {
        Ok(Ok((params, trial))) => (Some(params), trial.map_err(|e| e.to_string())),
        Ok(Err(e)) => (None, Err(e.to_string())),
        Err(payload) => (None, Err(panic_message(payload))),
    };
    let (report, transcript, error) = match result {
        Ok(t) => (Some(t.report), keep.then_some(t.transcript), None),
        Err(e) => (None, None, Some(e)),
    };
    (
        TrialRecord {
            experiment: id.to_string(),
            seed,
            params,
            report,
            error,
        },
        transcript,
    )
}

/// Runs every experiment on every seed. Trial failures are recorded in the
/// report; only a thread-pool failure aborts the sweep.
pub fn sweep(file: &SweepFile) -> Result<SweepResult> {
    let ids = file.ids();
    let seeds = file.sweep.seeds.expand();
    let keep = file.output.wants(OutputFormat::Jsonl);
    let jobs: Vec<(usize, u64)> = (0..file.experiments.len())
        .flat_map(|e| seeds.iter().map(move |&s| (e, s)))
        .collect();
    let run = || -> Vec<_> {
        jobs.par_iter()
            .map(|&(e, seed)| run_one(&file.experiments[e], &ids[e], seed, keep))
            .collect()
    };
    let outputs = match file.sweep.parallelism {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut trials = Vec::with_capacity(outputs.len());
    let mut transcripts = Vec::new();
    for (record, transcript) in outputs {
        if let Some(rows) = transcript {
            transcripts.push((record.experiment.clone(), record.seed, rows));
        }
        trials.push(record);
    }
    let experiments = ids
        .iter()
        .map(|id| {
            let records: Vec<&TrialRecord> =
                trials.iter().filter(|t| &t.experiment == id).collect();
            ExperimentSummary::from_records(id, &records)
        })
        .collect();
    Ok(SweepResult {
        report: SweepReport {
            experiments,
            trials,
        },
        transcripts,
    })
}

/// One row of `metrics.csv`.
#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct MetricsRow<'a> {
    config_id: &'a str,
    seed: u64,
    learner: Option<&'a str>,
    strategy: Option<ExceptionStrategy>,
    m: Option<usize>,
    d: Option<usize>,
    k: Option<usize>,
    s: Option<usize>,
    epsilon: Option<f64>,
    sigma: Option<f64>,
    n: Option<usize>,
    mistakes: Option<u64>,
    rules_created: Option<u64>,
    rules_deleted: Option<u64>,
    thm3_bound: Option<f64>,
    thm3_pass: Option<bool>,
    lemma4_pass: Option<bool>,
    lemma5_pass: Option<bool>,
    lemma10_bound: Option<f64>,
    lemma10_pass: Option<bool>,
    lemma1: Option<u64>,
    lemma2: Option<u64>,
    lemma3: Option<u64>,
    lemma4: Option<u64>,
    lemma5: Option<u64>,
    counter_cap: Option<u64>,
    lemma6: Option<u64>,
    lemma7: Option<u64>,
    lemma8: Option<u64>,
    lemma9: Option<u64>,
    teacher_overruns: Option<u64>,
    error: Option<&'a str>,
}

impl<'a> MetricsRow<'a> {
    fn new(t: &'a TrialRecord) -> Self {
        let p = t.params.as_ref();
        let r = t.report.as_ref();
        let bound = |name: &str| r.and_then(|r| r.bound(name));
        let violations = |c: Check| r.and_then(|r| r.invariants.get(&c)).map(|v| v.violations);
        Self {
            config_id: &t.experiment,
            seed: t.seed,
            learner: p.map(|p| p.learner.as_str()),
            strategy: p.map(|p| p.strategy),
            m: p.map(|p| p.m),
            d: p.map(|p| p.d),
            k: p.map(|p| p.k),
            s: p.map(|p| p.s),
            epsilon: p.and_then(|p| p.epsilon),
            sigma: p.and_then(|p| p.sigma),
            n: p.map(|p| p.n),
            mistakes: r.map(|r| r.mistakes),
            rules_created: r.map(|r| r.rules_created),
            rules_deleted: r.map(|r| r.rules_deleted),
            thm3_bound: bound("thm3").map(|b| b.bound),
            thm3_pass: bound("thm3").map(|b| b.pass),
            lemma4_pass: bound("lemma4").map(|b| b.pass),
            lemma5_pass: bound("lemma5").map(|b| b.pass),
            lemma10_bound: bound("lemma10").map(|b| b.bound),
            lemma10_pass: bound("lemma10").map(|b| b.pass),
            lemma1: violations(Check::Lemma1),
            lemma2: violations(Check::Lemma2),
            lemma3: violations(Check::Lemma3),
            lemma4: violations(Check::Lemma4),
            lemma5: violations(Check::Lemma5),
            counter_cap: violations(Check::CounterCap),
            lemma6: violations(Check::Lemma6),
            lemma7: violations(Check::Lemma7),
            lemma8: violations(Check::Lemma8),
            lemma9: violations(Check::Lemma9),
            teacher_overruns: r.map(|r| r.teacher_overruns),
            error: t.error.as_deref(),
        }
    }
}

pub fn write_metrics_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in &report.trials {
        w.serialize(MetricsRow::new(t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_json(path: &Path, report: &SweepReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One JSON object per line, keys in field order.
pub fn write_transcript(path: &Path, rows: &[TranscriptRow]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the requested formats under `dir` and returns the paths written.
pub fn write_outputs(
    result: &SweepResult,
    dir: &Path,
    output: &OutputConfig,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if output.wants(OutputFormat::Csv) {
        let path = dir.join("metrics.csv");
        write_metrics_csv(&path, &result.report)?;
        written.push(path);
    }
    if output.wants(OutputFormat::Json) {
        let path = dir.join("report.json");
        write_report_json(&path, &result.report)?;
        written.push(path);
    }
    if output.wants(OutputFormat::Jsonl) {
        let tdir = dir.join("transcripts");
        std::fs::create_dir_all(&tdir)?;
        for (id, seed, rows) in &result.transcripts {
            let path = tdir.join(format!("{id}-{seed}.jsonl"));
            write_transcript(&path, rows)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{IntParam, SweepConfig, TeacherConfig};
    use crate::streams::Placement;

    fn robust_experiment() -> Experiment {
        Experiment {
            id: Some("robust".into()),
            instance: InstanceConfig::Random {
                m: IntParam::Range { min: 2, max: 4 },
                d: IntParam::Range { min: 4, max: 12 },
                labels: None,
                k: IntParam::Range { min: 0, max: 3 },
                s: IntParam::Range { min: 1, max: 3 },
                per_component: IntParam::Fixed(3),
            },
            teacher: TeacherConfig::default(),
            learner: LearnerConfig::Robust,
            stream: StreamConfig::Adversarial {
                passes: 2,
                placement: Placement::Uniform,
            },
        }
    }

    fn file(seeds: Vec<u64>, formats: Vec<OutputFormat>) -> SweepFile {
        SweepFile {
            experiments: vec![robust_experiment()],
            sweep: SweepConfig {
                seeds: crate::harness::config::Seeds::List(seeds),
                parallelism: Some(2),
            },
            output: OutputConfig { dir: None, formats },
        }
    }

    #[test]
    fn planning_is_deterministic_and_respects_ranges() {
        let exp = robust_experiment();
        for seed in 0..20 {
            let a = plan_trial(&exp, seed, false).unwrap();
            let b = plan_trial(&exp, seed, false).unwrap();
            assert_eq!(a.instance, b.instance);
            assert_eq!(a.stream, b.stream);
            assert_eq!(a.params, b.params);
            let p = &a.params;
            assert!((2..=4).contains(&p.m) && p.d <= 12 && p.k <= 3 && p.s <= p.k);
            assert!(validate_instance(&a.instance).ok());
        }
    }

    #[test]
    fn single_trial_aggregate_matches_report() {
        let result = sweep(&file(vec![5], vec![OutputFormat::Json])).unwrap();
        let record = &result.report.trials[0];
        let report = record.report.as_ref().unwrap();
        let summary = &result.report.experiments[0];
        assert_eq!(summary.trials, 1);
        assert_eq!(summary.failures, 0);
        let m = report.mistakes as f64;
        assert_eq!(
            (
                summary.mistakes.mean,
                summary.mistakes.median,
                summary.mistakes.max
            ),
            (m, m, m)
        );
        for (check, res) in &report.invariants {
            assert_eq!(
                summary.invariant_pass_rate[check],
                if res.passed() { 1.0 } else { 0.0 }
            );
        }
        for b in &report.bounds {
            assert_eq!(
                summary.bound_pass_rate[&b.name],
                if b.pass { 1.0 } else { 0.0 }
            );
        }
    }

    #[test]
    fn failures_are_isolated() {
        let mut f = file(vec![0, 1], vec![]);
        let mut bad = robust_experiment();
        bad.id = Some("bad".into());
        bad.instance = InstanceConfig::Random {
            m: IntParam::Fixed(6),
            d: IntParam::Fixed(3),
            labels: None,
            k: IntParam::Fixed(0),
            s: IntParam::Fixed(0),
            per_component: IntParam::Fixed(2),
        };
        f.experiments.push(bad);
        let result = sweep(&f).unwrap();
        assert_eq!(result.report.trials.len(), 4);
        assert_eq!(result.report.summary("robust").unwrap().failures, 0);
        assert_eq!(result.report.summary("bad").unwrap().failures, 2);
        assert!(result.report.trials_of("bad").all(|t| t.error.is_some()));
    }

    #[test]
    fn outputs_are_byte_identical_across_runs() {
        let f = file(
            (0..6).collect(),
            vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Jsonl],
        );
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut listings = Vec::new();
        for dir in &dirs {
            let result = sweep(&f).unwrap();
            let written = write_outputs(&result, dir.path(), &f.output).unwrap();
            assert_eq!(written.len(), 2 + 6);
            listings.push(
                written
                    .iter()
                    .map(|p| {
                        (
                            p.strip_prefix(dir.path()).unwrap().to_path_buf(),
                            std::fs::read(p).unwrap(),
                        )
                    })
                    .collect::<Vec<_>>(),
            );
        }
        assert_eq!(listings[0], listings[1]);
    }

    #[test]
    fn stats() {
        let s = Stats::of(&[3.0, 1.0, 2.0, 10.0]);
        assert_eq!((s.mean, s.median, s.max), (4.0, 2.5, 10.0));
        assert_eq!(Stats::of(&[]), Stats::default());
    }
}
