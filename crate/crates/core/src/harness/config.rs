//! Experiment configuration files.
//!
//! A file holds either one experiment at the top level or a list under
//! `experiments`, plus shared `sweep` and `output` sections:
//!
//! ```json
//! {
//!   "experiments": [{
//!     "id": "robust",
//!     "instance": {"kind": "random", "m": {"min": 2, "max": 8}, "d": {"min": 4, "max": 40},
//!                  "k": {"min": 0, "max": 5}, "s": {"min": 1, "max": 5}, "perComponent": 4},
//!     "teacher": {"strategies": ["shared-feature", "random-fresh", "label-flip-only"]},
//!     "learner": {"kind": "robust"},
//!     "stream": {"mode": "adversarial", "passes": 3, "placement": "uniform"}
//!   }],
//!   "sweep": {"seeds": {"start": 0, "count": 100}, "parallelism": 4},
//!   "output": {"dir": "out", "formats": ["csv", "json", "jsonl"]}
//! }
//! ```

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::{DeletionClock, LogBase};
use crate::streams::Placement;
use crate::teacher::ExceptionStrategy;

/// A fixed integer or an inclusive range sampled uniformly per trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntParam {
    Fixed(usize),
    Range { min: usize, max: usize },
}

impl IntParam {
    pub fn min(&self) -> usize {
        match *self {
            Self::Fixed(v) => v,
            Self::Range { min, .. } => min,
        }
    }

    pub fn max(&self) -> usize {
        match *self {
            Self::Fixed(v) => v,
            Self::Range { max, .. } => max,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<usize> {
        match *self {
            Self::Fixed(v) => Ok(v),
            Self::Range { min, max } if min <= max => Ok(rng.gen_range(min..=max)),
            Self::Range { min, max } => Err(Error::Config(format!("empty range {min}..={max}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum InstanceConfig {
    /// Random instance. `labels` defaults to `m`; `s` is capped at the
    /// sampled `k`; the low end of `d` is raised to the smallest workable
    /// value for the sampled `m`, labels and component size.
    Random {
        m: IntParam,
        d: IntParam,
        #[serde(default)]
        labels: Option<IntParam>,
        k: IntParam,
        s: IntParam,
        per_component: IntParam,
    },
    /// The hidden-pair family; pairs with the `lower-bound` stream.
    LowerBound { m: usize },
    /// An instance file, resolved relative to the working directory.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TeacherConfig {
    /// One strategy is drawn per trial.
    #[serde(default = "all_strategies")]
    pub strategies: Vec<ExceptionStrategy>,
}

fn all_strategies() -> Vec<ExceptionStrategy> {
    ExceptionStrategy::ALL.to_vec()
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            strategies: all_strategies(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum LearnerConfig {
    /// Fixed budgets taken from the instance's `k` and `s`.
    Robust,
    /// The robust learner with `k = s = 0`.
    Baseline,
    Stochastic {
        epsilon: f64,
        sigma: f64,
        delta: f64,
        #[serde(default)]
        clock: DeletionClock,
        #[serde(default)]
        log_base: LogBase,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "mode",
    rename_all = "kebab-case",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum StreamConfig {
    Adversarial {
        #[serde(default = "default_passes")]
        passes: usize,
        #[serde(default)]
        placement: Placement,
    },
    Stochastic {
        length: usize,
        /// Total exception mass; defaults to the learner's `epsilon`.
        #[serde(default)]
        exception_mass: Option<f64>,
        #[serde(default)]
        checkpoints: Vec<u64>,
    },
    LowerBound,
}

fn default_passes() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub id: Option<String>,
    pub instance: InstanceConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
    pub learner: LearnerConfig,
    pub stream: StreamConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self::List(vec![0])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub seeds: Seeds,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub parallelism: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// `metrics.csv`, one row per trial.
    Csv,
    /// `report.json`, the aggregate report.
    Json,
    /// `transcripts/<experiment>-<seed>.jsonl`, one row per round.
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

/// A parsed configuration file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepFile {
    pub experiments: Vec<Experiment>,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl SweepFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        let sweep = match obj.remove("sweep") {
            Some(v) => serde_json::from_value(v)?,
            None => SweepConfig::default(),
        };
        let output = match obj.remove("output") {
            Some(v) => serde_json::from_value(v)?,
            None => OutputConfig::default(),
        };
        let experiments: Vec<Experiment> = match obj.remove("experiments") {
            Some(v) => {
                if !obj.is_empty() {
                    let keys: Vec<&String> = obj.keys().collect();
                    return Err(Error::Config(format!(
                        "unexpected top-level keys next to experiments: {keys:?}"
                    )));
                }
                serde_json::from_value(v)?
            }
            None => vec![serde_json::from_value(value)?],
        };
        let file = Self {
            experiments,
            sweep,
            output,
        };
        file.check()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Experiment ids, with `experiment-<i>` for unnamed entries.
    pub fn ids(&self) -> Vec<String> {
        self.experiments
            .iter()
            .enumerate()
            .map(|(i, e)| e.id.clone().unwrap_or_else(|| format!("experiment-{i}")))
            .collect()
    }

    /// Consistency checks run by `from_json`; rerun after editing a parsed file.
    pub fn check(&self) -> Result<()> {
        if self.experiments.is_empty() {
            return Err(Error::Config("no experiments".into()));
        }
        let ids = self.ids();
        let mut unique = ids.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != ids.len() {
            return Err(Error::Config("experiment ids must be unique".into()));
        }
        for (id, e) in ids.iter().zip(&self.experiments) {
            let lb_instance = matches!(e.instance, InstanceConfig::LowerBound { .. });
            let lb_stream = matches!(e.stream, StreamConfig::LowerBound);
            if lb_instance != lb_stream {
                return Err(Error::Config(format!(
                    "{id}: the lower-bound instance and stream must be used together"
                )));
            }
            if matches!(e.stream, StreamConfig::Stochastic { .. })
                != matches!(e.learner, LearnerConfig::Stochastic { .. })
            {
                return Err(Error::Config(format!(
                    "{id}: the stochastic learner runs on stochastic streams only"
                )));
            }
            if e.teacher.strategies.is_empty() {
                return Err(Error::Config(format!("{id}: no teacher strategies")));
            }
        }
        if self.sweep.parallelism == Some(0) {
            return Err(Error::Config("parallelism must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_example_parses() {
        let text = r#"{
          "experiments": [{
            "id": "robust",
            "instance": {"kind": "random", "m": {"min": 2, "max": 8}, "d": {"min": 4, "max": 40},
                         "k": {"min": 0, "max": 5}, "s": {"min": 1, "max": 5}, "perComponent": 4},
            "teacher": {"strategies": ["shared-feature", "random-fresh", "label-flip-only"]},
            "learner": {"kind": "robust"},
            "stream": {"mode": "adversarial", "passes": 3, "placement": "uniform"}
          }],
          "sweep": {"seeds": {"start": 0, "count": 100}, "parallelism": 4},
          "output": {"dir": "out", "formats": ["csv", "json", "jsonl"]}
        }"#;
        let f = SweepFile::from_json(text).unwrap();
        assert_eq!(f.ids(), ["robust"]);
        assert_eq!(f.sweep.seeds.expand().len(), 100);
        assert!(f.output.wants(OutputFormat::Jsonl));
        assert_eq!(
            f.experiments[0].instance,
            InstanceConfig::Random {
                m: IntParam::Range { min: 2, max: 8 },
                d: IntParam::Range { min: 4, max: 40 },
                labels: None,
                k: IntParam::Range { min: 0, max: 5 },
                s: IntParam::Range { min: 1, max: 5 },
                per_component: IntParam::Fixed(4),
            }
        );
    }

    #[test]
    fn single_experiment_at_top_level() {
        let text = r#"{
          "instance": {"kind": "lower-bound", "m": 4},
          "learner": {"kind": "baseline"},
          "stream": {"mode": "lower-bound"},
          "sweep": {"seeds": [1, 2, 3]}
        }"#;
        let f = SweepFile::from_json(text).unwrap();
        assert_eq!(f.ids(), ["experiment-0"]);
        assert_eq!(f.sweep.seeds.expand(), [1, 2, 3]);
        assert_eq!(f.experiments[0].teacher.strategies, ExceptionStrategy::ALL);
    }

    #[test]
    fn stochastic_learner_fields() {
        let text = r#"{
          "instance": {"kind": "random", "m": 3, "d": 12, "k": 2, "s": 2, "perComponent": 10},
          "learner": {"kind": "stochastic", "epsilon": 0.01, "sigma": 0.01, "delta": 0.05, "clock": "first-seen"},
          "stream": {"mode": "stochastic", "length": 1000, "checkpoints": [100]}
        }"#;
        let f = SweepFile::from_json(text).unwrap();
        match &f.experiments[0].learner {
            LearnerConfig::Stochastic {
                clock, log_base, ..
            } => {
                assert_eq!(*clock, DeletionClock::FirstSeen);
                assert_eq!(*log_base, LogBase::Natural);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_files() {
        let lb_mismatch = r#"{"instance": {"kind": "lower-bound", "m": 4}, "learner": {"kind": "robust"},
                              "stream": {"mode": "adversarial"}}"#;
        assert!(SweepFile::from_json(lb_mismatch).is_err());
        let typo = r#"{"instance": {"kind": "lower-bound", "m": 4}, "learner": {"kind": "robust"},
                       "stream": {"mode": "lower-bound"}, "swep": {}}"#;
        assert!(SweepFile::from_json(typo).is_err());
        let stochastic_mismatch = r#"{"instance": {"kind": "random", "m": 3, "d": 12, "k": 0, "s": 0, "perComponent": 4},
            "learner": {"kind": "robust"}, "stream": {"mode": "stochastic", "length": 10}}"#;
        assert!(SweepFile::from_json(stochastic_mismatch).is_err());
        assert!(SweepFile::from_json("[]").is_err());
    }

    #[test]
    fn int_param_sampling() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(IntParam::Fixed(3).sample(&mut rng).unwrap(), 3);
        for _ in 0..50 {
            let v = IntParam::Range { min: 2, max: 4 }.sample(&mut rng).unwrap();
            assert!((2..=4).contains(&v));
        }
        assert!(IntParam::Range { min: 5, max: 4 }.sample(&mut rng).is_err());
    }
}
