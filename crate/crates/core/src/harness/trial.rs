//! One run of the protocol: teacher, learner and auditors in lockstep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, LearnerState, RobustDff, RuleId, StateDelta};
use crate::model::{ExampleId, Instance, Label};
use crate::stochastic::{StroDff, StroParams};
use crate::teacher::{
    ExceptionCase, ExceptionStrategy, FeedbackAuditor, Inconsistency, SimilarityBudget, Teacher,
};

use super::bounds::{verify_bounds, BoundCheck, BoundParams};
use super::invariants::{Check, InvariantChecker, InvariantResult, Setting};

/// One protocol round. Round 0 hands the first example and its label to the
/// learner; its `matched` field is `"init"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub t: u64,
    pub example: ExampleId,
    /// `"default"`, a rule id such as `"r2"`, or `"init"`.
    pub matched: String,
    pub predicted: Label,
    pub explanation: ExampleId,
    pub correct: bool,
    pub feedback: Option<FeedbackRecord>,
    pub case: ExceptionCase,
    pub delta: String,
    pub audit: Option<Inconsistency>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub label: Label,
    pub feature: usize,
    pub polarity: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMistakes {
    pub rule: RuleId,
    pub representative: ExampleId,
    pub exception: bool,
    pub mistakes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub round: u64,
    pub mistakes: u64,
}

/// Ground-truth probability mass matched by no earlier rule when a rule was
/// created. A diagnostic only; learners never see it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreationMass {
    pub round: u64,
    pub rule: RuleId,
    pub outside: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub params: BoundParams,
    /// Prediction rounds, not counting round 0.
    pub rounds: u64,
    pub mistakes: u64,
    pub rules_created: u64,
    pub rules_deleted: u64,
    pub rule_mistakes: Vec<RuleMistakes>,
    pub invariants: BTreeMap<Check, InvariantResult>,
    pub bounds: Vec<BoundCheck>,
    /// Rounds whose feedback the auditor rejected.
    pub flagged: u64,
    /// Times the teacher could not stay within its similar-exception budget.
    pub teacher_overruns: u64,
    pub max_similar: usize,
    pub mistake_curve: Vec<CurvePoint>,
    pub creation_mass: Vec<CreationMass>,
}

impl Default for TrialReport {
    fn default() -> Self {
        Self {
            params: BoundParams::Adversarial { m: 1, k: 0, s: 0 },
            rounds: 0,
            mistakes: 0,
            rules_created: 0,
            rules_deleted: 0,
            rule_mistakes: Vec::new(),
            invariants: BTreeMap::new(),
            bounds: Vec::new(),
            flagged: 0,
            teacher_overruns: 0,
            max_similar: 0,
            mistake_curve: Vec::new(),
            creation_mass: Vec::new(),
        }
    }
}

impl TrialReport {
    pub fn invariant_violations(&self) -> u64 {
        self.invariants.values().map(|r| r.violations).sum()
    }

    pub fn bound(&self, name: &str) -> Option<&BoundCheck> {
        self.bounds.iter().find(|b| b.name == name)
    }

    pub fn bounds_pass(&self) -> bool {
        self.bounds.iter().all(|b| b.pass)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearnerSpec {
    Robust { m: usize, k: usize, s: usize },
    Stochastic(StroParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialSpec {
    pub learner: LearnerSpec,
    pub strategy: ExceptionStrategy,
    pub budget: SimilarityBudget,
    pub teacher_seed: u64,
    /// Example probabilities, needed for the outside-mass diagnostic.
    pub weights: Option<Vec<f64>>,
    /// Rounds at which the running mistake count is sampled.
    pub checkpoints: Vec<u64>,
    pub record_transcript: bool,
}

impl TrialSpec {
    /// Adversarial run with the instance's own `k`, `s` and count budget.
    pub fn adversarial(
        instance: &Instance,
        strategy: ExceptionStrategy,
        teacher_seed: u64,
    ) -> Self {
        Self {
            learner: LearnerSpec::Robust {
                m: instance.m(),
                k: instance.k,
                s: instance.s,
            },
            strategy,
            budget: SimilarityBudget::Count(instance.s),
            teacher_seed,
            weights: None,
            checkpoints: Vec::new(),
            record_transcript: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub transcript: Vec<TranscriptRow>,
    pub report: TrialReport,
}

fn mass_outside(instance: &Instance, weights: &[f64], state: &LearnerState, skip: RuleId) -> f64 {
    instance
        .examples
        .iter()
        .filter(|x| !state.rules.iter().any(|r| r.id != skip && r.matches(x)))
        .map(|x| weights[x.id.0])
        .sum()
}

/// Runs the protocol over `stream`. The first element is the learner's
/// default example. Invariant violations are recorded in the report, not
/// returned as errors.
pub fn run_trial(instance: &Instance, stream: &[ExampleId], spec: &TrialSpec) -> Result<Trial> {
    let Some(&first) = stream.first() else {
        return Err(Error::Config("empty stream".into()));
    };
    if let Some(&x) = stream.iter().find(|x| x.0 >= instance.num_examples()) {
        return Err(Error::InvalidInstance(format!(
            "stream refers to unknown example {x}"
        )));
    }
    let x0 = instance.example(first).clone();
    let y0 = instance.label_of(first);
    let (mut learner, setting, params): (Box<dyn Learner>, Setting, BoundParams) =
        match spec.learner {
            LearnerSpec::Robust { m, k, s } => (
                Box::new(RobustDff::new(m, k, s, x0, y0)),
                Setting::Adversarial { m, k, s },
                BoundParams::Adversarial { m, k, s },
            ),
            LearnerSpec::Stochastic(p) => (
                Box::new(StroDff::new(p, x0, y0)?),
                Setting::Stochastic { epsilon: p.epsilon },
                BoundParams::Stochastic {
                    m: p.m,
                    epsilon: p.epsilon,
                    sigma: p.sigma,
                    delta: p.delta,
                },
            ),
        };
    let mut teacher = Teacher::new(
        instance,
        spec.strategy,
        spec.budget.clone(),
        spec.teacher_seed,
    );
    let mut auditor = FeedbackAuditor::new();
    auditor.record(first, y0);
    let mut checker = InvariantChecker::new(instance, setting);

    let mut transcript = Vec::new();
    if spec.record_transcript {
        transcript.reserve(stream.len());
        transcript.push(TranscriptRow {
            t: 0,
            example: first,
            matched: "init".into(),
            predicted: y0,
            explanation: first,
            correct: true,
            feedback: None,
            case: ExceptionCase::default(),
            delta: "none".into(),
            audit: None,
        });
    }
    let mut report = TrialReport {
        params,
        ..TrialReport::default()
    };
    let mut representatives = BTreeMap::new();
    let mut checkpoints = spec.checkpoints.clone();
    checkpoints.sort_unstable();
    let mut next_checkpoint = checkpoints.into_iter().peekable();

    for (t, &x) in stream.iter().enumerate().skip(1) {
        let t = t as u64;
        let xe = instance.example(x);
        let outcome = learner.predict(xe);
        let response = teacher.respond(x, outcome.predicted, outcome.explanation)?;
        let feedback = response.feedback;
        let explanation = instance.example(outcome.explanation);
        let audit = auditor.audit(xe, outcome.predicted, explanation, feedback.as_ref());
        let correct = feedback.is_none();
        if !correct {
            report.mistakes += 1;
            if let (Some(rule), None) = (outcome.matched, audit) {
                checker.record_rule_mistake(rule);
            }
        }

        let delta = match audit {
            Some(_) => {
                report.flagged += 1;
                StateDelta::None
            }
            None => learner.observe(xe, &outcome, feedback.as_ref(), t)?,
        };
        if let StateDelta::Create {
            rule,
            representative,
        } = delta
        {
            representatives.insert(rule, representative);
        }
        if !matches!(delta, StateDelta::None | StateDelta::Gated) {
            let outside = match (&delta, &spec.weights) {
                (StateDelta::Create { rule, .. }, Some(w)) => {
                    let outside = mass_outside(instance, w, learner.state(), *rule);
                    report.creation_mass.push(CreationMass {
                        round: t,
                        rule: *rule,
                        outside,
                    });
                    Some(outside)
                }
                _ => None,
            };
            checker.after_round(t, learner.state(), &delta, outside);
        }

        if spec.record_transcript {
            transcript.push(TranscriptRow {
                t,
                example: x,
                matched: outcome
                    .matched
                    .map_or_else(|| "default".to_string(), |r| r.to_string()),
                predicted: outcome.predicted,
                explanation: outcome.explanation,
                correct,
                feedback: feedback.map(|f| FeedbackRecord {
                    label: f.correct_label,
                    feature: f.feature.feature.0,
                    polarity: f.feature.polarity,
                }),
                case: response.case,
                delta: delta.tag().into(),
                audit,
            });
        }
        while next_checkpoint.next_if(|&c| c <= t).is_some() {
            report.mistake_curve.push(CurvePoint {
                round: t,
                mistakes: report.mistakes,
            });
        }
    }

    let state = learner.state();
    report.rounds = stream.len() as u64 - 1;
    report.rules_created = state.rules_ever_created;
    report.rules_deleted = state.rules_deleted;
    report.teacher_overruns = teacher.overruns();
    report.max_similar = teacher.max_similar();
    report.rule_mistakes = checker
        .rule_mistakes()
        .iter()
        .map(|(&rule, &mistakes)| {
            let representative = representatives[&rule];
            RuleMistakes {
                rule,
                representative,
                exception: instance.is_exception(representative),
                mistakes,
            }
        })
        .collect();
    report.invariants = checker.into_results();
    report.bounds = verify_bounds(&report);
    Ok(Trial { transcript, report })
}
