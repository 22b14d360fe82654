//! The teacher side of the interaction protocol, including how it answers
//! when an exception is involved, and the feedback auditor.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComponentId, Example, ExampleId, Instance, Label, Literal};

/// How the teacher picks a feature when `x_t` or the explanation is an
/// exception. Non-exception pairs always get the component separator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExceptionStrategy {
    /// Keeps handing out the same misleading literal against a given
    /// explanation until its similar-exception budget is full, then moves to
    /// the next one. Stresses the counter logic of the learner.
    SharedFeature,
    /// Uniformly random literal among those separating the two examples and
    /// still within budget.
    RandomFresh,
    /// The exception keeps its component's feature behavior and only its
    /// label is flipped: the component separator is returned whenever one
    /// exists.
    LabelFlipOnly,
}

impl ExceptionStrategy {
    pub const ALL: [ExceptionStrategy; 3] =
        [Self::SharedFeature, Self::RandomFresh, Self::LabelFlipOnly];
}

/// Cap on `M_{x̂,φ}`: a count of distinct exceptions in the adversarial
/// setting, a probability mass in the stochastic one.
#[derive(Clone, Debug, PartialEq)]
pub enum SimilarityBudget {
    Count(usize),
    Mass { sigma: f64, weights: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub correct_label: Label,
    pub feature: Literal,
}

/// Which of the two examples shown together are exceptions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExceptionCase {
    #[default]
    None,
    Current,
    Explanation,
    Both,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Response {
    pub feedback: Option<Feedback>,
    pub case: ExceptionCase,
    /// The returned literal does not separate the two components and was
    /// charged to `M_{x̂,φ}`.
    pub charged: bool,
    /// No literal within budget existed; the charge exceeds the bound.
    pub overrun: bool,
}

/// Per-trial teacher. Never shared between trials.
pub struct Teacher<'a> {
    instance: &'a Instance,
    strategy: ExceptionStrategy,
    budget: SimilarityBudget,
    rng: ChaCha8Rng,
    pair_cache: BTreeMap<(ComponentId, ComponentId), Literal>,
    /// Answers already given for exception-involved pairs, so repeated
    /// pairs get the same literal.
    remembered: HashMap<(ExampleId, ExampleId), Literal>,
    similar: BTreeMap<(ExampleId, Literal), BTreeSet<ExampleId>>,
    similar_mass: BTreeMap<(ExampleId, Literal), f64>,
    overruns: u64,
}

impl<'a> Teacher<'a> {
    pub fn new(
        instance: &'a Instance,
        strategy: ExceptionStrategy,
        budget: SimilarityBudget,
        seed: u64,
    ) -> Self {
        Self {
            instance,
            strategy,
            budget,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pair_cache: BTreeMap::new(),
            remembered: HashMap::new(),
            similar: BTreeMap::new(),
            similar_mass: BTreeMap::new(),
            overruns: 0,
        }
    }

    /// Adversarial teacher with the instance's own `s` as the count budget.
    pub fn adversarial(instance: &'a Instance, strategy: ExceptionStrategy, seed: u64) -> Self {
        Self::new(
            instance,
            strategy,
            SimilarityBudget::Count(instance.s),
            seed,
        )
    }

    pub fn strategy(&self) -> ExceptionStrategy {
        self.strategy
    }

    pub fn label(&self, x: ExampleId) -> Label {
        self.instance.label_of(x)
    }

    /// Answers one round. `None` feedback means the prediction was correct.
    pub fn respond(
        &mut self,
        x_t: ExampleId,
        prediction: Label,
        explanation: ExampleId,
    ) -> Result<Response> {
        let inst = self.instance;
        if inst.label_of(explanation) != prediction {
            return Err(Error::Protocol {
                example: x_t,
                detail: format!(
                    "explanation {explanation} has label {} but the prediction is {prediction}",
                    inst.label_of(explanation)
                ),
            });
        }
        let correct = inst.label_of(x_t);
        let case = match (inst.is_exception(x_t), inst.is_exception(explanation)) {
            (false, false) => ExceptionCase::None,
            (true, false) => ExceptionCase::Current,
            (false, true) => ExceptionCase::Explanation,
            (true, true) => ExceptionCase::Both,
        };
        if prediction == correct {
            return Ok(Response {
                case,
                ..Response::default()
            });
        }

        if case == ExceptionCase::None {
            let pair = (inst.component_of(x_t), inst.component_of(explanation));
            let lit = inst
                .representation
                .separator(pair.0, pair.1)
                .ok_or_else(|| Error::Protocol {
                    example: x_t,
                    detail: format!("no separating literal for ({}, {})", pair.0, pair.1),
                })?;
            let cached = *self.pair_cache.entry(pair).or_insert(lit);
            debug_assert_eq!(cached, lit);
            return Ok(Response {
                feedback: Some(Feedback {
                    correct_label: correct,
                    feature: cached,
                }),
                case,
                ..Response::default()
            });
        }

        if let Some(&lit) = self.remembered.get(&(x_t, explanation)) {
            return Ok(Response {
                feedback: Some(Feedback {
                    correct_label: correct,
                    feature: lit,
                }),
                case,
                ..Response::default()
            });
        }

        let (xe, ee) = (inst.example(x_t), inst.example(explanation));
        let candidates: Vec<Literal> = xe.separating_literals(ee).collect();
        if candidates.is_empty() {
            return Err(Error::Protocol {
                example: x_t,
                detail: format!("{x_t} and {explanation} have identical features"),
            });
        }
        let legit = inst
            .component_separator(x_t, explanation)
            .filter(|l| candidates.contains(l));
        // M_{x̂,φ} is only defined for non-exception explanations
        let chargeable = case == ExceptionCase::Current;
        let within = |t: &Self, lit: Literal| {
            !chargeable || Some(lit) == legit || t.has_room(explanation, lit, x_t)
        };

        let choice = match self.strategy {
            ExceptionStrategy::LabelFlipOnly => {
                legit.or_else(|| candidates.iter().copied().find(|&l| within(self, l)))
            }
            ExceptionStrategy::SharedFeature => {
                if chargeable {
                    candidates
                        .iter()
                        .copied()
                        .filter(|&l| Some(l) != legit && within(self, l))
                        // most-charged first, then the literal true on the most
                        // exceptions, then the lowest literal
                        .max_by(|a, b| {
                            self.charge_count(explanation, *a)
                                .cmp(&self.charge_count(explanation, *b))
                                .then(self.shareable(*a).cmp(&self.shareable(*b)))
                                .then(b.cmp(a))
                        })
                        .or(legit)
                } else {
                    legit.or(Some(candidates[0]))
                }
            }
            ExceptionStrategy::RandomFresh => {
                let allowed: Vec<Literal> = candidates
                    .iter()
                    .copied()
                    .filter(|&l| within(self, l))
                    .collect();
                allowed.choose(&mut self.rng).copied()
            }
        };
        let (lit, overrun) = match choice {
            Some(l) => (l, false),
            None => {
                self.overruns += 1;
                let l = match self.strategy {
                    ExceptionStrategy::RandomFresh => {
                        *candidates.choose(&mut self.rng).expect("nonempty")
                    }
                    _ => candidates[0],
                };
                (l, true)
            }
        };
        let charged = chargeable && Some(lit) != legit;
        if charged {
            let fresh = self
                .similar
                .entry((explanation, lit))
                .or_default()
                .insert(x_t);
            if let (true, SimilarityBudget::Mass { weights, .. }) = (fresh, &self.budget) {
                *self.similar_mass.entry((explanation, lit)).or_default() += weights[x_t.0];
            }
        }
        self.remembered.insert((x_t, explanation), lit);
        Ok(Response {
            feedback: Some(Feedback {
                correct_label: correct,
                feature: lit,
            }),
            case,
            charged,
            overrun,
        })
    }

    /// Exceptions on which `lit` holds, i.e. that could later share it.
    fn shareable(&self, lit: Literal) -> usize {
        let inst = self.instance;
        inst.exceptions
            .iter()
            .filter(|&&x| inst.example(x).satisfies(lit))
            .count()
    }

    fn charge_count(&self, explanation: ExampleId, lit: Literal) -> usize {
        self.similar
            .get(&(explanation, lit))
            .map_or(0, BTreeSet::len)
    }

    fn has_room(&self, explanation: ExampleId, lit: Literal, x: ExampleId) -> bool {
        let key = (explanation, lit);
        if self.similar.get(&key).is_some_and(|s| s.contains(&x)) {
            return true;
        }
        match &self.budget {
            SimilarityBudget::Count(s) => self.charge_count(explanation, lit) < *s,
            SimilarityBudget::Mass { sigma, weights } => {
                let used = self.similar_mass.get(&key).copied().unwrap_or(0.0);
                used + weights[x.0] <= sigma + 1e-12
            }
        }
    }

    /// Largest number of distinct exceptions charged to any `(x̂, φ)`.
    pub fn max_similar(&self) -> usize {
        self.similar.values().map(BTreeSet::len).max().unwrap_or(0)
    }

    pub fn similar_counts(&self) -> &BTreeMap<(ExampleId, Literal), BTreeSet<ExampleId>> {
        &self.similar
    }

    /// Times the teacher had to exceed its similar-exception budget.
    pub fn overruns(&self) -> u64 {
        self.overruns
    }

    /// Mass charged to each `(x̂, φ)` under a mass budget.
    pub fn similar_mass(&self) -> &BTreeMap<(ExampleId, Literal), f64> {
        &self.similar_mass
    }

    pub fn pair_cache(&self) -> &BTreeMap<(ComponentId, ComponentId), Literal> {
        &self.pair_cache
    }
}

/// Feedback that the learner can recognize as inconsistent on receipt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inconsistency {
    /// The feature is not true on `x_t` and false on the explanation.
    NonSeparating,
    /// The same example was given two different correct labels.
    ContradictoryLabel,
}

/// Tracks the labels implied by each round so contradictions are caught.
#[derive(Clone, Debug, Default)]
pub struct FeedbackAuditor {
    labels: HashMap<ExampleId, Label>,
}

impl FeedbackAuditor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a label learned outside a prediction round (the first example).
    pub fn record(&mut self, x: ExampleId, label: Label) -> Option<Inconsistency> {
        match self.labels.insert(x, label) {
            Some(prev) if prev != label => {
                self.labels.insert(x, prev);
                Some(Inconsistency::ContradictoryLabel)
            }
            _ => None,
        }
    }

    /// Audits one round. A correct prediction implies `x_t` has the predicted
    /// label; flagged rounds leave the auditor's memory untouched.
    pub fn audit(
        &mut self,
        x_t: &Example,
        prediction: Label,
        explanation: &Example,
        feedback: Option<&Feedback>,
    ) -> Option<Inconsistency> {
        let implied = match feedback {
            Some(fb) => {
                if !x_t.satisfies(fb.feature) || explanation.satisfies(fb.feature) {
                    return Some(Inconsistency::NonSeparating);
                }
                if fb.correct_label == prediction {
                    return Some(Inconsistency::ContradictoryLabel);
                }
                fb.correct_label
            }
            None => prediction,
        };
        if self
            .labels
            .get(&x_t.id)
            .is_some_and(|&prev| prev != implied)
        {
            return Some(Inconsistency::ContradictoryLabel);
        }
        self.labels.insert(x_t.id, implied);
        None
    }
}
