//! Rule-list learner for the adversarial setting and the shared mistake
//! handler used by both learners.
//!
//! A rule is a conjunction of negated feedback literals anchored at a
//! representative example. Each rule keeps sparse counters of how often each
//! literal was returned against its representative; a literal is added to the
//! conjunction once its counter exceeds the similar-exception threshold, and
//! the rule is dropped when it grows to `m` literals or when the counters
//! outside the `m - 1 - |C|` largest add up to more than the exception
//! threshold. With `k = s = 0` this is the perfect-annotation learner.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Example, ExampleId, Label, Literal};
use crate::teacher::Feedback;

/// Rules are numbered in creation order, starting at 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub u64);

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub id: RuleId,
    pub representative: Example,
    pub conjunction: Vec<Literal>,
    pub label: Label,
    /// Absent literals count as zero.
    pub fcount: BTreeMap<Literal, u64>,
    pub created_at: u64,
    pub mistake_count: u64,
}

impl Rule {
    pub fn matches(&self, x: &Example) -> bool {
        x.satisfies_all(&self.conjunction)
    }

    pub fn counter(&self, lit: Literal) -> u64 {
        self.fcount.get(&lit).copied().unwrap_or(0)
    }

    /// Sum of all counters except the `b` largest.
    pub fn residual_count(&self, b: usize) -> u64 {
        let mut values: Vec<u64> = self.fcount.values().copied().collect();
        values.sort_unstable_by(|a, b| b.cmp(a));
        values.iter().skip(b).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub predicted: Label,
    pub explanation: ExampleId,
    /// `None` when the default `(x0, y0)` was used.
    pub matched: Option<RuleId>,
}

/// What a round did to the learner state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateDelta {
    None,
    /// Unmatched mistake that did not pass the rule-creation gate.
    Gated,
    CounterIncrement {
        rule: RuleId,
        literal: Literal,
    },
    Refine {
        rule: RuleId,
        added: Literal,
    },
    /// `refined` is set when the deletion followed a refinement that hit `m` literals.
    Delete {
        rule: RuleId,
        representative: ExampleId,
        refined: Option<Literal>,
    },
    Create {
        rule: RuleId,
        representative: ExampleId,
    },
}

impl StateDelta {
    /// Transcript tag: one of `none`, `counter-inc`, `refine`, `delete`, `create`.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::None | Self::Gated => "none",
            Self::CounterIncrement { .. } => "counter-inc",
            Self::Refine { .. } => "refine",
            Self::Delete { .. } => "delete",
            Self::Create { .. } => "create",
        }
    }
}

/// Thresholds passed to the mistake handler. Real-valued so the stochastic
/// learner can reuse it; comparisons are strict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MistakeThresholds {
    /// Exception threshold for the deletion gate.
    pub n_k: f64,
    /// Similar-exception threshold for the refinement gate.
    pub n_s: f64,
}

/// Rule list plus the default prediction, shared by both learners.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LearnerState {
    pub default: (Example, Label),
    /// Live rules in creation order.
    pub rules: Vec<Rule>,
    /// Maximum number of components.
    pub m: usize,
    pub rules_ever_created: u64,
    pub rules_deleted: u64,
}

impl LearnerState {
    pub fn new(m: usize, x0: Example, y0: Label) -> Self {
        assert!(m >= 1, "at least one component is required");
        Self {
            default: (x0, y0),
            rules: Vec::new(),
            m,
            rules_ever_created: 0,
            rules_deleted: 0,
        }
    }

    /// First live rule (in creation order) satisfied by `x`, else the default.
    pub fn predict(&self, x: &Example) -> PredictionOutcome {
        match self.rules.iter().find(|r| r.matches(x)) {
            Some(r) => PredictionOutcome {
                predicted: r.label,
                explanation: r.representative.id,
                matched: Some(r.id),
            },
            None => PredictionOutcome {
                predicted: self.default.1,
                explanation: self.default.0.id,
                matched: None,
            },
        }
    }

    pub fn rule(&self, id: RuleId) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    fn rule_index(&self, id: RuleId) -> Option<usize> {
        self.rules.iter().position(|r| r.id == id)
    }

    pub fn explanation_example(&self, outcome: &PredictionOutcome) -> Option<&Example> {
        match outcome.matched {
            Some(id) => self.rule(id).map(|r| &r.representative),
            None => Some(&self.default.0),
        }
    }

    /// Adds an empty conjunction anchored at `x` with fresh counters.
    pub fn create_rule(&mut self, x: &Example, label: Label, t: u64) -> RuleId {
        let id = RuleId(self.rules_ever_created);
        self.rules_ever_created += 1;
        self.rules.push(Rule {
            id,
            representative: x.clone(),
            conjunction: Vec::new(),
            label,
            fcount: BTreeMap::new(),
            created_at: t,
            mistake_count: 0,
        });
        id
    }

    /// The mistake handler: count `φ` against the rule, refine by `¬φ` once
    /// its counter exceeds `n_s`, and delete the rule when it reaches `m`
    /// literals or when the counters outside the `m - 1 - |C|` largest sum to
    /// more than `n_k`.
    pub fn handle_mistake(
        &mut self,
        id: RuleId,
        phi: Literal,
        th: MistakeThresholds,
    ) -> StateDelta {
        let idx = self.rule_index(id).expect("handle_mistake on a live rule");
        let m = self.m;
        let rule = &mut self.rules[idx];
        let count = rule.fcount.entry(phi).or_insert(0);
        *count += 1;

        if *count as f64 > th.n_s {
            let added = phi.negate();
            debug_assert!(!rule.conjunction.contains(&added));
            rule.conjunction.push(added);
            rule.fcount.remove(&phi);
            if rule.conjunction.len() >= m {
                let representative = rule.representative.id;
                self.remove(idx);
                return StateDelta::Delete {
                    rule: id,
                    representative,
                    refined: Some(added),
                };
            }
            return StateDelta::Refine { rule: id, added };
        }

        let b = (m - 1).saturating_sub(rule.conjunction.len());
        if rule.residual_count(b) as f64 > th.n_k {
            let representative = rule.representative.id;
            self.remove(idx);
            return StateDelta::Delete {
                rule: id,
                representative,
                refined: None,
            };
        }
        StateDelta::CounterIncrement {
            rule: id,
            literal: phi,
        }
    }

    fn remove(&mut self, idx: usize) {
        self.rules.remove(idx);
        self.rules_deleted += 1;
    }

    /// Checks that feedback is well formed for this outcome before any state
    /// is touched.
    pub fn check_feedback(
        &self,
        x_t: &Example,
        outcome: &PredictionOutcome,
        feedback: &Feedback,
    ) -> Result<()> {
        let protocol = |detail: String| Error::Protocol {
            example: x_t.id,
            detail,
        };
        if feedback.correct_label == outcome.predicted {
            return Err(protocol(format!(
                "feedback label {} equals the prediction",
                feedback.correct_label
            )));
        }
        let explanation = self
            .explanation_example(outcome)
            .ok_or_else(|| protocol("outcome refers to a rule that no longer exists".into()))?;
        if !x_t.satisfies(feedback.feature) || explanation.satisfies(feedback.feature) {
            return Err(protocol(format!(
                "{} does not separate {} from {}",
                feedback.feature, x_t.id, explanation.id
            )));
        }
        Ok(())
    }

    /// Largest counter value over all live rules.
    pub fn max_counter(&self) -> u64 {
        self.rules
            .iter()
            .flat_map(|r| r.fcount.values().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Common surface the harness drives.
pub trait Learner {
    fn predict(&self, x: &Example) -> PredictionOutcome;

    /// Applies the round's feedback. `feedback` must be present exactly when
    /// the prediction was wrong. On error the state is unchanged.
    fn observe(
        &mut self,
        x_t: &Example,
        outcome: &PredictionOutcome,
        feedback: Option<&Feedback>,
        t: u64,
    ) -> Result<StateDelta>;

    fn state(&self) -> &LearnerState;
}

/// The adversarial-setting learner with fixed budgets `k` and `s`.
#[derive(Clone, Debug)]
pub struct RobustDff {
    state: LearnerState,
    k: usize,
    s: usize,
}

impl RobustDff {
    pub fn new(m: usize, k: usize, s: usize, x0: Example, y0: Label) -> Self {
        Self {
            state: LearnerState::new(m, x0, y0),
            k,
            s,
        }
    }

    /// The perfect-annotation learner (`k = s = 0`).
    pub fn perfect(m: usize, x0: Example, y0: Label) -> Self {
        Self::new(m, 0, 0, x0, y0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Per-rule mistake cap `(s+1)(m-1) + k + 1`.
    pub fn per_rule_mistake_bound(&self) -> u64 {
        per_rule_mistake_bound(self.state.m, self.k, self.s)
    }
}

pub fn per_rule_mistake_bound(m: usize, k: usize, s: usize) -> u64 {
    ((s + 1) * (m - 1) + k + 1) as u64
}

/// Total mistake cap `(m+k)((s+1)(m-1) + k + 2)`.
pub fn total_mistake_bound(m: usize, k: usize, s: usize) -> u64 {
    ((m + k) * ((s + 1) * (m - 1) + k + 2)) as u64
}

impl Learner for RobustDff {
    fn predict(&self, x: &Example) -> PredictionOutcome {
        self.state.predict(x)
    }

    fn observe(
        &mut self,
        x_t: &Example,
        outcome: &PredictionOutcome,
        feedback: Option<&Feedback>,
        t: u64,
    ) -> Result<StateDelta> {
        let Some(fb) = feedback else {
            return Ok(StateDelta::None);
        };
        self.state.check_feedback(x_t, outcome, fb)?;
        match outcome.matched {
            Some(id) => {
                let idx = self.state.rule_index(id).expect("checked above");
                self.state.rules[idx].mistake_count += 1;
                let th = MistakeThresholds {
                    n_k: self.k as f64,
                    n_s: self.s as f64,
                };
                Ok(self.state.handle_mistake(id, fb.feature, th))
            }
            None => {
                // the feature is recorded in the transcript but unused here
                let rule = self.state.create_rule(x_t, fb.correct_label, t);
                Ok(StateDelta::Create {
                    rule,
                    representative: x_t.id,
                })
            }
        }
    }

    fn state(&self) -> &LearnerState {
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: usize, s: &str) -> Example {
        Example::from_bit_str(id, s).unwrap()
    }

    fn rule_with_counters(m: usize, counters: &[(Literal, u64)]) -> LearnerState {
        let mut st = LearnerState::new(m, ex(0, "000"), Label(0));
        let id = st.create_rule(&ex(1, "111"), Label(1), 1);
        st.rules[0].fcount = counters.iter().copied().collect();
        assert_eq!(id, RuleId(0));
        st
    }

    #[test]
    fn empty_list_predicts_default() {
        let st = LearnerState::new(3, ex(0, "01"), Label(2));
        let out = st.predict(&ex(5, "11"));
        assert_eq!(out.predicted, Label(2));
        assert_eq!(out.explanation, ExampleId(0));
        assert_eq!(out.matched, None);
    }

    #[test]
    fn empty_conjunction_matches_everything() {
        let mut st = LearnerState::new(3, ex(0, "01"), Label(2));
        st.create_rule(&ex(1, "10"), Label(1), 1);
        for s in ["00", "01", "10", "11"] {
            assert_eq!(st.predict(&ex(9, s)).matched, Some(RuleId(0)));
        }
    }

    #[test]
    fn earliest_rule_wins() {
        let mut st = LearnerState::new(3, ex(0, "00"), Label(0));
        st.create_rule(&ex(1, "10"), Label(1), 1);
        st.create_rule(&ex(2, "11"), Label(2), 2);
        st.rules[0].conjunction.push(Literal::positive(0));
        st.rules[1].conjunction.push(Literal::positive(1));
        let x = ex(3, "11");
        assert!(st.rules[0].matches(&x) && st.rules[1].matches(&x));
        assert_eq!(st.predict(&x).matched, Some(RuleId(0)));
        assert_eq!(st.predict(&x).predicted, Label(1));
    }

    #[test]
    fn zero_similarity_threshold_refines_immediately() {
        let mut st = rule_with_counters(3, &[]);
        let phi = Literal::positive(2);
        let d = st.handle_mistake(RuleId(0), phi, MistakeThresholds { n_k: 0.0, n_s: 0.0 });
        assert_eq!(
            d,
            StateDelta::Refine {
                rule: RuleId(0),
                added: phi.negate()
            }
        );
        assert_eq!(st.rules[0].conjunction, vec![phi.negate()]);
        assert_eq!(st.rules[0].counter(phi), 0);
    }

    #[test]
    fn residual_counters_trigger_deletion() {
        // m = 2, |C| = 0 so b = 1; k = 1, counters reach {a:1, b:1, c:1}
        let (a, b, c) = (
            Literal::positive(0),
            Literal::positive(1),
            Literal::positive(2),
        );
        let mut st = rule_with_counters(2, &[]);
        let th = MistakeThresholds { n_k: 1.0, n_s: 1.0 };
        assert!(matches!(
            st.handle_mistake(RuleId(0), a, th),
            StateDelta::CounterIncrement { .. }
        ));
        assert!(matches!(
            st.handle_mistake(RuleId(0), b, th),
            StateDelta::CounterIncrement { .. }
        ));
        let d = st.handle_mistake(RuleId(0), c, th);
        assert_eq!(
            d,
            StateDelta::Delete {
                rule: RuleId(0),
                representative: ExampleId(1),
                refined: None
            }
        );
        assert!(st.rules.is_empty());
        assert_eq!(st.rules_deleted, 1);
    }

    #[test]
    fn single_component_refinement_deletes() {
        let mut st = rule_with_counters(1, &[]);
        let d = st.handle_mistake(
            RuleId(0),
            Literal::positive(0),
            MistakeThresholds { n_k: 5.0, n_s: 0.0 },
        );
        assert!(matches!(
            d,
            StateDelta::Delete {
                refined: Some(_),
                ..
            }
        ));
        assert!(st.rules.is_empty());
    }

    #[test]
    fn residual_edge_cases() {
        let st = rule_with_counters(4, &[(Literal::positive(0), 3), (Literal::positive(1), 1)]);
        let r = &st.rules[0];
        // fewer nonzero counters than b
        assert_eq!(r.residual_count(3), 0);
        // b = 0 sums everything
        assert_eq!(r.residual_count(0), 4);
        assert_eq!(r.residual_count(1), 1);
    }

    #[test]
    fn bound_formulas() {
        assert_eq!(total_mistake_bound(1, 0, 0), 2);
        assert_eq!(total_mistake_bound(2, 0, 0), 6);
        assert_eq!(total_mistake_bound(3, 2, 1), 40);
        assert_eq!(per_rule_mistake_bound(3, 2, 1), 7);
    }

    #[test]
    fn correct_prediction_leaves_state_alone() {
        let mut l = RobustDff::perfect(2, ex(0, "1"), Label(0));
        let x = ex(1, "1");
        let out = l.predict(&x);
        let before = l.state().clone();
        assert_eq!(l.observe(&x, &out, None, 1).unwrap(), StateDelta::None);
        assert_eq!(l.state(), &before);
    }

    #[test]
    fn malformed_feedback_is_rejected_without_change() {
        let mut l = RobustDff::perfect(2, ex(0, "1"), Label(0));
        let x = ex(2, "0");
        let out = l.predict(&x);
        let before = l.state().clone();
        let bad = Feedback {
            correct_label: Label(1),
            feature: Literal::positive(0),
        };
        assert!(l.observe(&x, &out, Some(&bad), 1).is_err());
        assert_eq!(l.state(), &before);
    }
}
