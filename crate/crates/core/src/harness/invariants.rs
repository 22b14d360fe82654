//! Ground-truth audits of the learner state, run after every round that
//! changes it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::learner::{per_rule_mistake_bound, LearnerState, Rule, RuleId, StateDelta};
use crate::model::{ComponentId, ExampleId, Instance, Literal};

/// Invariant identifiers. The first six apply to the adversarial learner,
/// the last four to the stochastic one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Rules with a clean representative cover its component, and each
    /// negated literal is backed by a separating component.
    Lemma1,
    /// No two clean representatives share a component.
    Lemma2,
    /// Only rules with an exception as representative are deleted.
    Lemma3,
    /// At most `m + k` rules are ever created.
    Lemma4,
    /// Matched mistakes per rule stay within `(s+1)(m-1) + k + 1`.
    Lemma5,
    /// Every counter is at most `s` between rounds.
    CounterCap,
    Lemma6,
    Lemma7,
    Lemma8,
    /// Mass outside the rule list is at least `2ε` when a rule is created.
    Lemma9,
}

impl Check {
    pub const ADVERSARIAL: [Check; 6] = [
        Check::Lemma1,
        Check::Lemma2,
        Check::Lemma3,
        Check::Lemma4,
        Check::Lemma5,
        Check::CounterCap,
    ];
    pub const STOCHASTIC: [Check; 4] = [Check::Lemma6, Check::Lemma7, Check::Lemma8, Check::Lemma9];

    pub fn as_str(self) -> &'static str {
        match self {
            Check::Lemma1 => "lemma1",
            Check::Lemma2 => "lemma2",
            Check::Lemma3 => "lemma3",
            Check::Lemma4 => "lemma4",
            Check::Lemma5 => "lemma5",
            Check::CounterCap => "counter-cap",
            Check::Lemma6 => "lemma6",
            Check::Lemma7 => "lemma7",
            Check::Lemma8 => "lemma8",
            Check::Lemma9 => "lemma9",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub t: u64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub checks: u64,
    pub violations: u64,
    /// First violation, with a snapshot of what failed.
    pub first: Option<ViolationRecord>,
}

impl InvariantResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Which invariant family applies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Setting {
    Adversarial { m: usize, k: usize, s: usize },
    Stochastic { epsilon: f64 },
}

pub struct InvariantChecker<'a> {
    instance: &'a Instance,
    setting: Setting,
    /// Components that are `G(x)` for some non-exception `x`.
    clean_homes: BTreeSet<ComponentId>,
    rule_mistakes: BTreeMap<RuleId, u64>,
    results: BTreeMap<Check, InvariantResult>,
}

impl<'a> InvariantChecker<'a> {
    pub fn new(instance: &'a Instance, setting: Setting) -> Self {
        let clean_homes = instance
            .example_ids()
            .filter(|&x| !instance.is_exception(x))
            .map(|x| instance.component_of(x))
            .collect();
        let checks: &[Check] = match setting {
            Setting::Adversarial { .. } => &Check::ADVERSARIAL,
            Setting::Stochastic { .. } => &Check::STOCHASTIC,
        };
        Self {
            instance,
            setting,
            clean_homes,
            rule_mistakes: BTreeMap::new(),
            results: checks
                .iter()
                .map(|&c| (c, InvariantResult::default()))
                .collect(),
        }
    }

    /// Counts a mistake made by a matched rule, independently of the learner.
    pub fn record_rule_mistake(&mut self, rule: RuleId) {
        *self.rule_mistakes.entry(rule).or_default() += 1;
    }

    pub fn rule_mistakes(&self) -> &BTreeMap<RuleId, u64> {
        &self.rule_mistakes
    }

    pub fn results(&self) -> &BTreeMap<Check, InvariantResult> {
        &self.results
    }

    pub fn into_results(self) -> BTreeMap<Check, InvariantResult> {
        self.results
    }

    pub fn total_violations(&self) -> u64 {
        self.results.values().map(|r| r.violations).sum()
    }

    fn note(&mut self, check: Check, t: u64, failure: Option<String>) {
        let r = self
            .results
            .get_mut(&check)
            .expect("check belongs to the setting");
        r.checks += 1;
        if let Some(detail) = failure {
            r.violations += 1;
            r.first.get_or_insert(ViolationRecord { t, detail });
        }
    }

    /// Audits the state after round `t` produced `delta`. `outside_mass` is
    /// the ground-truth mass matched by no earlier rule, given on creation
    /// rounds of the stochastic learner.
    pub fn after_round(
        &mut self,
        t: u64,
        state: &LearnerState,
        delta: &StateDelta,
        outside_mass: Option<f64>,
    ) {
        let (soundness, distinct, deletion) = match self.setting {
            Setting::Adversarial { .. } => (Check::Lemma1, Check::Lemma2, Check::Lemma3),
            Setting::Stochastic { .. } => (Check::Lemma6, Check::Lemma7, Check::Lemma8),
        };
        let failure = self.soundness_failure(state);
        self.note(soundness, t, failure);
        let failure = self.duplicate_failure(state);
        self.note(distinct, t, failure);
        if let StateDelta::Delete {
            rule,
            representative,
            ..
        } = *delta
        {
            let failure = (!self.instance.is_exception(representative))
                .then(|| format!("{rule} with clean representative {representative} was deleted"));
            self.note(deletion, t, failure);
        }

        match self.setting {
            Setting::Adversarial { m, k, s } => {
                let failure = (state.rules_ever_created > (m + k) as u64).then(|| {
                    format!(
                        "{} rules created, bound {}",
                        state.rules_ever_created,
                        m + k
                    )
                });
                self.note(Check::Lemma4, t, failure);

                let cap = per_rule_mistake_bound(m, k, s);
                let failure = self
                    .rule_mistakes
                    .iter()
                    .find(|(_, &n)| n > cap)
                    .map(|(r, n)| format!("{r} made {n} mistakes, bound {cap}"));
                self.note(Check::Lemma5, t, failure);

                let failure = state.rules.iter().find_map(|r| {
                    r.fcount
                        .iter()
                        .find(|(_, &c)| c > s as u64)
                        .map(|(lit, c)| format!("{} counter {lit} = {c} exceeds s = {s}", r.id))
                });
                self.note(Check::CounterCap, t, failure);
            }
            Setting::Stochastic { epsilon } => {
                if let (StateDelta::Create { rule, .. }, Some(mass)) = (delta, outside_mass) {
                    let failure = (mass < 2.0 * epsilon).then(|| {
                        format!(
                            "{rule} created with outside mass {mass} below {}",
                            2.0 * epsilon
                        )
                    });
                    self.note(Check::Lemma9, t, failure);
                }
            }
        }
    }

    fn soundness_failure(&self, state: &LearnerState) -> Option<String> {
        let inst = self.instance;
        state
            .rules
            .iter()
            .filter(|r| !inst.is_exception(r.representative.id))
            .find_map(|r| self.rule_soundness(r))
    }

    fn rule_soundness(&self, rule: &Rule) -> Option<String> {
        let inst = self.instance;
        let home = inst.component_of(rule.representative.id);
        let members = &inst.representation.component(home)?.members;
        if let Some(x) = members
            .iter()
            .find(|&&x| !inst.example(x).satisfies_all(&rule.conjunction))
        {
            return Some(format!(
                "{} does not cover {x} in its component {home}",
                rule.id
            ));
        }
        rule.conjunction
            .iter()
            .find(|lit| !self.backed(lit.negate(), members))
            .map(|lit| {
                format!(
                    "{} literal {lit} is not backed by any separating component",
                    rule.id
                )
            })
    }

    /// Some clean home component has `phi` uniformly true while `phi` is
    /// uniformly false on the rule's own component.
    fn backed(&self, phi: Literal, home_members: &BTreeSet<ExampleId>) -> bool {
        let inst = self.instance;
        if home_members.iter().any(|&x| inst.example(x).satisfies(phi)) {
            return false;
        }
        self.clean_homes.iter().any(|&c| {
            inst.representation
                .component(c)
                .is_some_and(|g| g.members.iter().all(|&x| inst.example(x).satisfies(phi)))
        })
    }

    fn duplicate_failure(&self, state: &LearnerState) -> Option<String> {
        let inst = self.instance;
        let mut seen: BTreeMap<ComponentId, RuleId> = BTreeMap::new();
        for r in state
            .rules
            .iter()
            .filter(|r| !inst.is_exception(r.representative.id))
        {
            let home = inst.component_of(r.representative.id);
            if let Some(prev) = seen.insert(home, r.id) {
                return Some(format!("{prev} and {} both represent {home}", r.id));
            }
        }
        None
    }
}
