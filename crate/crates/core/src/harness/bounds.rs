//! Closed-form bounds evaluated against a finished trial.

use serde::{Deserialize, Serialize};

use crate::learner::{per_rule_mistake_bound, total_mistake_bound};
use crate::stochastic::rule_creation_bound;

use super::trial::TrialReport;

/// Parameters the bounds are evaluated with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundParams {
    Adversarial {
        m: usize,
        k: usize,
        s: usize,
    },
    Stochastic {
        m: usize,
        epsilon: f64,
        sigma: f64,
        delta: f64,
    },
}

impl BoundParams {
    pub fn m(&self) -> usize {
        match *self {
            Self::Adversarial { m, .. } | Self::Stochastic { m, .. } => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `thm3`, `lemma4`, `lemma5` or `lemma10`.
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    /// `bound - observed`.
    pub margin: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl BoundCheck {
    fn new(name: &str, bound: f64, observed: f64, detail: Option<String>) -> Self {
        Self {
            name: name.to_string(),
            bound,
            observed,
            margin: bound - observed,
            pass: observed <= bound,
            detail,
        }
    }
}

/// Evaluates every bound that applies to the report's setting.
pub fn verify_bounds(report: &TrialReport) -> Vec<BoundCheck> {
    match report.params {
        BoundParams::Adversarial { m, k, s } => {
            let per_rule = per_rule_mistake_bound(m, k, s);
            let worst = report
                .rule_mistakes
                .iter()
                .map(|r| r.mistakes)
                .max()
                .unwrap_or(0);
            let offenders: Vec<String> = report
                .rule_mistakes
                .iter()
                .filter(|r| r.mistakes > per_rule)
                .map(|r| r.rule.to_string())
                .collect();
            vec![
                BoundCheck::new(
                    "thm3",
                    total_mistake_bound(m, k, s) as f64,
                    report.mistakes as f64,
                    None,
                ),
                BoundCheck::new("lemma4", (m + k) as f64, report.rules_created as f64, None),
                BoundCheck::new(
                    "lemma5",
                    per_rule as f64,
                    worst as f64,
                    (!offenders.is_empty()).then(|| offenders.join(",")),
                ),
            ]
        }
        BoundParams::Stochastic { m, delta, .. } => vec![BoundCheck::new(
            "lemma10",
            rule_creation_bound(m, delta),
            report.rules_created as f64,
            None,
        )],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trial::RuleMistakes;
    use crate::learner::RuleId;
    use crate::model::ExampleId;

    fn report(params: BoundParams, mistakes: u64, rules: u64) -> TrialReport {
        TrialReport {
            params,
            mistakes,
            rules_created: rules,
            ..TrialReport::default()
        }
    }

    #[test]
    fn thm3_margin() {
        let r = report(BoundParams::Adversarial { m: 2, k: 0, s: 0 }, 2, 1);
        let thm3 = &verify_bounds(&r)[0];
        assert_eq!((thm3.bound, thm3.margin, thm3.pass), (6.0, 4.0, true));
    }

    #[test]
    fn lemma4_boundary() {
        let r = report(BoundParams::Adversarial { m: 3, k: 2, s: 1 }, 0, 5);
        let l4 = &verify_bounds(&r)[1];
        assert_eq!((l4.margin, l4.pass), (0.0, true));
    }

    #[test]
    fn lemma5_names_the_rule() {
        let mut r = report(BoundParams::Adversarial { m: 2, k: 0, s: 0 }, 3, 1);
        r.rule_mistakes.push(RuleMistakes {
            rule: RuleId(4),
            representative: ExampleId(0),
            exception: false,
            mistakes: 3,
        });
        let l5 = &verify_bounds(&r)[2];
        assert!(!l5.pass);
        assert_eq!(l5.detail.as_deref(), Some("r4"));
    }

    #[test]
    fn lemma10() {
        let r = report(
            BoundParams::Stochastic {
                m: 2,
                epsilon: 0.0,
                sigma: 0.0,
                delta: 0.05,
            },
            0,
            36,
        );
        let l10 = &verify_bounds(&r)[0];
        assert_eq!(l10.name, "lemma10");
        assert!((l10.bound - 8.0 * 80f64.ln()).abs() < 1e-12);
        assert!(!l10.pass);
    }
}
