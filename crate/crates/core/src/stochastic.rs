//! Rule-list learner for i.i.d. streams, with time-dependent thresholds in
//! place of the fixed exception budgets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{
    Learner, LearnerState, MistakeThresholds, PredictionOutcome, RuleId, StateDelta,
};
use crate::model::{Example, Label, Literal};
use crate::teacher::Feedback;

/// Logarithm used inside `q` and `γ`. Natural by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            Self::Natural => x.ln(),
            Self::Two => x.log2(),
            Self::Ten => x.log10(),
        }
    }
}

/// Which clock sets the deletion threshold `n_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeletionClock {
    /// `n_k = q(ε, t - t(x̂) + 1)`: exceptions counted since the rule was created.
    #[default]
    RuleCreation,
    /// `n_k = q(ε, t - t(x̂,φ) + 1)`: the same clock as `n_s`.
    FirstSeen,
}

/// The threshold functions `q` and `γ` for a fixed confidence `δ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub delta: f64,
    pub log_base: LogBase,
}

impl Thresholds {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            log_base: LogBase::Natural,
        }
    }

    /// `q(ε, t) = εt + (2/3)·log(8t³/δ) + sqrt(2εt·log(8t³/δ))`.
    pub fn q(&self, eps: f64, t: u64) -> Result<f64> {
        if t < 1 {
            return Err(Error::Domain("q requires t >= 1".into()));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::Domain(format!(
                "q requires delta > 0, got {}",
                self.delta
            )));
        }
        if eps.is_nan() || eps < 0.0 {
            return Err(Error::Domain(format!("q requires epsilon >= 0, got {eps}")));
        }
        let t = t as f64;
        let log = self.log_base.log(8.0 * t * t * t / self.delta);
        Ok(eps * t + 2.0 / 3.0 * log + (2.0 * eps * t * log).sqrt())
    }

    /// `γ(ε, r, t) = (r + 4·sqrt(r)·log^{3/2}(8t²/δ)) / (1 - 2ε) - r + 1`.
    pub fn gamma(&self, eps: f64, r: u64, t: u64) -> Result<f64> {
        if eps.is_nan() || eps >= 0.5 {
            return Err(Error::Domain(format!(
                "gamma requires epsilon < 1/2, got {eps}"
            )));
        }
        if t < 1 {
            return Err(Error::Domain("gamma requires t >= 1".into()));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::Domain(format!(
                "gamma requires delta > 0, got {}",
                self.delta
            )));
        }
        let (r, t) = (r as f64, t as f64);
        let log = self.log_base.log(8.0 * t * t / self.delta);
        Ok((r + 4.0 * r.sqrt() * log.powf(1.5)) / (1.0 - 2.0 * eps) - r + 1.0)
    }
}

/// `q` with natural logarithms.
pub fn q(eps: f64, t: u64, delta: f64) -> Result<f64> {
    Thresholds::new(delta).q(eps, t)
}

/// `γ` with natural logarithms.
pub fn gamma(eps: f64, r: u64, t: u64, delta: f64) -> Result<f64> {
    Thresholds::new(delta).gamma(eps, r, t)
}

/// Bound `4m·log(4/δ)` on the number of rules created with probability `1 - δ`.
pub fn rule_creation_bound(m: usize, delta: f64) -> f64 {
    4.0 * m as f64 * (4.0 / delta).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StroParams {
    pub m: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub delta: f64,
    #[serde(default)]
    pub clock: DeletionClock,
    #[serde(default)]
    pub log_base: LogBase,
}

impl StroParams {
    pub fn new(m: usize, epsilon: f64, sigma: f64, delta: f64) -> Self {
        Self {
            m,
            epsilon,
            sigma,
            delta,
            clock: DeletionClock::default(),
            log_base: LogBase::default(),
        }
    }

    /// `0 <= σ <= ε <= 1/4` and `0 < δ <= 1/e²`.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(0.0..=0.25).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon = {} outside [0, 1/4]",
                self.epsilon
            )));
        }
        if !(0.0..=self.epsilon).contains(&self.sigma) {
            return Err(Error::Config(format!(
                "sigma = {} outside [0, epsilon]",
                self.sigma
            )));
        }
        let max_delta = (-2.0f64).exp();
        if !(self.delta > 0.0 && self.delta <= max_delta) {
            return Err(Error::Config(format!(
                "delta = {} outside (0, 1/e^2]",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            delta: self.delta,
            log_base: self.log_base,
        }
    }
}

/// The stochastic-setting learner.
#[derive(Clone, Debug)]
pub struct StroDff {
    state: LearnerState,
    params: StroParams,
    thresholds: Thresholds,
    t: u64,
    /// Round of the last rule creation.
    t_lr: u64,
    /// Unmatched rounds since `t_lr`.
    n_lr: u64,
    /// Round at which each counter last went from 0 to 1.
    first_seen: BTreeMap<(RuleId, Literal), u64>,
}

impl StroDff {
    pub fn new(params: StroParams, x0: Example, y0: Label) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            state: LearnerState::new(params.m, x0, y0),
            thresholds: params.thresholds(),
            params,
            t: 0,
            t_lr: 0,
            n_lr: 0,
            first_seen: BTreeMap::new(),
        })
    }

    pub fn params(&self) -> &StroParams {
        &self.params
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn last_creation(&self) -> u64 {
        self.t_lr
    }

    pub fn unmatched_since_creation(&self) -> u64 {
        self.n_lr
    }

    pub fn first_seen(&self, rule: RuleId, lit: Literal) -> Option<u64> {
        self.first_seen.get(&(rule, lit)).copied()
    }

    /// Gate value `γ(ε, t - t_lr - N_lr + 1, t)` for the current counters.
    pub fn creation_gate(&self, t: u64) -> Result<f64> {
        let r = (t - self.t_lr + 1).saturating_sub(self.n_lr);
        self.thresholds.gamma(self.params.epsilon, r, t)
    }

    fn matched_mistake(&mut self, id: RuleId, phi: Literal, t: u64) -> Result<StateDelta> {
        let rule = self.state.rule(id).expect("matched rule is live");
        if rule.counter(phi) == 0 {
            self.first_seen.insert((id, phi), t);
        }
        let seen = self.first_seen[&(id, phi)];
        let since_seen = t - seen + 1;
        let n_s = self.thresholds.q(self.params.sigma, since_seen)? + 1.0;
        let clock = match self.params.clock {
            DeletionClock::RuleCreation => t - rule.created_at + 1,
            DeletionClock::FirstSeen => since_seen,
        };
        let n_k = self.thresholds.q(self.params.epsilon, clock)?;

        let idx = self
            .state
            .rules
            .iter()
            .position(|r| r.id == id)
            .expect("live");
        self.state.rules[idx].mistake_count += 1;
        let delta = self
            .state
            .handle_mistake(id, phi, MistakeThresholds { n_k, n_s });
        match delta {
            StateDelta::Refine { .. } => {
                self.first_seen.remove(&(id, phi));
            }
            StateDelta::Delete { .. } => {
                self.first_seen.retain(|(r, _), _| *r != id);
            }
            _ => {}
        }
        Ok(delta)
    }
}

impl Learner for StroDff {
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
        if t <= self.t {
            return Err(Error::Protocol {
                example: x_t.id,
                detail: format!("round {t} does not advance past {}", self.t),
            });
        }
        if let Some(fb) = feedback {
            self.state.check_feedback(x_t, outcome, fb)?;
        }
        self.t = t;
        match (outcome.matched, feedback) {
            (Some(_), None) => Ok(StateDelta::None),
            (Some(id), Some(fb)) => self.matched_mistake(id, fb.feature, t),
            (None, fb) => {
                self.n_lr += 1;
                let Some(fb) = fb else {
                    return Ok(StateDelta::None);
                };
                if self.n_lr as f64 >= self.creation_gate(t)? {
                    let rule = self.state.create_rule(x_t, fb.correct_label, t);
                    self.n_lr = 0;
                    self.t_lr = t;
                    Ok(StateDelta::Create {
                        rule,
                        representative: x_t.id,
                    })
                } else {
                    Ok(StateDelta::Gated)
                }
            }
        }
    }

    fn state(&self) -> &LearnerState {
        &self.state
    }
}
