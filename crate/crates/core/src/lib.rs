//! Learning from discriminative feature feedback with an imperfect teacher.
//!
//! The crate holds the ground-truth data model, a simulated teacher, the
//! adversarial and stochastic rule-list learners, stream generators and an
//! experiment harness that audits every round against the ground truth.

pub mod construct;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod harness;
pub mod learner;
pub mod model;
pub mod stochastic;
pub mod streams;
pub mod teacher;
pub mod validate;

pub use error::{Error, Result};
pub use learner::{Learner, LearnerState, PredictionOutcome, RobustDff, Rule, RuleId, StateDelta};
pub use model::{
    Component, ComponentId, Example, ExampleId, FeatureId, Instance, Label, Literal, Representation,
};
pub use stochastic::{StroDff, StroParams, Thresholds};
pub use teacher::{ExceptionStrategy, Feedback, Teacher};
pub use validate::{validate_instance, ValidationReport};
