//! Legality checks for noisy-teacher instances.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ComponentId, ExampleId, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Dangling ids, wrong vector lengths, out-of-range labels or features.
    Malformed,
    Coverage,
    Purity,
    Separation,
    ExceptionCount,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Malformed => "malformed",
            Self::Coverage => "coverage",
            Self::Purity => "purity",
            Self::Separation => "separation",
            Self::ExceptionCount => "exception-count",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            detail: detail.into(),
        });
    }
}

/// Lists every violated representation or instance invariant.
///
/// Structural problems are reported as [`ViolationKind::Malformed`]; when any
/// are present the semantic checks are skipped since they would have to
/// follow dangling references.
pub fn validate_instance(instance: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_structure(instance, &mut report);
    if !report.ok() {
        return report;
    }

    let rep = &instance.representation;

    // coverage and the fixed component choice
    let mut covered = BTreeSet::new();
    for c in &rep.components {
        covered.extend(c.members.iter().copied());
    }
    for x in instance.example_ids() {
        if !covered.contains(&x) {
            report.push(ViolationKind::Coverage, format!("{x} is in no component"));
        }
        let g = instance.component_of(x);
        if !rep.components[g.0].members.contains(&x) {
            report.push(
                ViolationKind::Coverage,
                format!("componentOf({x}) = {g} but {g} does not contain {x}"),
            );
        }
    }

    // purity: the stored exception set must be exactly the deviating examples
    let computed = instance.computed_exceptions();
    for x in computed.difference(&instance.exceptions) {
        report.push(
            ViolationKind::Purity,
            format!(
                "{x} has label {} but {} is labeled {} and {x} is not a listed exception",
                instance.label_of(*x),
                instance.component_of(*x),
                instance.component_label(instance.component_of(*x))
            ),
        );
    }
    for x in instance.exceptions.difference(&computed) {
        report.push(
            ViolationKind::Purity,
            format!("{x} is listed as an exception but agrees with its component label"),
        );
    }

    check_separation(instance, &mut report);

    if instance.exceptions.len() > instance.k {
        report.push(
            ViolationKind::ExceptionCount,
            format!(
                "{} exceptions exceed the bound k = {}",
                instance.exceptions.len(),
                instance.k
            ),
        );
    }
    report
}

fn check_structure(instance: &Instance, report: &mut ValidationReport) {
    use ViolationKind::Malformed;
    let n = instance.examples.len();
    let m = instance.representation.components.len();
    let mut seen_ids = BTreeSet::new();

    for (i, e) in instance.examples.iter().enumerate() {
        if e.id != ExampleId(i) {
            report.push(
                Malformed,
                format!("example at position {i} has id {}", e.id),
            );
        }
        if e.bits.len() != instance.d {
            report.push(
                Malformed,
                format!(
                    "{} has {} bits, expected d = {}",
                    e.id,
                    e.bits.len(),
                    instance.d
                ),
            );
        }
        seen_ids.insert(e.id);
    }
    if seen_ids.len() != n {
        report.push(Malformed, "duplicate example ids");
    }

    for (i, c) in instance.representation.components.iter().enumerate() {
        if c.id != ComponentId(i) {
            report.push(
                Malformed,
                format!("component at position {i} has id {}", c.id),
            );
        }
        if c.label.0 >= instance.labels {
            report.push(
                Malformed,
                format!(
                    "{} has label {} outside |Y| = {}",
                    c.id, c.label, instance.labels
                ),
            );
        }
        for x in &c.members {
            if x.0 >= n {
                report.push(Malformed, format!("{} lists unknown member {x}", c.id));
            }
        }
    }

    if instance.component_of.len() != n {
        report.push(
            Malformed,
            format!(
                "componentOf has {} entries for {n} examples",
                instance.component_of.len()
            ),
        );
    } else {
        for (i, g) in instance.component_of.iter().enumerate() {
            if g.0 >= m {
                report.push(
                    Malformed,
                    format!("componentOf(x{i}) = {g} is not a component"),
                );
            }
        }
    }

    if instance.concept_label.len() != n {
        report.push(
            Malformed,
            format!(
                "conceptLabel has {} entries for {n} examples",
                instance.concept_label.len()
            ),
        );
    } else {
        for (i, y) in instance.concept_label.iter().enumerate() {
            if y.0 >= instance.labels {
                report.push(
                    Malformed,
                    format!("conceptLabel(x{i}) = {y} outside |Y| = {}", instance.labels),
                );
            }
        }
    }

    for x in &instance.exceptions {
        if x.0 >= n {
            report.push(Malformed, format!("exception {x} is not an example"));
        }
    }

    for (&(i, j), lit) in &instance.representation.separation {
        if i.0 >= m || j.0 >= m {
            report.push(
                Malformed,
                format!("separation entry ({i}, {j}) names an unknown component"),
            );
            continue;
        }
        if i == j {
            report.push(
                Malformed,
                format!("separation entry ({i}, {i}) pairs a component with itself"),
            );
        }
        if lit.feature.0 >= instance.d {
            report.push(
                Malformed,
                format!("separation ({i}, {j}) uses feature {} >= d", lit.feature.0),
            );
        }
        let comps = &instance.representation.components;
        if comps[i.0].label == comps[j.0].label {
            report.push(
                Malformed,
                format!("separation entry ({i}, {j}) for components with equal labels"),
            );
        }
    }
}

fn check_separation(instance: &Instance, report: &mut ValidationReport) {
    use ViolationKind::Separation;
    let rep = &instance.representation;
    for gi in &rep.components {
        for gj in &rep.components {
            // each unordered pair once; the reverse entry must be the negation
            if gi.id >= gj.id || gi.label == gj.label {
                continue;
            }
            let Some(lit) = rep.separator(gi.id, gj.id) else {
                report.push(
                    Separation,
                    format!("no separating literal for ({}, {})", gi.id, gj.id),
                );
                continue;
            };
            match rep.separator(gj.id, gi.id) {
                Some(back) if back == lit.negate() => {}
                Some(back) => report.push(
                    Separation,
                    format!(
                        "separation({}, {}) = {back} is not the negation of {lit}",
                        gj.id, gi.id
                    ),
                ),
                None => report.push(
                    Separation,
                    format!("no separating literal for ({}, {})", gj.id, gi.id),
                ),
            }
            for x in &gi.members {
                if !instance.example(*x).satisfies(lit) {
                    report.push(
                        Separation,
                        format!(
                            "{lit} separating ({}, {}) is false on member {x}",
                            gi.id, gj.id
                        ),
                    );
                }
            }
            for x in &gj.members {
                if instance.example(*x).satisfies(lit) {
                    report.push(
                        Separation,
                        format!(
                            "{lit} separating ({}, {}) is true on member {x} of {}",
                            gi.id, gj.id, gj.id
                        ),
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{Example, Label};

    #[test]
    fn single_pure_component_is_ok() {
        let inst = fixtures::single_component(3, &["000", "101", "111"]);
        let report = validate_instance(&inst);
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn flipped_bit_breaks_exactly_one_literal_check() {
        let mut inst = fixtures::two_blocks();
        assert!(validate_instance(&inst).ok());
        // x0 is in G0 where feature 0 must be true
        inst.examples[0].bits[0] = false;
        let report = validate_instance(&inst);
        assert!(!report.ok());
        // re-evaluate the literal directly on every member of G0
        let direct_failures = inst.representation.components[0]
            .members
            .iter()
            .filter(|x| {
                !inst
                    .example(**x)
                    .satisfies(crate::model::Literal::positive(0))
            })
            .count();
        assert_eq!(direct_failures, 1);
        assert_eq!(report.count(ViolationKind::Separation), 1, "{report:?}");
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn one_exception_too_many() {
        let mut inst = fixtures::two_blocks();
        inst.k = 0;
        // relabel x1 (in G0, label 0) to label 1
        inst.concept_label[1] = Label(1);
        inst.exceptions.insert(ExampleId(1));
        let report = validate_instance(&inst);
        assert_eq!(report.count(ViolationKind::ExceptionCount), 1);
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn unlisted_exception_is_a_purity_violation() {
        let mut inst = fixtures::two_blocks();
        inst.concept_label[1] = Label(1);
        let report = validate_instance(&inst);
        assert_eq!(report.count(ViolationKind::Purity), 1);
    }

    #[test]
    fn dangling_ids_are_reported_not_panicked() {
        let mut inst = fixtures::two_blocks();
        inst.representation.components[0]
            .members
            .insert(ExampleId(99));
        inst.component_of.pop();
        inst.examples.push(Example::new(17, vec![true]));
        let report = validate_instance(&inst);
        assert!(!report.ok());
        assert!(report
            .violations
            .iter()
            .all(|v| v.kind == ViolationKind::Malformed));
        assert!(report.count(ViolationKind::Malformed) >= 3);
    }

    #[test]
    fn uncovered_example() {
        let mut inst = fixtures::two_blocks();
        inst.representation.components[1]
            .members
            .remove(&ExampleId(3));
        let report = validate_instance(&inst);
        // not covered, and componentOf names a component without it
        assert_eq!(report.count(ViolationKind::Coverage), 2);
    }

    #[test]
    fn asymmetric_separation_table() {
        let mut inst = fixtures::two_blocks();
        let (a, b) = (ComponentId(0), ComponentId(1));
        let lit = inst.representation.separator(a, b).unwrap();
        inst.representation.separation.insert((b, a), lit);
        let report = validate_instance(&inst);
        assert!(report.count(ViolationKind::Separation) >= 1);
    }
}
