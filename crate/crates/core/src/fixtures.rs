//! Small hand-built instances shared by unit tests, integration tests and
//! benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    Component, ComponentId, Example, ExampleId, Instance, Label, Literal, Representation,
};

/// One component holding every example, all labeled 0.
pub fn single_component(d: usize, bits: &[&str]) -> Instance {
    let examples: Vec<_> = bits
        .iter()
        .enumerate()
        .map(|(i, s)| Example::from_bit_str(i, s).expect("bit string"))
        .collect();
    assert!(examples.iter().all(|e| e.bits.len() == d));
    let n = examples.len();
    Instance {
        d,
        labels: 1,
        representation: Representation {
            components: vec![Component {
                id: ComponentId(0),
                label: Label(0),
                members: (0..n).map(ExampleId).collect(),
            }],
            separation: BTreeMap::new(),
        },
        examples,
        component_of: vec![ComponentId(0); n],
        concept_label: vec![Label(0); n],
        exceptions: BTreeSet::new(),
        k: 0,
        s: 0,
    }
}

/// Two components split by feature 0 over `d = 1`.
///
/// `G0 = {x0, x1}` (feature 0 true, label 0) and `G1 = {x2, x3}` (feature 0
/// false, label 1); the separating literal for `(G0, G1)` is `f0`.
pub fn two_blocks() -> Instance {
    let examples = vec![
        Example::new(0, vec![true]),
        Example::new(1, vec![true]),
        Example::new(2, vec![false]),
        Example::new(3, vec![false]),
    ];
    let mut representation = Representation {
        components: vec![
            Component {
                id: ComponentId(0),
                label: Label(0),
                members: [ExampleId(0), ExampleId(1)].into(),
            },
            Component {
                id: ComponentId(1),
                label: Label(1),
                members: [ExampleId(2), ExampleId(3)].into(),
            },
        ],
        separation: BTreeMap::new(),
    };
    representation.set_separator(ComponentId(0), ComponentId(1), Literal::positive(0));
    Instance {
        d: 1,
        labels: 2,
        examples,
        representation,
        component_of: vec![
            ComponentId(0),
            ComponentId(0),
            ComponentId(1),
            ComponentId(1),
        ],
        concept_label: vec![Label(0), Label(0), Label(1), Label(1)],
        exceptions: BTreeSet::new(),
        k: 0,
        s: 0,
    }
}
