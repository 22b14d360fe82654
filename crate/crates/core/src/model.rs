//! Ground-truth data model: feature universe, examples, components,
//! representations and concepts with exceptions.
//!
//! Everything here is immutable once an [`Instance`] has been built, so a
//! single instance can be shared read-only by any number of trials.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a Boolean coordinate in `[0, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub usize);

/// Dense example identifier; `examples[id.0].id == id` in a well-formed instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExampleId(pub usize);

/// Symbol in the finite label space `[0, |Y|)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub usize);

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}

/// A coordinate together with the value it must take.
///
/// Teacher feedback and rule conjunctions are both expressed as literals;
/// `polarity == false` is the negated coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub feature: FeatureId,
    pub polarity: bool,
}

impl Literal {
    pub const fn new(feature: usize, polarity: bool) -> Self {
        Self {
            feature: FeatureId(feature),
            polarity,
        }
    }

    pub const fn positive(feature: usize) -> Self {
        Self::new(feature, true)
    }

    pub const fn negative(feature: usize) -> Self {
        Self::new(feature, false)
    }

    #[must_use]
    pub const fn negate(self) -> Self {
        Self {
            feature: self.feature,
            polarity: !self.polarity,
        }
    }

    /// Evaluates the literal on a bit vector. Out-of-range coordinates are false.
    pub fn eval(&self, bits: &[bool]) -> bool {
        bits.get(self.feature.0)
            .is_some_and(|&b| b == self.polarity)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.polarity {
            write!(f, "f{}", self.feature.0)
        } else {
            write!(f, "!f{}", self.feature.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Example {
    pub id: ExampleId,
    pub bits: Vec<bool>,
}

impl Example {
    pub fn new(id: usize, bits: Vec<bool>) -> Self {
        Self {
            id: ExampleId(id),
            bits,
        }
    }

    /// Builds an example from a `'0'/'1'` string, coordinate 0 first.
    pub fn from_bit_str(id: usize, s: &str) -> Option<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self::new(id, bits))
    }

    pub fn bit_string(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }

    pub fn satisfies(&self, literal: Literal) -> bool {
        literal.eval(&self.bits)
    }

    /// True when every literal of the conjunction holds. The empty conjunction
    /// is satisfied by everything.
    pub fn satisfies_all(&self, conjunction: &[Literal]) -> bool {
        conjunction.iter().all(|&l| self.satisfies(l))
    }

    /// Literals that are true on `self` and false on `other`, in coordinate order.
    pub fn separating_literals<'a>(
        &'a self,
        other: &'a Example,
    ) -> impl Iterator<Item = Literal> + 'a {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(j, (&a, _))| Literal::new(j, a))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub id: ComponentId,
    pub label: Label,
    pub members: BTreeSet<ExampleId>,
}

/// The teacher's internal cover `G_1..G_m` plus one separating literal per
/// ordered pair of components with differing labels.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Representation {
    pub components: Vec<Component>,
    pub separation: BTreeMap<(ComponentId, ComponentId), Literal>,
}

impl Representation {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, id: ComponentId) -> Option<&Component> {
        self.components.get(id.0).filter(|c| c.id == id)
    }

    pub fn separator(&self, from: ComponentId, to: ComponentId) -> Option<Literal> {
        self.separation.get(&(from, to)).copied()
    }

    /// Records `literal` for `(i, j)` and its negation for `(j, i)`.
    pub fn set_separator(&mut self, i: ComponentId, j: ComponentId, literal: Literal) {
        self.separation.insert((i, j), literal);
        self.separation.insert((j, i), literal.negate());
    }

    /// True when no example belongs to two components.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.components
            .iter()
            .flat_map(|c| c.members.iter())
            .all(|x| seen.insert(*x))
    }
}

/// Full ground truth for one simulation: representation, concept, exceptions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub d: usize,
    pub labels: u16,
    pub examples: Vec<Example>,
    pub representation: Representation,
    /// The fixed choice `G(x)`, indexed by example id.
    pub component_of: Vec<ComponentId>,
    /// The target concept `c*`, indexed by example id.
    pub concept_label: Vec<Label>,
    pub exceptions: BTreeSet<ExampleId>,
    /// Bound on the number of exceptions.
    pub k: usize,
    /// Bound on the number of similar exceptions.
    pub s: usize,
}

impl Instance {
    /// Number of components `m`.
    pub fn m(&self) -> usize {
        self.representation.len()
    }

    pub fn num_examples(&self) -> usize {
        self.examples.len()
    }

    pub fn example(&self, id: ExampleId) -> &Example {
        &self.examples[id.0]
    }

    pub fn label_of(&self, id: ExampleId) -> Label {
        self.concept_label[id.0]
    }

    pub fn component_of(&self, id: ExampleId) -> ComponentId {
        self.component_of[id.0]
    }

    pub fn component_label(&self, id: ComponentId) -> Label {
        self.representation.components[id.0].label
    }

    pub fn is_exception(&self, id: ExampleId) -> bool {
        self.exceptions.contains(&id)
    }

    pub fn example_ids(&self) -> impl Iterator<Item = ExampleId> + '_ {
        self.examples.iter().map(|e| e.id)
    }

    /// Recomputes `{x : c*(x) != label(G(x))}` from the concept and the
    /// fixed component choice, ignoring the stored exception set.
    pub fn computed_exceptions(&self) -> BTreeSet<ExampleId> {
        self.example_ids()
            .filter(|&x| self.label_of(x) != self.component_label(self.component_of(x)))
            .collect()
    }

    /// Separating literal between the components of two examples, if the
    /// table has one.
    pub fn component_separator(&self, x: ExampleId, other: ExampleId) -> Option<Literal> {
        self.representation
            .separator(self.component_of(x), self.component_of(other))
    }
}
