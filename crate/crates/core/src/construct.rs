//! Representation constructions: disjoint normalization, exception-free
//! expansion, the hypercube instance and the exhaustive minimum-size oracle.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{
    Component, ComponentId, Example, ExampleId, Instance, Label, Literal, Representation,
};

/// Largest `d` for which [`hypercube_lower_bound_instance`] enumerates `{0,1}^d`.
pub const HYPERCUBE_MAX_D: usize = 16;

/// Makes the member sets pairwise disjoint, keeping each example only in the
/// component named by `component_of`.
///
/// This is the fixed point of repeatedly replacing an overlapping pair
/// `(G_a, G_b)` by `G_a' = (G_a \ G_b) ∪ {x ∈ G_a ∩ G_b : G(x) = G_a}` and
/// symmetrically for `G_b`. Component count and the separation table are
/// unchanged; every literal stays valid because member sets only shrink.
pub fn normalize_disjoint(rep: &Representation, component_of: &[ComponentId]) -> Representation {
    let components = rep
        .components
        .iter()
        .map(|c| Component {
            id: c.id,
            label: c.label,
            members: c
                .members
                .iter()
                .copied()
                .filter(|x| component_of.get(x.0) == Some(&c.id))
                .collect(),
        })
        .collect();
    Representation {
        components,
        separation: rep.separation.clone(),
    }
}

#[derive(Clone, Debug)]
struct Piece {
    /// Original component this piece was carved from.
    ancestor: ComponentId,
    label: Label,
    members: BTreeSet<ExampleId>,
}

/// Builds an exception-free instance for the same concept with at most
/// `m + d·k` components.
///
/// Each exception `x`, taken in id order, splits the piece `G` holding it into
/// `G ∩ P_j` for every coordinate `j` (where `P_j` are the points disagreeing
/// with `x` on `j`) plus the singleton `{x}` relabeled to `c*(x)`. Overlaps
/// among the `G ∩ P_j` are resolved by sending each point to the lowest
/// coordinate on which it disagrees with `x`; empty pieces are dropped.
///
/// Pieces with different labels reuse the original separator when they come
/// from different original components; otherwise a coordinate literal that
/// separates the two member sets is searched for. The search always succeeds
/// inside one original component. It can fail when two original components
/// share a label and an exception from one must be split off against the
/// other, in which case [`Error::Expansion`] is returned.
pub fn expand_representation(instance: &Instance) -> Result<Instance> {
    let disjoint = normalize_disjoint(&instance.representation, &instance.component_of);
    let mut pieces: Vec<Piece> = disjoint
        .components
        .iter()
        .map(|c| Piece {
            ancestor: c.id,
            label: c.label,
            members: c.members.clone(),
        })
        .collect();
    let mut owner = owners(&pieces, instance.num_examples());

    for &x in &instance.exceptions {
        let a = owner[x.0].ok_or_else(|| Error::Expansion(format!("{x} is in no component")))?;
        let target = instance.label_of(x);
        if pieces[a].label == target {
            // an earlier split already put x in a piece carrying its label
            continue;
        }
        let xe = instance.example(x);
        let piece = &pieces[a];
        let twins: BTreeSet<ExampleId> = piece
            .members
            .iter()
            .copied()
            .filter(|&z| instance.example(z).bits == xe.bits)
            .collect();
        if let Some(z) = twins.iter().find(|&&z| instance.label_of(z) != target) {
            return Err(Error::Expansion(format!(
                "{x} and {z} have identical features but different labels"
            )));
        }

        let mut by_coordinate: BTreeMap<usize, BTreeSet<ExampleId>> = BTreeMap::new();
        for &z in piece.members.iter().filter(|z| !twins.contains(z)) {
            let j = first_difference(instance.example(z), xe).expect("non-twin differs somewhere");
            by_coordinate.entry(j).or_default().insert(z);
        }
        let mut replacement: Vec<Piece> = by_coordinate
            .into_values()
            .map(|members| Piece {
                ancestor: piece.ancestor,
                label: piece.label,
                members,
            })
            .collect();
        replacement.push(Piece {
            ancestor: piece.ancestor,
            label: target,
            members: twins,
        });
        pieces.splice(a..=a, replacement);
        owner = owners(&pieces, instance.num_examples());
    }

    let mut representation = Representation {
        components: pieces
            .iter()
            .enumerate()
            .map(|(i, p)| Component {
                id: ComponentId(i),
                label: p.label,
                members: p.members.clone(),
            })
            .collect(),
        separation: BTreeMap::new(),
    };
    for (i, p) in pieces.iter().enumerate() {
        for (j, q) in pieces.iter().enumerate().skip(i + 1) {
            if p.label == q.label {
                continue;
            }
            let inherited = (p.ancestor != q.ancestor)
                .then(|| instance.representation.separator(p.ancestor, q.ancestor))
                .flatten();
            let lit = match inherited {
                Some(lit) => lit,
                None => {
                    separating_coordinate(instance, &p.members, &q.members).ok_or_else(|| {
                        Error::Expansion(format!(
                        "no single literal separates piece {i} (from {}) and piece {j} (from {})",
                        p.ancestor, q.ancestor
                    ))
                    })?
                }
            };
            representation.set_separator(ComponentId(i), ComponentId(j), lit);
        }
    }

    let component_of = owner
        .iter()
        .enumerate()
        .map(|(x, o)| {
            o.map(ComponentId)
                .ok_or_else(|| Error::Expansion(format!("x{x} is in no component")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Instance {
        d: instance.d,
        labels: instance.labels,
        examples: instance.examples.clone(),
        representation,
        component_of,
        concept_label: instance.concept_label.clone(),
        exceptions: BTreeSet::new(),
        k: 0,
        s: 0,
    })
}

fn owners(pieces: &[Piece], n: usize) -> Vec<Option<usize>> {
    let mut owner = vec![None; n];
    for (i, p) in pieces.iter().enumerate() {
        for x in &p.members {
            owner[x.0] = Some(i);
        }
    }
    owner
}

fn first_difference(a: &Example, b: &Example) -> Option<usize> {
    a.bits.iter().zip(&b.bits).position(|(u, v)| u != v)
}

/// A coordinate literal true on all of `pos` and false on all of `neg`.
fn separating_coordinate(
    instance: &Instance,
    pos: &BTreeSet<ExampleId>,
    neg: &BTreeSet<ExampleId>,
) -> Option<Literal> {
    (0..instance.d)
        .flat_map(|j| [Literal::new(j, true), Literal::new(j, false)])
        .find(|&lit| {
            pos.iter().all(|&x| instance.example(x).satisfies(lit))
                && neg.iter().all(|&x| !instance.example(x).satisfies(lit))
        })
}

/// The single-component instance over `{0,1}^d` whose concept is 0 everywhere
/// except on the all-zeros point.
///
/// Example `v` has coordinate `j` equal to bit `j` of `v`, so `x0` is the
/// all-zeros point and the only exception.
pub fn hypercube_lower_bound_instance(d: usize) -> Result<Instance> {
    if d == 0 {
        return Err(Error::Domain(
            "hypercube dimension must be at least 1".into(),
        ));
    }
    if d > HYPERCUBE_MAX_D {
        return Err(Error::SizeLimit(format!(
            "d = {d} exceeds the enumeration cap of {HYPERCUBE_MAX_D}"
        )));
    }
    let n = 1usize << d;
    let examples: Vec<Example> = (0..n)
        .map(|v| Example::new(v, (0..d).map(|j| (v >> j) & 1 == 1).collect()))
        .collect();
    let mut concept_label = vec![Label(0); n];
    concept_label[0] = Label(1);
    Ok(Instance {
        d,
        labels: 2,
        examples,
        representation: Representation {
            components: vec![Component {
                id: ComponentId(0),
                label: Label(0),
                members: (0..n).map(ExampleId).collect(),
            }],
            separation: BTreeMap::new(),
        },
        component_of: vec![ComponentId(0); n],
        concept_label,
        exceptions: [ExampleId(0)].into(),
        k: 1,
        s: 1,
    })
}

/// Outcome of [`min_exception_free_size`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinSize {
    Exact(usize),
    ExceedsMax,
}

/// Largest universe the exhaustive oracle accepts.
pub const ORACLE_MAX_EXAMPLES: usize = 24;

#[derive(Clone, Copy)]
struct Block {
    label: Label,
    /// Coordinates equal to 1 on every member.
    ones: u64,
    /// Coordinates equal to 0 on every member.
    zeros: u64,
}

impl Block {
    fn separable(&self, other: &Block) -> bool {
        (self.ones & other.zeros) | (self.zeros & other.ones) != 0
    }
}

struct Search<'a> {
    masks: &'a [(u64, Label)],
    full: u64,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    fn feasible(&mut self, idx: usize, blocks: &mut Vec<Block>, cap: usize) -> Result<bool> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded {
                budget: self.budget,
            });
        }
        let Some(&(bits, label)) = self.masks.get(idx) else {
            return Ok(true);
        };
        let zeros = !bits & self.full;

        for b in 0..blocks.len() {
            if blocks[b].label != label {
                continue;
            }
            let grown = Block {
                label,
                ones: blocks[b].ones & bits,
                zeros: blocks[b].zeros & zeros,
            };
            let ok = blocks
                .iter()
                .enumerate()
                .all(|(c, other)| c == b || other.label == label || grown.separable(other));
            if ok {
                let saved = blocks[b];
                blocks[b] = grown;
                let found = self.feasible(idx + 1, blocks, cap)?;
                blocks[b] = saved;
                if found {
                    return Ok(true);
                }
            }
        }

        if blocks.len() < cap {
            let fresh = Block {
                label,
                ones: bits,
                zeros,
            };
            if blocks
                .iter()
                .all(|o| o.label == label || fresh.separable(o))
            {
                blocks.push(fresh);
                let found = self.feasible(idx + 1, blocks, cap)?;
                blocks.pop();
                if found {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// Smallest number of label-pure groups, pairwise separable by a single
/// coordinate literal whenever their labels differ, that partition the
/// example universe under the instance's concept.
///
/// Exhaustive search over set partitions in restricted-growth order, sizes
/// `1..=max_size` in turn. `budget` caps the total number of search nodes.
/// A cover with overlaps never beats a partition, since disjoint
/// normalization keeps every separator valid without adding components.
pub fn min_exception_free_size(
    instance: &Instance,
    max_size: usize,
    budget: u64,
) -> Result<MinSize> {
    let n = instance.num_examples();
    if n > ORACLE_MAX_EXAMPLES {
        return Err(Error::SizeLimit(format!(
            "{n} examples exceed the oracle cap of {ORACLE_MAX_EXAMPLES}"
        )));
    }
    if instance.d > 64 {
        return Err(Error::SizeLimit(format!(
            "d = {} exceeds 64 coordinates",
            instance.d
        )));
    }
    if n == 0 {
        return Ok(MinSize::Exact(0));
    }
    let masks: Vec<(u64, Label)> = instance
        .examples
        .iter()
        .map(|e| {
            let bits = e
                .bits
                .iter()
                .enumerate()
                .fold(0u64, |acc, (j, &b)| if b { acc | (1 << j) } else { acc });
            (bits, instance.label_of(e.id))
        })
        .collect();
    let full = if instance.d == 64 {
        u64::MAX
    } else {
        (1u64 << instance.d) - 1
    };
    let distinct_labels = masks.iter().map(|(_, y)| *y).collect::<BTreeSet<_>>().len();

    let mut search = Search {
        masks: &masks,
        full,
        nodes: 0,
        budget,
    };
    for cap in distinct_labels.max(1)..=max_size {
        if search.feasible(0, &mut Vec::with_capacity(cap), cap)? {
            return Ok(MinSize::Exact(cap));
        }
    }
    Ok(MinSize::ExceedsMax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::validate::validate_instance;

    /// Pairwise replacement exactly as stated for the disjointness argument,
    /// iterated until no two components overlap.
    fn pairwise_oracle(rep: &Representation, component_of: &[ComponentId]) -> Representation {
        let mut out = rep.clone();
        loop {
            let mut changed = false;
            for a in 0..out.components.len() {
                for b in (a + 1)..out.components.len() {
                    let shared: BTreeSet<_> = out.components[a]
                        .members
                        .intersection(&out.components[b].members)
                        .copied()
                        .collect();
                    if shared.is_empty() {
                        continue;
                    }
                    changed = true;
                    for (i, other) in [(a, b), (b, a)] {
                        let id = out.components[i].id;
                        let keep: BTreeSet<_> = shared
                            .iter()
                            .copied()
                            .filter(|x| component_of[x.0] == id)
                            .collect();
                        let own: BTreeSet<_> = out.components[i]
                            .members
                            .difference(&out.components[other].members)
                            .copied()
                            .collect();
                        out.components[i].members = own.union(&keep).copied().collect();
                    }
                }
            }
            if !changed {
                return out;
            }
        }
    }

    fn overlapping_instance() -> Instance {
        // three label-0 components over d = 2, every pair overlapping
        let mut inst = fixtures::single_component(2, &["00", "01", "10", "11"]);
        let all: BTreeSet<_> = (0..4).map(ExampleId).collect();
        inst.representation.components = (0..3)
            .map(|i| Component {
                id: ComponentId(i),
                label: Label(0),
                members: all.clone(),
            })
            .collect();
        inst.component_of = vec![
            ComponentId(0),
            ComponentId(1),
            ComponentId(2),
            ComponentId(1),
        ];
        inst
    }

    #[test]
    fn normalize_fixed_point_on_disjoint_input() {
        let inst = fixtures::two_blocks();
        let out = normalize_disjoint(&inst.representation, &inst.component_of);
        assert_eq!(out, inst.representation);
    }

    #[test]
    fn normalize_removes_shared_example_from_the_other_component() {
        let mut inst = fixtures::two_blocks();
        // put x1 (assigned to G0) into G1 as well; same labels would be needed
        // for separation, so only check the membership effect here
        inst.representation.components[1]
            .members
            .insert(ExampleId(1));
        let out = normalize_disjoint(&inst.representation, &inst.component_of);
        assert!(!out.components[1].members.contains(&ExampleId(1)));
        assert!(out.components[0].members.contains(&ExampleId(1)));
        assert_eq!(
            out,
            pairwise_oracle(&inst.representation, &inst.component_of)
        );
    }

    #[test]
    fn normalize_three_way_overlap_matches_pairwise_rule() {
        let inst = overlapping_instance();
        assert!(validate_instance(&inst).ok());
        let out = normalize_disjoint(&inst.representation, &inst.component_of);
        assert!(out.is_disjoint());
        assert_eq!(out.len(), 3);
        assert_eq!(
            out,
            pairwise_oracle(&inst.representation, &inst.component_of)
        );
        let renormalized = Instance {
            representation: out.clone(),
            ..inst.clone()
        };
        assert!(validate_instance(&renormalized).ok());
        assert_eq!(normalize_disjoint(&out, &inst.component_of), out);
    }

    #[test]
    fn expansion_without_exceptions_is_normalization() {
        let inst = overlapping_instance();
        let out = expand_representation(&inst).unwrap();
        assert_eq!(
            out.representation,
            normalize_disjoint(&inst.representation, &inst.component_of)
        );
    }

    #[test]
    fn expansion_single_component_one_exception() {
        // m = 1, d = 3: relabel x5 = "101"
        let mut inst = fixtures::single_component(
            3,
            &["000", "100", "010", "110", "001", "101", "011", "111"],
        );
        inst.labels = 2;
        inst.concept_label[5] = Label(1);
        inst.exceptions.insert(ExampleId(5));
        inst.k = 1;
        assert!(validate_instance(&inst).ok());
        let out = expand_representation(&inst).unwrap();
        assert!(out.m() <= 1 + 3);
        assert!(out.computed_exceptions().is_empty());
        let report = validate_instance(&out);
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn identical_twins_with_different_labels_cannot_be_split() {
        let mut inst = fixtures::two_blocks();
        inst.concept_label[0] = Label(1);
        inst.exceptions.insert(ExampleId(0));
        inst.k = 1;
        assert!(matches!(
            expand_representation(&inst),
            Err(Error::Expansion(_))
        ));
    }

    #[test]
    fn hypercube_small_cases() {
        let h2 = hypercube_lower_bound_instance(2).unwrap();
        assert_eq!(h2.num_examples(), 4);
        assert_eq!(h2.exceptions, [ExampleId(0)].into());
        assert_eq!(h2.example(ExampleId(0)).bits, vec![false, false]);
        let h3 = hypercube_lower_bound_instance(3).unwrap();
        assert_eq!(h3.num_examples(), 8);
        assert_eq!(h3.exceptions.len(), 1);
        for d in 1..=5 {
            let h = hypercube_lower_bound_instance(d).unwrap();
            assert!(validate_instance(&h).ok());
            assert_eq!(h.k, 1);
        }
        assert!(matches!(
            hypercube_lower_bound_instance(17),
            Err(Error::SizeLimit(_))
        ));
        assert!(hypercube_lower_bound_instance(0).is_err());
    }

    #[test]
    fn hypercube_expansion_has_d_plus_one_components() {
        for d in 1..=6 {
            let h = hypercube_lower_bound_instance(d).unwrap();
            let out = expand_representation(&h).unwrap();
            assert_eq!(out.m(), d + 1);
            assert!(validate_instance(&out).ok());
        }
    }

    #[test]
    fn oracle_on_small_hypercubes() {
        for (d, want) in [(1, 2), (2, 3), (3, 4)] {
            let h = hypercube_lower_bound_instance(d).unwrap();
            assert_eq!(
                min_exception_free_size(&h, 8, 1_000_000).unwrap(),
                MinSize::Exact(want)
            );
            assert_eq!(
                min_exception_free_size(&h, d, 1_000_000).unwrap(),
                MinSize::ExceedsMax
            );
        }
    }

    #[test]
    fn oracle_exception_free_single_component() {
        let inst = fixtures::single_component(2, &["00", "01", "11"]);
        assert_eq!(
            min_exception_free_size(&inst, 4, 1000).unwrap(),
            MinSize::Exact(1)
        );
    }

    #[test]
    fn oracle_budget_is_enforced() {
        let h = hypercube_lower_bound_instance(3).unwrap();
        assert!(matches!(
            min_exception_free_size(&h, 8, 5),
            Err(Error::BudgetExceeded { budget: 5 })
        ));
    }
}
