//! Instance and stream generators: random instances with planted
//! exceptions, adversarial orderings, the hidden-pair lower-bound family and
//! an i.i.d. sampler with controlled exception mass.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Component, ComponentId, Example, ExampleId, Instance, Label, Literal, Representation,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceParams {
    pub m: usize,
    pub d: usize,
    pub labels: u16,
    pub k: usize,
    pub s: usize,
    pub per_component: usize,
}

/// Label of component `i` when `labels` labels are spread over the components.
pub fn component_label(i: usize, labels: u16) -> Label {
    Label((i % labels as usize) as u16)
}

/// Component pairs `(i, j)`, `i < j`, whose labels differ. Each gets its own
/// separating coordinate.
pub fn separated_pairs(m: usize, labels: u16) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if component_label(i, labels) != component_label(j, labels) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Smallest `d` for which generation reliably succeeds: one coordinate per
/// separated pair plus enough free coordinates to keep every example of a
/// same-label group of components distinct.
pub fn min_features(m: usize, labels: u16, per_component: usize) -> usize {
    let labels = labels.max(1) as usize;
    let group = m.div_ceil(labels).max(1);
    let needed = (per_component * group).saturating_sub(1);
    let free = usize::BITS as usize - needed.leading_zeros() as usize;
    (separated_pairs(m, labels as u16).len() + free).max(1)
}

const DISTINCT_RETRIES: usize = 1000;

/// Random valid instance with exactly `k` exceptions planted by relabeling.
pub fn gen_random_instance(p: &InstanceParams, seed: u64) -> Result<Instance> {
    if p.m == 0 || p.d == 0 || p.labels == 0 || p.per_component == 0 {
        return Err(Error::Generation(
            "m, d, labels and examples per component must be positive".into(),
        ));
    }
    if p.s > p.k {
        return Err(Error::Generation(format!(
            "s = {} exceeds k = {}",
            p.s, p.k
        )));
    }
    let n = p.m * p.per_component;
    if p.k > n {
        return Err(Error::Generation(format!(
            "k = {} exceeds the {n} examples",
            p.k
        )));
    }
    if p.k > 0 && p.labels < 2 {
        return Err(Error::Generation(
            "exceptions need at least two labels".into(),
        ));
    }
    let pairs = separated_pairs(p.m, p.labels);
    if p.d < pairs.len() {
        return Err(Error::Generation(format!(
            "d = {} is smaller than the {} separated component pairs",
            p.d,
            pairs.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fixed: Vec<BTreeMap<usize, bool>> = vec![BTreeMap::new(); p.m];
    for (coord, &(i, j)) in pairs.iter().enumerate() {
        fixed[i].insert(coord, true);
        fixed[j].insert(coord, false);
    }

    let mut seen = HashSet::new();
    let mut examples = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(p.m);
    let mut component_of = Vec::with_capacity(n);
    for (i, fixed) in fixed.iter().enumerate() {
        let mut members = BTreeSet::new();
        for _ in 0..p.per_component {
            let bits = (0..DISTINCT_RETRIES)
                .map(|_| {
                    (0..p.d)
                        .map(|c| fixed.get(&c).copied().unwrap_or_else(|| rng.gen()))
                        .collect::<Vec<bool>>()
                })
                .find(|b| !seen.contains(b))
                .ok_or_else(|| {
                    Error::Generation(format!(
                        "could not draw {} distinct examples for G{i} with d = {}",
                        p.per_component, p.d
                    ))
                })?;
            seen.insert(bits.clone());
            let id = examples.len();
            examples.push(Example::new(id, bits));
            members.insert(ExampleId(id));
            component_of.push(ComponentId(i));
        }
        components.push(Component {
            id: ComponentId(i),
            label: component_label(i, p.labels),
            members,
        });
    }

    let mut representation = Representation {
        components,
        separation: BTreeMap::new(),
    };
    for (coord, &(i, j)) in pairs.iter().enumerate() {
        representation.set_separator(ComponentId(i), ComponentId(j), Literal::positive(coord));
    }

    let mut concept_label: Vec<Label> = component_of
        .iter()
        .map(|g| component_label(g.0, p.labels))
        .collect();
    let mut exceptions = BTreeSet::new();
    for x in index::sample(&mut rng, n, p.k) {
        let own = concept_label[x].0;
        let shift = rng.gen_range(1..p.labels);
        concept_label[x] = Label((own + shift) % p.labels);
        exceptions.insert(ExampleId(x));
    }

    Ok(Instance {
        d: p.d,
        labels: p.labels,
        examples,
        representation,
        component_of,
        concept_label,
        exceptions,
        k: p.k,
        s: p.s,
    })
}

/// Where the exceptions go in an adversarial stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    #[default]
    Uniform,
    Front,
    Back,
}

/// Each exception exactly once, plus `passes` shuffled passes over the
/// non-exceptions, with the exceptions placed per `placement`.
pub fn adversarial_stream(
    instance: &Instance,
    passes: usize,
    placement: Placement,
    seed: u64,
) -> Vec<ExampleId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean: Vec<ExampleId> = instance
        .example_ids()
        .filter(|x| !instance.is_exception(*x))
        .collect();
    let mut rest = Vec::with_capacity(passes * clean.len());
    for _ in 0..passes {
        let mut pass = clean.clone();
        pass.shuffle(&mut rng);
        rest.extend(pass);
    }
    let mut exc: Vec<ExampleId> = instance.exceptions.iter().copied().collect();
    exc.shuffle(&mut rng);
    match placement {
        Placement::Front => exc.into_iter().chain(rest).collect(),
        Placement::Back => rest.into_iter().chain(exc).collect(),
        Placement::Uniform => {
            let total = rest.len() + exc.len();
            let slots: BTreeSet<usize> = index::sample(&mut rng, total, exc.len())
                .into_iter()
                .collect();
            let (mut e, mut r) = (exc.into_iter(), rest.into_iter());
            (0..total)
                .map(|i| {
                    if slots.contains(&i) {
                        e.next()
                    } else {
                        r.next()
                    }
                    .expect("sized")
                })
                .collect()
        }
    }
}

/// A member of the hidden-pair family together with its stream.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBound {
    pub instance: Instance,
    pub stream: Vec<ExampleId>,
    /// `hidden[p]` is true when pair `p` is in `S`.
    pub hidden: Vec<bool>,
    /// The pairs in index order; example `p` is `x_{i,j}` for `pairs[p]`.
    pub pairs: Vec<(usize, usize)>,
}

/// Index of pair `(i, j)`, `i < j < m`, in lexicographic order.
pub fn pair_index(i: usize, j: usize, m: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * (2 * m - i - 1) / 2 + (j - i - 1)
}

/// The hidden-pair lower-bound family for `m` components.
///
/// Pair `(i, j)` owns coordinates `2p` and `2p + 1`; `G_i` and `G_j` are
/// separated by coordinate `2p + S_{i,j}`, true on `G_i`. Example `x_{i,j}`
/// has coordinate `2p + 1` on and `2p` off, so it falls in `G_i` exactly when
/// `(i, j) ∈ S`. Every coordinate of a pair `(a, b)` sharing one endpoint
/// `c` with `(i, j)` takes the value placing it on `c`'s side, which keeps
/// `x_{i,j}` out of every other component.
pub fn lower_bound_stream(m: usize, seed: u64) -> Result<LowerBound> {
    if m < 2 {
        return Err(Error::Generation(format!(
            "the lower-bound family needs m >= 2, got {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect();
    let hidden: Vec<bool> = pairs.iter().map(|_| rng.gen()).collect();
    let d = 2 * pairs.len();

    let mut examples = Vec::with_capacity(pairs.len());
    let mut component_of = Vec::with_capacity(pairs.len());
    let mut members = vec![BTreeSet::new(); m];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let mut bits = vec![false; d];
        for (q, &(a, _)) in pairs.iter().enumerate() {
            let value = (q != p).then_some(a == i || a == j);
            match value {
                // own pair: 2p off, 2p + 1 on
                None => {
                    bits[2 * q] = false;
                    bits[2 * q + 1] = true;
                }
                Some(v) => {
                    bits[2 * q] = v;
                    bits[2 * q + 1] = v;
                }
            }
        }
        let home = if hidden[p] { i } else { j };
        examples.push(Example::new(p, bits));
        component_of.push(ComponentId(home));
        members[home].insert(ExampleId(p));
    }

    let mut representation = Representation {
        components: members
            .into_iter()
            .enumerate()
            .map(|(i, members)| Component {
                id: ComponentId(i),
                label: Label(i as u16),
                members,
            })
            .collect(),
        separation: BTreeMap::new(),
    };
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let coord = 2 * p + usize::from(hidden[p]);
        representation.set_separator(ComponentId(i), ComponentId(j), Literal::positive(coord));
    }
    let concept_label = component_of.iter().map(|g| Label(g.0 as u16)).collect();

    let mut stream: Vec<ExampleId> = (0..pairs.len()).map(ExampleId).collect();
    stream.shuffle(&mut rng);

    Ok(LowerBound {
        instance: Instance {
            d,
            labels: m as u16,
            examples,
            representation,
            component_of,
            concept_label,
            exceptions: BTreeSet::new(),
            k: 0,
            s: 0,
        },
        stream,
        hidden,
        pairs,
    })
}

/// I.i.d. draws where the exceptions share mass `ε` equally and the other
/// examples share the rest equally.
#[derive(Clone, Debug)]
pub struct StochasticSampler {
    weights: Vec<f64>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl StochasticSampler {
    pub fn new(instance: &Instance, epsilon: f64, sigma: f64, seed: u64) -> Result<Self> {
        let weights = exception_weights(instance, epsilon, sigma)?;
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Generation(e.to_string()))?;
        Ok(Self {
            weights,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Probability of each example, indexed by id.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn draw(&mut self, n: usize) -> Vec<ExampleId> {
        self.take(n).collect()
    }
}

impl Iterator for StochasticSampler {
    type Item = ExampleId;

    fn next(&mut self) -> Option<ExampleId> {
        Some(ExampleId(self.dist.sample(&mut self.rng)))
    }
}

/// Per-example probabilities for the sampler. Each exception gets
/// `ε / |M|`, which must not exceed `σ`.
pub fn exception_weights(instance: &Instance, epsilon: f64, sigma: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&epsilon) || sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Generation(format!(
            "invalid masses epsilon = {epsilon}, sigma = {sigma}"
        )));
    }
    let n = instance.num_examples();
    let exc = instance.exceptions.len();
    let clean = n - exc;
    if clean == 0 {
        return Err(Error::Generation("every example is an exception".into()));
    }
    let exc_mass = if exc == 0 { 0.0 } else { epsilon };
    let each_exc = if exc == 0 { 0.0 } else { exc_mass / exc as f64 };
    if each_exc > sigma * (1.0 + 1e-12) {
        return Err(Error::Generation(format!(
            "exception mass {each_exc} per example exceeds sigma = {sigma}"
        )));
    }
    let each_clean = (1.0 - exc_mass) / clean as f64;
    Ok(instance
        .example_ids()
        .map(|x| {
            if instance.is_exception(x) {
                each_exc
            } else {
                each_clean
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::validate_instance;

    fn params(m: usize, d: usize, labels: u16, k: usize, s: usize) -> InstanceParams {
        InstanceParams {
            m,
            d,
            labels,
            k,
            s,
            per_component: 4,
        }
    }

    #[test]
    fn single_component_needs_no_separators() {
        let inst = gen_random_instance(&params(1, 3, 1, 0, 0), 7).unwrap();
        assert!(inst.representation.separation.is_empty());
        assert!(validate_instance(&inst).ok());
    }

    #[test]
    fn three_distinct_labels_use_three_coordinates() {
        let mut p = params(3, 3, 3, 0, 0);
        p.per_component = 1;
        let inst = gen_random_instance(&p, 1).unwrap();
        assert_eq!(inst.representation.separation.len(), 6);
        let coords: BTreeSet<usize> = inst
            .representation
            .separation
            .values()
            .map(|l| l.feature.0)
            .collect();
        assert_eq!(coords.len(), 3);
        assert!(validate_instance(&inst).ok());
    }

    #[test]
    fn planted_exceptions() {
        let inst = gen_random_instance(&params(3, 10, 3, 2, 1), 11).unwrap();
        assert_eq!(inst.exceptions.len(), 2);
        assert_eq!(inst.computed_exceptions(), inst.exceptions);
        assert!(validate_instance(&inst).ok());
    }

    #[test]
    fn infeasible_parameters() {
        assert!(gen_random_instance(&params(4, 5, 4, 0, 0), 0).is_err());
        assert!(gen_random_instance(&params(2, 4, 1, 1, 0), 0).is_err());
        assert!(gen_random_instance(&params(2, 4, 2, 1, 2), 0).is_err());
        let mut p = params(2, 1, 2, 0, 0);
        p.per_component = 2;
        assert!(gen_random_instance(&p, 0).is_err());
    }

    #[test]
    fn min_features_is_sufficient() {
        for (m, labels, per) in [
            (2, 2, 1),
            (3, 2, 5),
            (5, 5, 8),
            (8, 8, 6),
            (6, 1, 4),
            (7, 3, 5),
        ] {
            let d = min_features(m, labels, per);
            let p = InstanceParams {
                m,
                d,
                labels,
                k: 0,
                s: 0,
                per_component: per,
            };
            assert!(
                gen_random_instance(&p, 3).is_ok(),
                "{m} {labels} {per} d={d}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = params(4, 12, 3, 3, 2);
        assert_eq!(
            gen_random_instance(&p, 5).unwrap(),
            gen_random_instance(&p, 5).unwrap()
        );
    }

    #[test]
    fn adversarial_placements() {
        let inst = gen_random_instance(&params(3, 10, 3, 2, 1), 2).unwrap();
        let n = inst.num_examples();
        for placement in [Placement::Uniform, Placement::Front, Placement::Back] {
            let s = adversarial_stream(&inst, 3, placement, 9);
            assert_eq!(s.len(), 3 * (n - 2) + 2);
            let exc: Vec<usize> = (0..s.len()).filter(|&i| inst.is_exception(s[i])).collect();
            assert_eq!(exc.len(), 2);
            match placement {
                Placement::Front => assert_eq!(exc, vec![0, 1]),
                Placement::Back => assert_eq!(exc, vec![s.len() - 2, s.len() - 1]),
                Placement::Uniform => {}
            }
        }
        assert_eq!(
            adversarial_stream(&inst, 2, Placement::Uniform, 4),
            adversarial_stream(&inst, 2, Placement::Uniform, 4)
        );
    }

    #[test]
    fn pair_indices_are_lexicographic() {
        let m = 5;
        let mut p = 0;
        for i in 0..m {
            for j in i + 1..m {
                assert_eq!(pair_index(i, j, m), p);
                p += 1;
            }
        }
    }

    #[test]
    fn lower_bound_membership_follows_hidden_pairs() {
        for m in 2..=6 {
            for seed in 0..5 {
                let lb = lower_bound_stream(m, seed).unwrap();
                let inst = &lb.instance;
                assert!(validate_instance(inst).ok(), "m={m} seed={seed}");
                assert_eq!(inst.d, m * (m - 1));
                assert_eq!(inst.num_examples(), m * (m - 1) / 2);
                for (p, &(i, j)) in lb.pairs.iter().enumerate() {
                    let g = inst.component_of(ExampleId(p)).0;
                    assert_eq!(g == i, lb.hidden[p]);
                    assert!(g == i || g == j);
                    // membership by the defining conjunction of each component
                    let x = inst.example(ExampleId(p));
                    for l in 0..m {
                        let inside = (0..m).filter(|&o| o != l).all(|o| {
                            let (a, b) = (l.min(o), l.max(o));
                            let q = pair_index(a, b, m);
                            let lit = Literal::positive(2 * q + usize::from(lb.hidden[q]));
                            x.satisfies(if a == l { lit } else { lit.negate() })
                        });
                        assert_eq!(inside, l == g, "x{p} in G{l}");
                    }
                }
            }
        }
    }

    #[test]
    fn lower_bound_is_deterministic() {
        assert_eq!(
            lower_bound_stream(4, 8).unwrap(),
            lower_bound_stream(4, 8).unwrap()
        );
        assert!(lower_bound_stream(1, 0).is_err());
    }

    #[test]
    fn sampler_without_exception_mass_never_draws_exceptions() {
        let inst = gen_random_instance(&params(2, 6, 2, 2, 2), 4).unwrap();
        let mut s = StochasticSampler::new(&inst, 0.0, 0.0, 1).unwrap();
        assert!(s.draw(5000).iter().all(|x| !inst.is_exception(*x)));
    }

    #[test]
    fn sampler_exception_rate() {
        let mut p = params(3, 12, 3, 4, 4);
        p.per_component = 10;
        let inst = gen_random_instance(&p, 4).unwrap();
        let mut s = StochasticSampler::new(&inst, 0.1, 0.1, 2).unwrap();
        let hits = s
            .draw(100_000)
            .iter()
            .filter(|x| inst.is_exception(**x))
            .count();
        let rate = hits as f64 / 100_000.0;
        assert!((0.094..=0.106).contains(&rate), "{rate}");
    }

    #[test]
    fn single_exception_takes_all_mass() {
        let inst = gen_random_instance(&params(2, 6, 2, 1, 1), 4).unwrap();
        let mut s = StochasticSampler::new(&inst, 0.2, 0.2, 3).unwrap();
        let exc: BTreeSet<ExampleId> = s
            .draw(2000)
            .into_iter()
            .filter(|x| inst.is_exception(*x))
            .collect();
        assert_eq!(exc.len(), 1);
    }

    #[test]
    fn sampler_rejects_mass_above_sigma() {
        let inst = gen_random_instance(&params(2, 6, 2, 2, 2), 4).unwrap();
        assert!(StochasticSampler::new(&inst, 0.2, 0.05, 3).is_err());
        assert!(StochasticSampler::new(&inst, 0.2, 0.1, 3).is_ok());
    }
}
