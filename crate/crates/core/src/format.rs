//! JSON file formats for instances and streams.
//!
//! Field order is fixed by the wire structs below, so writing a parsed file
//! reproduces it byte for byte.

use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{
    Component, ComponentId, Example, ExampleId, Instance, Label, Literal, Representation,
};

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct InstanceFile {
    d: usize,
    labels: u16,
    k: usize,
    s: usize,
    examples: Vec<ExampleRecord>,
    components: Vec<ComponentRecord>,
    separation: Vec<SeparationRecord>,
    component_of: Vec<usize>,
    concept_label: Vec<u16>,
    exceptions: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    id: usize,
    /// Coordinate 0 first, as `'0'`/`'1'` characters.
    bits: String,
}

#[derive(Serialize, Deserialize)]
struct ComponentRecord {
    id: usize,
    label: u16,
    members: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SeparationRecord {
    i: usize,
    j: usize,
    feature: usize,
    polarity: bool,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        Self {
            d: inst.d,
            labels: inst.labels,
            k: inst.k,
            s: inst.s,
            examples: inst
                .examples
                .iter()
                .map(|e| ExampleRecord {
                    id: e.id.0,
                    bits: e.bit_string(),
                })
                .collect(),
            components: inst
                .representation
                .components
                .iter()
                .map(|c| ComponentRecord {
                    id: c.id.0,
                    label: c.label.0,
                    members: c.members.iter().map(|x| x.0).collect(),
                })
                .collect(),
            separation: inst
                .representation
                .separation
                .iter()
                .map(|(&(i, j), lit)| SeparationRecord {
                    i: i.0,
                    j: j.0,
                    feature: lit.feature.0,
                    polarity: lit.polarity,
                })
                .collect(),
            component_of: inst.component_of.iter().map(|g| g.0).collect(),
            concept_label: inst.concept_label.iter().map(|y| y.0).collect(),
            exceptions: inst.exceptions.iter().map(|x| x.0).collect(),
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = String;

    fn try_from(file: InstanceFile) -> std::result::Result<Self, Self::Error> {
        let examples = file
            .examples
            .into_iter()
            .map(|r| {
                Example::from_bit_str(r.id, &r.bits)
                    .ok_or_else(|| format!("example {} has a non-binary bit string", r.id))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut representation = Representation {
            components: file
                .components
                .into_iter()
                .map(|c| Component {
                    id: ComponentId(c.id),
                    label: Label(c.label),
                    members: c.members.into_iter().map(ExampleId).collect(),
                })
                .collect(),
            ..Representation::default()
        };
        for r in file.separation {
            let prev = representation.separation.insert(
                (ComponentId(r.i), ComponentId(r.j)),
                Literal::new(r.feature, r.polarity),
            );
            if prev.is_some() {
                return Err(format!("duplicate separation entry ({}, {})", r.i, r.j));
            }
        }
        Ok(Instance {
            d: file.d,
            labels: file.labels,
            examples,
            representation,
            component_of: file.component_of.into_iter().map(ComponentId).collect(),
            concept_label: file.concept_label.into_iter().map(Label).collect(),
            exceptions: file
                .exceptions
                .into_iter()
                .map(ExampleId)
                .collect::<BTreeSet<_>>(),
            k: file.k,
            s: file.s,
        })
    }
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = InstanceFile::deserialize(deserializer)?;
        Instance::try_from(file).map_err(serde::de::Error::custom)
    }
}

pub fn instance_to_json(instance: &Instance) -> String {
    let mut s = serde_json::to_string_pretty(instance).expect("instance serializes");
    s.push('\n');
    s
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_instance(path: &std::path::Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    instance_from_json(&text)
}

pub fn write_instance(path: &std::path::Path, instance: &Instance) -> Result<()> {
    std::fs::write(path, instance_to_json(instance))?;
    Ok(())
}

/// An ordered stream of example ids, stored next to its instance file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamFile {
    pub examples: Vec<usize>,
}

impl StreamFile {
    pub fn from_ids(ids: &[ExampleId]) -> Self {
        Self {
            examples: ids.iter().map(|x| x.0).collect(),
        }
    }

    pub fn ids(&self) -> Vec<ExampleId> {
        self.examples.iter().copied().map(ExampleId).collect()
    }

    /// Checks every id against the instance universe.
    pub fn check(&self, instance: &Instance) -> Result<()> {
        match self
            .examples
            .iter()
            .find(|&&x| x >= instance.num_examples())
        {
            Some(x) => Err(Error::InvalidInstance(format!(
                "stream refers to x{x} but the instance has {} examples",
                instance.num_examples()
            ))),
            None => Ok(()),
        }
    }
}
