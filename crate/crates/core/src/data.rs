//! Multiple-instance data: instances, bags, labeled samples and the instance pool.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single point of the instance space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance(Vec<f64>);

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Instance(values)
    }

    /// Handle for an instance that only exists as a row of a precomputed Gram matrix.
    pub fn from_index(index: usize) -> Self {
        Instance(vec![index as f64])
    }

    /// Row index of a precomputed-kernel handle.
    pub fn as_index(&self) -> Option<usize> {
        match self.0.as_slice() {
            [v] if *v >= 0.0 && v.fract() == 0.0 => Some(*v as usize),
            _ => None,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    fn bit_key(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

impl From<Vec<f64>> for Instance {
    fn from(values: Vec<f64>) -> Self {
        Instance(values)
    }
}

/// Bag label. Serialized as `-1` / `+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    /// `sign(0) = +1`.
    pub fn from_margin(margin: f64) -> Self {
        if margin >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(Error::Validation(format!("label must be -1 or +1, got {other}"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.as_i8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// A finite, ordered set of instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub instances: Vec<Instance>,
}

impl Bag {
    pub fn new(instances: Vec<Instance>) -> Self {
        Bag { instances }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Bag::new(rows.into_iter().map(Instance::new).collect())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Dimension of the first instance, if any.
    pub fn dim(&self) -> Option<usize> {
        self.instances.first().map(Instance::dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledBag {
    pub bag: Bag,
    pub label: Label,
}

impl LabeledBag {
    pub fn new(bag: Bag, label: Label) -> Self {
        LabeledBag { bag, label }
    }
}

/// One problem found by [`validate_bags`].
#[derive(Clone, Debug, PartialEq)]
pub enum Issue {
    EmptySample,
    EmptyBag {
        bag: usize,
    },
    ZeroDimension {
        bag: usize,
        instance: usize,
    },
    DimensionMismatch {
        bag: usize,
        instance: usize,
        expected: usize,
        got: usize,
    },
    NonFinite {
        bag: usize,
        instance: usize,
        coord: usize,
    },
    SingleClass {
        label: Label,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::EmptySample => write!(f, "sample has no bags"),
            Issue::EmptyBag { bag } => write!(f, "bag {bag} is empty"),
            Issue::ZeroDimension { bag, instance } => {
                write!(f, "bag {bag} instance {instance} has dimension 0")
            }
            Issue::DimensionMismatch {
                bag,
                instance,
                expected,
                got,
            } => write!(
                f,
                "bag {bag} instance {instance} has dimension {got}, expected {expected}"
            ),
            Issue::NonFinite { bag, instance, coord } => {
                write!(f, "bag {bag} instance {instance} coordinate {coord} is not finite")
            }
            Issue::SingleClass { label } => write!(f, "single class: every bag is labeled {label}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }

    fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
            Err(Error::Validation(msgs.join("; ")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Check every structural invariant of a labeled sample, including the
/// presence of both classes.
pub fn validate_bags(items: &[LabeledBag]) -> ValidationReport {
    let mut report = structural_issues(items);
    if !items.is_empty() {
        let first = items[0].label;
        if items.iter().all(|lb| lb.label == first) {
            report.issues.push(Issue::SingleClass { label: first });
        }
    }
    report
}

fn structural_issues(items: &[LabeledBag]) -> ValidationReport {
    let mut issues = Vec::new();
    if items.is_empty() {
        issues.push(Issue::EmptySample);
        return ValidationReport { issues };
    }
    let expected = items.iter().find_map(|lb| lb.bag.dim());
    for (b, lb) in items.iter().enumerate() {
        if lb.bag.is_empty() {
            issues.push(Issue::EmptyBag { bag: b });
        }
        for (k, inst) in lb.bag.instances.iter().enumerate() {
            if inst.dim() == 0 {
                issues.push(Issue::ZeroDimension { bag: b, instance: k });
                continue;
            }
            if let Some(expected) = expected {
                if inst.dim() != expected {
                    issues.push(Issue::DimensionMismatch {
                        bag: b,
                        instance: k,
                        expected,
                        got: inst.dim(),
                    });
                }
            }
            if let Some(coord) = inst.values().iter().position(|v| !v.is_finite()) {
                issues.push(Issue::NonFinite {
                    bag: b,
                    instance: k,
                    coord,
                });
            }
        }
    }
    ValidationReport { issues }
}

/// An ordered, structurally valid list of labeled bags.
///
/// Construction rejects empty samples, empty bags, mixed dimensions and
/// non-finite values. A single-class sample is allowed here (prediction
/// inputs may be single-class); training entry points call
/// [`Sample::require_both_classes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    items: Vec<LabeledBag>,
}

impl Sample {
    pub fn new(items: Vec<LabeledBag>) -> Result<Self> {
        structural_issues(&items).into_result()?;
        Ok(Sample { items })
    }

    pub fn items(&self) -> &[LabeledBag] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items[0].bag.instances[0].dim()
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.items.iter().map(|lb| lb.label)
    }

    pub fn bags(&self) -> impl Iterator<Item = &Bag> + '_ {
        self.items.iter().map(|lb| &lb.bag)
    }

    pub fn require_both_classes(&self) -> Result<()> {
        validate_sample(self).into_result()
    }

    /// Sub-sample with the given bag indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Sample> {
        Sample::new(indices.iter().map(|&i| self.items[i].clone()).collect())
    }

    pub fn into_items(self) -> Vec<LabeledBag> {
        self.items
    }
}

pub fn validate_sample(sample: &Sample) -> ValidationReport {
    validate_bags(&sample.items)
}

/// Where a pool instance came from: bag index and position within that bag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub bag: usize,
    pub offset: usize,
}

/// The instances shapelets are expanded over, with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePool {
    instances: Vec<Instance>,
    origin: Vec<Origin>,
}

impl InstancePool {
    pub fn from_parts(instances: Vec<Instance>, origin: Vec<Origin>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Validation("instance pool is empty".into()));
        }
        if instances.len() != origin.len() {
            return Err(Error::LengthMismatch {
                expected: instances.len(),
                got: origin.len(),
            });
        }
        let dim = instances[0].dim();
        if let Some(bad) = instances.iter().find(|i| i.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(InstancePool { instances, origin })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn origin(&self) -> &[Origin] {
        &self.origin
    }

    pub fn get(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances[0].dim()
    }
}

/// Union of all bag instances with exact (bitwise) duplicates removed,
/// keeping first occurrences in bag order then within-bag order.
pub fn build_pool(sample: &Sample) -> Result<InstancePool> {
    if sample.is_empty() {
        return Err(Error::Validation("sample has no bags".into()));
    }
    let mut seen = HashSet::new();
    let mut instances = Vec::new();
    let mut origin = Vec::new();
    for (b, bag) in sample.bags().enumerate() {
        for (k, inst) in bag.instances.iter().enumerate() {
            if seen.insert(inst.bit_key()) {
                instances.push(inst.clone());
                origin.push(Origin { bag: b, offset: k });
            }
        }
    }
    InstancePool::from_parts(instances, origin)
}
