//! Instance and allocation data model with their JSON file formats.
//!
//! Agents and items are 0-based in memory and 1-based on disk.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// One chore: its disutility for each agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Item {
    pub d: Vec<Rational>,
}

/// An ordered chore stream; item order is arrival order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct Instance {
    pub n: usize,
    pub items: Vec<Item>,
}

#[derive(Deserialize)]
struct RawInstance {
    n: usize,
    items: Vec<Item>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        Instance::new(raw.n, raw.items.into_iter().map(|i| i.d).collect())
    }
}

impl Instance {
    pub fn new(n: usize, rows: Vec<Vec<Rational>>) -> Result<Self> {
        let inst = Instance { n, items: rows.into_iter().map(|d| Item { d }).collect() };
        inst.validate()?;
        Ok(inst)
    }

    /// An instance with no items yet; items arrive through [`Instance::push`].
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("instance needs at least one agent".into()));
        }
        for (j, item) in self.items.iter().enumerate() {
            self.check_row(j, &item.d)?;
        }
        Ok(())
    }

    fn check_row(&self, j: usize, d: &[Rational]) -> Result<()> {
        if d.len() != self.n {
            return Err(Error::LengthMismatch { item: j + 1, expected: self.n, found: d.len() });
        }
        if let Some(i) = d.iter().position(|v| !v.is_positive()) {
            return Err(Error::NonPositive(format!("item {} agent {} has disutility {}", j + 1, i + 1, d[i])));
        }
        Ok(())
    }

    pub fn push(&mut self, d: Vec<Rational>) -> Result<()> {
        self.check_row(self.items.len(), &d)?;
        self.items.push(Item { d });
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.items.len()
    }

    pub fn value(&self, agent: usize, item: usize) -> &Rational {
        &self.items[item].d[agent]
    }

    /// Agent `agent`'s disutility for every item, in arrival order.
    pub fn agent_values(&self, agent: usize) -> Vec<Rational> {
        self.items.iter().map(|it| it.d[agent].clone()).collect()
    }

    pub fn bundle_value(&self, agent: usize, items: &[usize]) -> Rational {
        items.iter().map(|&j| &self.items[j].d[agent]).sum()
    }

    pub fn total_value(&self, agent: usize) -> Rational {
        self.items.iter().map(|it| &it.d[agent]).sum()
    }

    /// Restriction to the first `m` items.
    pub fn prefix(&self, m: usize) -> Instance {
        Instance { n: self.n, items: self.items[..m.min(self.items.len())].to_vec() }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let inst: Instance = serde_json::from_slice(bytes)?;
        Ok(inst)
    }

    /// Canonical compact JSON followed by a newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("instance serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Parses an instance file.
pub fn load_instance(bytes: &[u8]) -> Result<Instance> {
    Instance::from_json(bytes)
}

/// Assignment of every arrived item to exactly one agent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Allocation {
    pub assignment: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct AllocationFile {
    assignment: Vec<usize>,
}

impl Serialize for Allocation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AllocationFile { assignment: self.assignment.iter().map(|a| a + 1).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Allocation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = AllocationFile::deserialize(d)?;
        if f.assignment.contains(&0) {
            return Err(serde::de::Error::custom("agent indices are 1-based"));
        }
        Ok(Allocation { assignment: f.assignment.into_iter().map(|a| a - 1).collect() })
    }
}

impl Allocation {
    pub fn new(assignment: Vec<usize>) -> Self {
        Allocation { assignment }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Checks that the allocation covers exactly the instance's items with valid agents.
    pub fn validate_for(&self, inst: &Instance) -> Result<()> {
        if self.assignment.len() != inst.m() {
            return Err(Error::InvalidInput(format!(
                "allocation covers {} items, instance has {}",
                self.assignment.len(),
                inst.m()
            )));
        }
        if let Some(j) = self.assignment.iter().position(|&a| a >= inst.n) {
            return Err(Error::InvalidInput(format!(
                "item {} assigned to agent {} but n = {}",
                j + 1,
                self.assignment[j] + 1,
                inst.n
            )));
        }
        Ok(())
    }

    /// Bundles `A_1..A_n` as lists of item indices.
    pub fn bundles(&self, n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n];
        for (j, &a) in self.assignment.iter().enumerate() {
            out[a].push(j);
        }
        out
    }

    pub fn bundle_value(&self, inst: &Instance, agent: usize) -> Rational {
        self.assignment.iter().enumerate().filter(|(_, &a)| a == agent).map(|(j, _)| inst.value(agent, j)).sum()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("allocation serializes");
        s.push('\n');
        s
    }
}

/// An n-way partition of item indices, 1-based when serialized.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Partition(pub Vec<Vec<usize>>);

impl Partition {
    pub fn bundles(&self) -> &[Vec<usize>] {
        &self.0
    }

    /// True when the bundles are exactly `n` disjoint sets covering `0..m`.
    pub fn is_partition_of(&self, n: usize, m: usize) -> bool {
        if self.0.len() != n {
            return false;
        }
        let mut seen = HashSet::with_capacity(m);
        for &j in self.0.iter().flatten() {
            if j >= m || !seen.insert(j) {
                return false;
            }
        }
        seen.len() == m
    }

    /// Largest bundle disutility under `agent`'s values.
    pub fn max_bundle(&self, inst: &Instance, agent: usize) -> Rational {
        self.0.iter().map(|b| inst.bundle_value(agent, b)).max().unwrap_or_else(Rational::zero)
    }

    /// Largest bundle sum under an explicit value list.
    pub fn max_bundle_of(&self, values: &[Rational]) -> Rational {
        self.0.iter().map(|b| b.iter().map(|&j| &values[j]).sum::<Rational>()).max().unwrap_or_else(Rational::zero)
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let shifted: Vec<Vec<usize>> = self.0.iter().map(|b| b.iter().map(|j| j + 1).collect()).collect();
        shifted.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<Vec<usize>>::deserialize(d)?;
        if raw.iter().flatten().any(|&j| j == 0) {
            return Err(serde::de::Error::custom("item indices are 1-based"));
        }
        Ok(Partition(raw.into_iter().map(|b| b.into_iter().map(|j| j - 1).collect()).collect()))
    }
}

/// `k`: most distinct disutilities of any agent; `D`: largest per-agent max/min ratio.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub k: usize,
    #[serde(rename = "D")]
    pub spread: Rational,
}

pub fn instance_stats(inst: &Instance) -> Result<InstanceStats> {
    if inst.items.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let mut k = 0;
    let mut spread = Rational::one();
    for i in 0..inst.n {
        let distinct: HashSet<&Rational> = inst.items.iter().map(|it| &it.d[i]).collect();
        k = k.max(distinct.len());
        let max = distinct.iter().max().expect("nonempty");
        let min = distinct.iter().min().expect("nonempty");
        let ratio = *max / *min;
        if ratio > spread {
            spread = ratio;
        }
    }
    Ok(InstanceStats { k, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn loads_minimal_instance() {
        let inst = load_instance(br#"{"n": 2, "items": [{"d": ["1", "1"]}]}"#).unwrap();
        assert_eq!(inst.n, 2);
        assert_eq!(inst.items, vec![Item { d: vec![q("1"), q("1")] }]);
    }

    #[test]
    fn loads_rational_strings() {
        let inst = load_instance(br#"{"n": 1, "items": [{"d": ["1/3"]}]}"#).unwrap();
        assert_eq!(inst.items[0].d[0], Rational::ratio(1, 3));
    }

    #[test]
    fn rejects_bad_instances() {
        let zero = load_instance(br#"{"n": 1, "items": [{"d": ["0"]}]}"#);
        assert!(zero.unwrap_err().to_string().contains("non-positive"));
        let neg = load_instance(br#"{"n": 1, "items": [{"d": ["-1/2"]}]}"#);
        assert!(neg.is_err());
        let short = load_instance(br#"{"n": 2, "items": [{"d": ["1"]}]}"#);
        assert!(short.unwrap_err().to_string().contains("expected 2"));
        assert!(load_instance(br#"{"n": 2, "items": [{"d": [1, 1]}]}"#).is_err());
        assert!(load_instance(b"not json").is_err());
        assert!(load_instance(br#"{"n": 0, "items": []}"#).is_err());
    }

    #[test]
    fn stats_examples() {
        let two = Instance::new(2, vec![vec![q("1"), q("2")], vec![q("1"), q("4")]]).unwrap();
        assert_eq!(instance_stats(&two).unwrap(), InstanceStats { k: 2, spread: q("2") });
        let single = Instance::new(3, vec![vec![q("5"), q("1/2"), q("7")]]).unwrap();
        assert_eq!(instance_stats(&single).unwrap(), InstanceStats { k: 1, spread: q("1") });
        let one = Instance::new(1, vec![vec![q("1")], vec![q("8")]]).unwrap();
        assert_eq!(instance_stats(&one).unwrap(), InstanceStats { k: 2, spread: q("8") });
        assert!(matches!(instance_stats(&Instance::empty(2).unwrap()), Err(Error::EmptyInstance)));
    }

    #[test]
    fn allocation_file_is_one_based() {
        let a = Allocation::new(vec![0, 1, 1]);
        assert_eq!(a.to_json(), "{\"assignment\":[1,2,2]}\n");
        assert_eq!(Allocation::from_json(a.to_json().as_bytes()).unwrap(), a);
        assert!(Allocation::from_json(br#"{"assignment":[0]}"#).is_err());
        let p = Partition(vec![vec![0, 2], vec![1]]);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[1,3],[2]]");
        assert!(p.is_partition_of(2, 3));
        assert!(!p.is_partition_of(2, 4));
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (1usize..5).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec((1i64..1_000_000, 1i64..1000), n), 0..12).prop_map(
                move |rows| {
                    let rows =
                        rows.into_iter().map(|r| r.into_iter().map(|(a, b)| Rational::ratio(a, b)).collect()).collect();
                    Instance::new(n, rows).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn instance_round_trip(inst in arb_instance()) {
            let s = inst.to_json();
            let back = load_instance(s.as_bytes()).unwrap();
            prop_assert_eq!(&back, &inst);
            prop_assert_eq!(back.to_json(), s);
        }

        #[test]
        fn allocation_round_trip(v in prop::collection::vec(0usize..7, 0..40)) {
            let a = Allocation::new(v);
            let s = a.to_json();
            let back = Allocation::from_json(s.as_bytes()).unwrap();
            prop_assert_eq!(back.to_json(), s);
            prop_assert_eq!(back, a);
        }
    }
}
