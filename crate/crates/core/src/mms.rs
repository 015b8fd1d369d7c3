//! Min-max share (MMS) computation for chores.
//!
//! `MMS_i` is the smallest achievable largest-bundle disutility over all
//! n-partitions of the items, measured with agent `i`'s values. Exact
//! values come from a branch-and-bound search on small instances; larger
//! instances get certified lower/upper bounds with witness partitions.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, Partition};
use crate::rational::Rational;

/// Largest item count handled by [`mms_exact`] for `n` agents.
pub fn exact_limit(n: usize) -> usize {
    match n {
        0 | 1 => usize::MAX,
        2 => 24,
        3 => 18,
        4 => 16,
        _ => 14,
    }
}

/// An optimal partition and its value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MmsSolution {
    pub value: Rational,
    pub witness: Partition,
}

/// Exact MMS of `values` split into `n` bundles.
pub fn mms_exact(values: &[Rational], n: usize) -> Result<MmsSolution> {
    mms_exact_with_limit(values, n, exact_limit(n))
}

pub fn mms_exact_with_limit(values: &[Rational], n: usize, limit: usize) -> Result<MmsSolution> {
    if n == 0 {
        return Err(Error::InvalidInput("MMS needs at least one bundle".into()));
    }
    if values.is_empty() {
        return Err(Error::EmptyInstance);
    }
    if let Some(v) = values.iter().find(|v| !v.is_positive()) {
        return Err(Error::NonPositive(format!("MMS input value {v}")));
    }
    let m = values.len();
    if n == 1 {
        return Ok(MmsSolution { value: values.iter().sum(), witness: Partition(vec![(0..m).collect()]) });
    }
    if m <= n {
        let mut bundles: Vec<Vec<usize>> = (0..m).map(|j| vec![j]).collect();
        bundles.resize(n, Vec::new());
        return Ok(MmsSolution { value: values.iter().max().expect("nonempty").clone(), witness: Partition(bundles) });
    }
    if m > limit {
        return Err(Error::InstanceTooLarge { m, n, limit });
    }

    // Scale to integers by the lcm of denominators.
    let lcm = values.iter().fold(BigInt::one(), |acc, v| acc.lcm(&v.denom()));
    let ints: Vec<BigUint> =
        values.iter().map(|v| (v.numer() * (&lcm / v.denom())).to_biguint().expect("positive")).collect();
    let total: BigUint = ints.iter().sum();
    let assign = if total.bits() < 120 {
        let small: Vec<u128> = ints.iter().map(|x| x.to_u128().expect("fits")).collect();
        branch_and_bound(&small, n)
    } else {
        branch_and_bound(&ints, n)
    };
    let mut bundles = vec![Vec::new(); n];
    for (j, b) in assign.into_iter().enumerate() {
        bundles[b].push(j);
    }
    let witness = Partition(bundles);
    let value = witness.max_bundle_of(values);
    Ok(MmsSolution { value, witness })
}

trait Weight: Clone + Ord + Zero + One + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> {
    fn div_ceil_by(&self, n: usize) -> Self;
}

impl Weight for u128 {
    fn div_ceil_by(&self, n: usize) -> Self {
        let n = n as u128;
        self / n + u128::from(!self.is_multiple_of(&n))
    }
}

impl Weight for BigUint {
    fn div_ceil_by(&self, n: usize) -> Self {
        Integer::div_ceil(self, &BigUint::from(n))
    }
}

/// Returns a bundle index per item minimising the largest bundle.
fn branch_and_bound<T: Weight>(weights: &[T], n: usize) -> Vec<usize> {
    let m = weights.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
    let sorted: Vec<T> = order.iter().map(|&j| weights[j].clone()).collect();
    let total = sorted.iter().cloned().fold(T::zero(), |a, b| a + b);
    let lower = sorted[0].clone().max(total.div_ceil_by(n));

    // LPT incumbent.
    let mut loads = vec![T::zero(); n];
    let mut best_assign = vec![0usize; m];
    for (pos, w) in sorted.iter().enumerate() {
        let b = (0..n).min_by(|&x, &y| loads[x].cmp(&loads[y]).then(x.cmp(&y))).expect("n > 0");
        loads[b] = loads[b].clone() + w.clone();
        best_assign[pos] = b;
    }
    let mut best = loads.iter().max().expect("n > 0").clone();

    if best > lower {
        // suffix[p] = sum of sorted[p..]
        let mut suffix = vec![T::zero(); m + 1];
        for p in (0..m).rev() {
            suffix[p] = suffix[p + 1].clone() + sorted[p].clone();
        }
        let mut search = Search {
            w: &sorted,
            suffix: &suffix,
            n,
            lower: &lower,
            best,
            best_assign,
            loads: vec![T::zero(); n],
            assign: vec![0; m],
        };
        search.run(0);
        best = search.best;
        best_assign = search.best_assign;
    }
    debug_assert!(best >= lower);

    let mut out = vec![0usize; m];
    for (pos, &j) in order.iter().enumerate() {
        out[j] = best_assign[pos];
    }
    out
}

struct Search<'a, T> {
    w: &'a [T],
    suffix: &'a [T],
    n: usize,
    lower: &'a T,
    best: T,
    best_assign: Vec<usize>,
    loads: Vec<T>,
    assign: Vec<usize>,
}

impl<T: Weight> Search<'_, T> {
    /// Returns true once the lower bound has been met.
    fn run(&mut self, pos: usize) -> bool {
        if pos == self.w.len() {
            let cur = self.loads.iter().max().expect("n > 0").clone();
            if cur < self.best {
                self.best = cur;
                self.best_assign.clone_from(&self.assign);
            }
            return self.best == *self.lower;
        }
        // Every bundle must stay <= best - 1; prune if the remainder cannot fit.
        // A better incumbent found deeper may already be exceeded here.
        let cap = self.best.clone() - T::one();
        if self.loads.iter().any(|l| *l > cap) {
            return false;
        }
        let room = self.loads.iter().fold(T::zero(), |acc, l| acc + (cap.clone() - l.clone()));
        if room < self.suffix[pos] {
            return false;
        }
        let w = self.w[pos].clone();
        for b in 0..self.n {
            if self.loads[b].clone() + w.clone() >= self.best {
                continue;
            }
            if self.loads[..b].contains(&self.loads[b]) {
                continue;
            }
            self.loads[b] = self.loads[b].clone() + w.clone();
            self.assign[pos] = b;
            let done = self.run(pos + 1);
            self.loads[b] = self.loads[b].clone() - w.clone();
            if done {
                return true;
            }
        }
        false
    }
}

/// Longest-processing-time partition: largest item first into the lightest bundle.
pub fn lpt_partition(values: &[Rational], n: usize) -> Partition {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b)));
    let mut loads = vec![Rational::zero(); n];
    let mut bundles = vec![Vec::new(); n];
    for j in order {
        let b = (0..n).min_by(|&x, &y| loads[x].cmp(&loads[y]).then(x.cmp(&y))).expect("n > 0");
        loads[b] += &values[j];
        bundles[b].push(j);
    }
    for b in &mut bundles {
        b.sort_unstable();
    }
    Partition(bundles)
}

/// Union of per-type round-robin splits; its largest bundle is at most
/// the sum of per-type MMS values.
pub fn per_type_partition(values: &[Rational], n: usize) -> Partition {
    let mut bundles = vec![Vec::new(); n];
    let mut cursor = 0usize;
    for group in groups_in_order(values) {
        for j in group {
            bundles[cursor % n].push(j);
            cursor += 1;
        }
    }
    for b in &mut bundles {
        b.sort_unstable();
    }
    Partition(bundles)
}

/// Best split of the arrival order into a prefix and a suffix (two bundles).
pub fn best_prefix_split(values: &[Rational]) -> Partition {
    let total: Rational = values.iter().sum();
    let mut prefix = Rational::zero();
    let mut best = (total.clone(), 0usize);
    for (j, v) in values.iter().enumerate() {
        prefix += v;
        let cost = prefix.clone().max(&total - &prefix);
        if cost < best.0 {
            best = (cost, j + 1);
        }
    }
    let cut = best.1;
    Partition(vec![(0..cut).collect(), (cut..values.len()).collect()])
}

/// Item indices grouped by value, groups ordered by first occurrence.
fn groups_in_order(values: &[Rational]) -> Vec<Vec<usize>> {
    let mut slot: HashMap<&Rational, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (j, v) in values.iter().enumerate() {
        let g = *slot.entry(v).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(j);
    }
    groups
}

/// Closed-form MMS data for one value type of one agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeMms {
    pub value: Rational,
    pub count: usize,
    #[serde(skip)]
    pub items: Vec<usize>,
    pub mms: Rational,
}

/// Per-agent, per-type MMS in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerTypeMms {
    pub n: usize,
    pub agents: Vec<Vec<TypeMms>>,
}

/// `ceil(count / n) * value`.
pub fn type_mms(count: usize, value: &Rational, n: usize) -> Rational {
    value * Rational::from(count.div_ceil(n))
}

/// Closed-form per-type MMS for explicit `(count, value)` pairs of each agent.
pub fn mms_per_type(counts_and_values: &[Vec<(usize, Rational)>], n: usize) -> PerTypeMms {
    let agents = counts_and_values
        .iter()
        .map(|types| {
            types
                .iter()
                .map(|(count, value)| TypeMms {
                    value: value.clone(),
                    count: *count,
                    items: Vec::new(),
                    mms: type_mms(*count, value, n),
                })
                .collect()
        })
        .collect();
    PerTypeMms { n, agents }
}

impl PerTypeMms {
    pub fn from_instance(inst: &Instance) -> Self {
        let agents = (0..inst.n)
            .map(|i| {
                let mut index: HashMap<&Rational, usize> = HashMap::new();
                let mut types: Vec<TypeMms> = Vec::new();
                for (j, item) in inst.items.iter().enumerate() {
                    let v = &item.d[i];
                    let u = *index.entry(v).or_insert_with(|| {
                        types.push(TypeMms { value: v.clone(), count: 0, items: Vec::new(), mms: Rational::zero() });
                        types.len() - 1
                    });
                    types[u].count += 1;
                    types[u].items.push(j);
                }
                for t in &mut types {
                    t.mms = type_mms(t.count, &t.value, inst.n);
                }
                types
            })
            .collect();
        PerTypeMms { n: inst.n, agents }
    }

    /// `sum_u MMS_i^u`.
    pub fn upper(&self, agent: usize) -> Rational {
        self.agents[agent].iter().map(|t| &t.mms).sum()
    }

    /// `sum_u (MMS_i^u - V_i^u)`.
    pub fn decomposition_lower(&self, agent: usize) -> Rational {
        self.agents[agent].iter().map(|t| &t.mms - &t.value).sum()
    }
}

/// `lower = max(d_i(M)/n, max_j d_i(j))`,
/// `upper = min(sum_u MMS_i^u, largest bundle of witness)`.
pub fn mms_bounds(inst: &Instance, agent: usize, witness: Option<&Partition>) -> Result<(Rational, Rational)> {
    if inst.items.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let values = inst.agent_values(agent);
    let (lower, per_type) = value_bounds(&values, inst.n);
    let upper = match witness {
        Some(w) => {
            if !w.is_partition_of(inst.n, inst.m()) {
                return Err(Error::InvalidInput("witness is not an n-partition of the items".into()));
            }
            per_type.min(w.max_bundle_of(&values))
        }
        None => per_type,
    };
    Ok((lower, upper))
}

/// Lower bound and per-type upper bound for a plain value list.
pub fn value_bounds(values: &[Rational], n: usize) -> (Rational, Rational) {
    let total: Rational = values.iter().sum();
    let max = values.iter().max().cloned().unwrap_or_else(Rational::zero);
    let lower = (&total / Rational::from(n)).max(max);
    let mut counts: HashMap<&Rational, usize> = HashMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let upper = counts.iter().map(|(v, &c)| type_mms(c, v, n)).sum();
    (lower, upper)
}

/// Per-type sandwich `sum_u (MMS^u - V^u) <= MMS <= sum_u MMS^u` for one agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub agent: usize,
    pub lower: Rational,
    pub mms: Rational,
    pub upper: Rational,
    pub pass: bool,
}

pub fn check_mms_decomposition(inst: &Instance) -> Result<Vec<DecompositionCheck>> {
    if inst.items.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let per_type = PerTypeMms::from_instance(inst);
    (0..inst.n)
        .map(|i| {
            let mms = mms_exact(&inst.agent_values(i), inst.n)?.value;
            let lower = per_type.decomposition_lower(i);
            let upper = per_type.upper(i);
            let pass = lower <= mms && mms <= upper;
            Ok(DecompositionCheck { agent: i + 1, lower, mms, upper, pass })
        })
        .collect()
}

/// MMS information for one agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMms {
    /// 1-based.
    pub agent: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact_mms: Option<Rational>,
    pub lower_bound: Rational,
    pub upper_bound: Rational,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Partition>,
}

impl AgentMms {
    /// Exact value when known; otherwise `None`.
    pub fn exact(&self) -> Option<&Rational> {
        self.exact_mms.as_ref()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmsReport {
    pub n: usize,
    pub agents: Vec<AgentMms>,
}

impl MmsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// MMS of one agent: exact when the instance is small enough, otherwise
/// bounds whose upper end is attained by the reported witness.
pub fn agent_mms(inst: &Instance, agent: usize) -> Result<AgentMms> {
    if inst.items.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let values = inst.agent_values(agent);
    let n = inst.n;
    let (lower, _) = value_bounds(&values, n);
    match mms_exact(&values, n) {
        Ok(sol) => Ok(AgentMms {
            agent: agent + 1,
            exact_mms: Some(sol.value.clone()),
            lower_bound: sol.value.clone(),
            upper_bound: sol.value,
            witness: Some(sol.witness),
        }),
        Err(Error::InstanceTooLarge { .. }) => {
            let candidates = [lpt_partition(&values, n), per_type_partition(&values, n)];
            let (upper, witness) = candidates
                .into_iter()
                .map(|p| (p.max_bundle_of(&values), p))
                .min_by(|a, b| a.0.cmp(&b.0))
                .expect("two candidates");
            Ok(AgentMms {
                agent: agent + 1,
                exact_mms: None,
                lower_bound: lower,
                upper_bound: upper,
                witness: Some(witness),
            })
        }
        Err(e) => Err(e),
    }
}

pub fn mms_report(inst: &Instance) -> Result<MmsReport> {
    let agents = (0..inst.n).map(|i| agent_mms(inst, i)).collect::<Result<_>>()?;
    Ok(MmsReport { n: inst.n, agents })
}
