//! Online allocation policies.
//!
//! [`Policy::PressureGreedy`] rounds every disutility up to a power of two,
//! groups equal rounded values into per-agent types and gives each item to
//! the agent whose pressure on that item's type is smallest. Pressure rises
//! by 1 for the receiver and falls by `1/(n-1)` for everyone else, so it
//! measures how far an agent is ahead of a round-robin pace for that type.
//!
//! Baselines keep a shadow [`PressureState`] so that every run yields the
//! same kind of trace.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};
use crate::rational::{round_up_pow2, Rational};

/// Per-agent type registries and pressures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PressureState {
    n: usize,
    registry: Vec<HashMap<Rational, usize>>,
    type_values: Vec<Vec<Rational>>,
    pressure: Vec<Vec<Rational>>,
    received: Vec<Vec<usize>>,
    seen: Vec<Vec<usize>>,
}

impl PressureState {
    pub fn new(n: usize) -> Self {
        PressureState {
            n,
            registry: vec![HashMap::new(); n],
            type_values: vec![Vec::new(); n],
            pressure: vec![Vec::new(); n],
            received: vec![Vec::new(); n],
            seen: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Type index of `key` for `agent`, registering it if new.
    pub fn register(&mut self, agent: usize, key: &Rational) -> usize {
        if let Some(&u) = self.registry[agent].get(key) {
            return u;
        }
        let u = self.type_values[agent].len();
        self.registry[agent].insert(key.clone(), u);
        self.type_values[agent].push(key.clone());
        self.pressure[agent].push(Rational::zero());
        self.received[agent].push(0);
        self.seen[agent].push(0);
        u
    }

    /// Maps `key` onto an existing type. The type's reported value becomes
    /// the larger of the two.
    fn alias(&mut self, agent: usize, key: &Rational, u: usize) {
        self.registry[agent].insert(key.clone(), u);
        if *key > self.type_values[agent][u] {
            self.type_values[agent][u] = key.clone();
        }
    }

    /// Number of registered types of `agent`.
    pub fn k(&self, agent: usize) -> usize {
        self.type_values[agent].len()
    }

    /// Largest registered type count over all agents.
    pub fn k_max(&self) -> usize {
        (0..self.n).map(|i| self.k(i)).max().unwrap_or(0)
    }

    pub fn type_value(&self, agent: usize, u: usize) -> &Rational {
        &self.type_values[agent][u]
    }

    pub fn pressure(&self, agent: usize, u: usize) -> &Rational {
        &self.pressure[agent][u]
    }

    pub fn pressures(&self) -> &[Vec<Rational>] {
        &self.pressure
    }

    /// `|A_i ∩ M_i^u|`.
    pub fn received(&self, agent: usize, u: usize) -> usize {
        self.received[agent][u]
    }

    /// `N_i^u` over arrived items.
    pub fn seen(&self, agent: usize, u: usize) -> usize {
        self.seen[agent][u]
    }

    /// Lowest-index agent minimising the pressure on its own type of the item.
    pub fn argmin(&self, types: &[usize]) -> usize {
        let mut best = 0;
        for i in 1..self.n {
            if self.pressure[i][types[i]] < self.pressure[best][types[best]] {
                best = i;
            }
        }
        best
    }

    /// Records that `winner` received an item whose types are `types`.
    /// Pressures are left untouched when `n = 1`.
    pub fn apply(&mut self, winner: usize, types: &[usize]) {
        for (i, &u) in types.iter().enumerate() {
            self.seen[i][u] += 1;
        }
        self.received[winner][types[winner]] += 1;
        if self.n < 2 {
            return;
        }
        let share = Rational::ratio(1, self.n as i64 - 1);
        for (i, &u) in types.iter().enumerate() {
            if i == winner {
                self.pressure[i][u] += &Rational::one();
            } else {
                self.pressure[i][u] -= &share;
            }
        }
    }

    /// `(n/(n-1))·received - seen/(n-1)`.
    pub fn closed_form(&self, agent: usize, u: usize) -> Rational {
        if self.n < 2 {
            return Rational::zero();
        }
        let n = self.n as i64;
        Rational::ratio(n * self.received[agent][u] as i64 - self.seen[agent][u] as i64, n - 1)
    }

    pub fn closed_form_holds(&self) -> bool {
        (0..self.n).all(|i| (0..self.k(i)).all(|u| self.pressure[i][u] == self.closed_form(i, u)))
    }

    /// Sum of all pressures; each item contributes exactly zero.
    pub fn total(&self) -> Rational {
        self.pressure.iter().flatten().sum()
    }

    pub fn max_pressure(&self) -> Rational {
        self.pressure.iter().flatten().max().cloned().unwrap_or_else(Rational::zero)
    }

    /// Checks `received ≤ ceil(seen/n) - 1 + alpha` for every agent and type.
    pub fn count_bound_holds(&self, alpha: &Rational) -> bool {
        (0..self.n).all(|i| {
            (0..self.k(i)).all(|u| {
                let lhs = Rational::from(self.received[i][u]);
                let rhs = Rational::from(self.seen[i][u].div_ceil(self.n)) - Rational::one() + alpha;
                lhs <= rhs
            })
        })
    }

    /// Replays fixed decisions over power-of-two rounded values.
    pub fn replay_rounded(n: usize, history: &[(Vec<Rational>, usize)]) -> Result<Self> {
        let mut state = PressureState::new(n);
        for (raw, winner) in history {
            let types = state.register_rounded(raw)?.1;
            state.apply(*winner, &types);
        }
        Ok(state)
    }

    fn register_rounded(&mut self, raw: &[Rational]) -> Result<(Vec<Rational>, Vec<usize>)> {
        let rounded = raw.iter().map(round_up_pow2).collect::<Result<Vec<_>>>()?;
        let types = rounded.iter().enumerate().map(|(i, v)| self.register(i, v)).collect();
        Ok((rounded, types))
    }
}

fn check_row(raw: &[Rational], n: usize) -> Result<()> {
    if raw.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} disutilities, got {}", raw.len())));
    }
    if let Some(v) = raw.iter().find(|v| !v.is_positive()) {
        return Err(Error::NonPositive(v.to_string()));
    }
    Ok(())
}

/// One step of the pressure-greedy rule. Returns the winner (0-based),
/// rounded values and per-agent type indices.
pub fn allocate_next(state: &mut PressureState, raw: &[Rational]) -> Result<(usize, Vec<Rational>, Vec<usize>)> {
    check_row(raw, state.n)?;
    let (rounded, types) = state.register_rounded(raw)?;
    let winner = if state.n == 1 { 0 } else { state.argmin(&types) };
    state.apply(winner, &types);
    Ok((winner, rounded, types))
}

/// `min/max > (√3-1)/2`, decided exactly as `(2r+1)^2 > 3`.
pub fn bi_value_should_merge(v1: &Rational, v2: &Rational) -> bool {
    let r = v1.clone().min(v2.clone()) / v1.clone().max(v2.clone());
    let s = Rational::from_integer(2) * r + Rational::one();
    &s * &s > Rational::from_integer(3)
}

/// Registers a raw value under the two-value rule and returns its type.
/// A third distinct value for one agent is an error.
pub fn bi_value_register(state: &mut PressureState, agent: usize, raw: &Rational, item: usize) -> Result<usize> {
    if let Some(&u) = state.registry[agent].get(raw) {
        return Ok(u);
    }
    match state.registry[agent].len() {
        0 => Ok(state.register(agent, raw)),
        1 => {
            let first = state.type_values[agent][0].clone();
            if bi_value_should_merge(&first, raw) {
                state.alias(agent, raw, 0);
                Ok(0)
            } else {
                Ok(state.register(agent, raw))
            }
        }
        _ => Err(Error::BiValuePromiseViolated { agent: agent + 1, item: item + 1 }),
    }
}

/// Allocation rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Policy {
    PressureGreedy,
    BiValue,
    RoundRobin,
    DumpToOne,
    /// Seeded mix of greedy, round-robin and uniformly random choices.
    Mixture(u64),
    /// Replays a fixed assignment (0-based agents).
    External(Vec<usize>),
}

impl Policy {
    /// The policies every adversary is tested against.
    pub fn zoo() -> Vec<Policy> {
        let mut v = vec![Policy::PressureGreedy, Policy::BiValue, Policy::RoundRobin, Policy::DumpToOne];
        v.extend((1..=5).map(Policy::Mixture));
        v
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::PressureGreedy => f.write_str("pressure-greedy"),
            Policy::BiValue => f.write_str("bi-value"),
            Policy::RoundRobin => f.write_str("round-robin"),
            Policy::DumpToOne => f.write_str("dump-to-one"),
            Policy::Mixture(seed) => write!(f, "mixture:{seed}"),
            Policy::External(_) => f.write_str("external"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pressure-greedy" => Ok(Policy::PressureGreedy),
            "bi-value" => Ok(Policy::BiValue),
            "round-robin" => Ok(Policy::RoundRobin),
            "dump-to-one" => Ok(Policy::DumpToOne),
            _ => match s.strip_prefix("mixture:") {
                Some(seed) => {
                    seed.parse().map(Policy::Mixture).map_err(|_| Error::Parse(format!("bad mixture seed in {s:?}")))
                }
                None => Err(Error::Parse(format!("unknown policy {s:?}"))),
            },
        }
    }
}

/// One allocated item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based.
    pub item: usize,
    pub raw: Vec<Rational>,
    /// Type value used for pressure accounting.
    pub rounded: Vec<Rational>,
    /// 1-based type per agent.
    pub types: Vec<usize>,
    /// 1-based.
    pub agent: usize,
    /// `pressures[i][u]` after the step.
    pub pressures: Vec<Vec<Rational>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunTrace {
    pub n: usize,
    pub steps: Vec<TraceStep>,
}

impl RunTrace {
    pub fn allocation(&self) -> Allocation {
        Allocation::new(self.steps.iter().map(|s| s.agent - 1).collect())
    }

    /// Largest 1-based type index in the trace.
    pub fn k(&self) -> usize {
        self.steps.iter().flat_map(|s| s.types.iter().copied()).max().unwrap_or(0)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(n: usize, text: &str) -> Result<Self> {
        let steps = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<TraceStep>>>()?;
        Ok(RunTrace { n, steps })
    }
}

/// A running policy together with its pressure bookkeeping.
#[derive(Clone, Debug)]
pub struct Allocator {
    policy: Policy,
    n: usize,
    state: PressureState,
    history: Vec<(Vec<Rational>, usize)>,
    bi_value_active: bool,
    fallback_at: Option<usize>,
    rng: Option<ChaCha8Rng>,
    snapshots: bool,
}

impl Allocator {
    pub fn new(policy: Policy, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("need at least one agent".into()));
        }
        let rng = match policy {
            Policy::Mixture(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        if let Policy::External(a) = &policy {
            if let Some(&bad) = a.iter().find(|&&x| x >= n) {
                return Err(Error::InvalidInput(format!("agent {} out of range", bad + 1)));
            }
        }
        Ok(Allocator {
            bi_value_active: policy == Policy::BiValue,
            policy,
            n,
            state: PressureState::new(n),
            history: Vec::new(),
            fallback_at: None,
            rng,
            snapshots: true,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn state(&self) -> &PressureState {
        &self.state
    }

    /// 0-based item at which the bi-value policy reverted to rounding.
    pub fn fallback_at(&self) -> Option<usize> {
        self.fallback_at
    }

    /// Whether pressures are currently keyed by unrounded bi-value types.
    pub fn in_bi_value_mode(&self) -> bool {
        self.bi_value_active
    }

    /// Whether each [`TraceStep`] carries the full pressure table.
    /// Long games switch this off; the table grows with the number of types.
    pub fn set_snapshots(&mut self, on: bool) {
        self.snapshots = on;
    }

    pub fn items_seen(&self) -> usize {
        self.history.len()
    }

    pub fn allocate(&mut self, raw: &[Rational]) -> Result<TraceStep> {
        check_row(raw, self.n)?;
        let j = self.history.len();

        let (rounded, types) = if self.bi_value_active {
            match self.bi_value_types(raw, j) {
                Ok(t) => t,
                Err(Error::BiValuePromiseViolated { .. }) => {
                    self.bi_value_active = false;
                    self.fallback_at = Some(j);
                    self.state = PressureState::replay_rounded(self.n, &self.history)?;
                    self.state.register_rounded(raw)?
                }
                Err(e) => return Err(e),
            }
        } else {
            self.state.register_rounded(raw)?
        };

        let greedy = if self.n == 1 { 0 } else { self.state.argmin(&types) };
        let winner = match &self.policy {
            Policy::PressureGreedy | Policy::BiValue => greedy,
            Policy::RoundRobin => j % self.n,
            Policy::DumpToOne => 0,
            Policy::Mixture(_) => {
                let g = greedy;
                let rng = self.rng.as_mut().expect("mixture has rng");
                match rng.gen_range(0..3) {
                    0 => g,
                    1 => j % self.n,
                    _ => rng.gen_range(0..self.n),
                }
            }
            Policy::External(a) => *a
                .get(j)
                .ok_or_else(|| Error::InvalidInput(format!("external assignment has no entry for item {}", j + 1)))?,
        };

        self.state.apply(winner, &types);
        self.history.push((raw.to_vec(), winner));
        Ok(TraceStep {
            item: j + 1,
            raw: raw.to_vec(),
            rounded,
            types: types.iter().map(|u| u + 1).collect(),
            agent: winner + 1,
            pressures: if self.snapshots { self.state.pressure.clone() } else { Vec::new() },
        })
    }

    fn bi_value_types(&mut self, raw: &[Rational], j: usize) -> Result<(Vec<Rational>, Vec<usize>)> {
        // Validate all agents before mutating any registry.
        for (i, v) in raw.iter().enumerate() {
            let reg = &self.state.registry[i];
            if !reg.contains_key(v) && reg.len() >= 2 {
                return Err(Error::BiValuePromiseViolated { agent: i + 1, item: j + 1 });
            }
        }
        let types: Vec<usize> =
            raw.iter().enumerate().map(|(i, v)| bi_value_register(&mut self.state, i, v, j)).collect::<Result<_>>()?;
        let values = types.iter().enumerate().map(|(i, &u)| self.state.type_value(i, u).clone()).collect();
        Ok((values, types))
    }
}

/// Feeds every item of `inst` through `policy`.
pub fn run_online(inst: &Instance, policy: &Policy) -> Result<(Allocation, RunTrace)> {
    let mut alloc = Allocator::new(policy.clone(), inst.n)?;
    let steps = inst.items.iter().map(|it| alloc.allocate(&it.d)).collect::<Result<Vec<_>>>()?;
    let trace = RunTrace { n: inst.n, steps };
    Ok((trace.allocation(), trace))
}

/// Theoretical bound on the largest pressure: `2k` with `k` the largest
/// type count (pressure-greedy), or `2 + 1/(n-1)` (bi-value).
pub fn pressure_bound(policy: &Policy, n: usize, k: usize) -> Rational {
    match policy {
        Policy::BiValue if n >= 2 => Rational::from_integer(2) + Rational::ratio(1, n as i64 - 1),
        _ => Rational::from(2 * k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: i64) -> Rational {
        Rational::from_integer(a)
    }

    fn row(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| q(x)).collect()
    }

    #[test]
    fn first_item_goes_to_agent_one() {
        let mut s = PressureState::new(3);
        let (w, _, types) = allocate_next(&mut s, &row(&[5, 2, 7])).unwrap();
        assert_eq!(w, 0);
        assert_eq!(types, vec![0, 0, 0]);
        assert_eq!(s.pressure(0, 0), &q(1));
        assert_eq!(s.pressure(1, 0), &Rational::ratio(-1, 2));
        assert_eq!(s.pressure(2, 0), &Rational::ratio(-1, 2));
    }

    #[test]
    fn two_unit_items_alternate() {
        let mut s = PressureState::new(2);
        assert_eq!(allocate_next(&mut s, &row(&[1, 1])).unwrap().0, 0);
        assert_eq!((s.pressure(0, 0), s.pressure(1, 0)), (&q(1), &q(-1)));
        assert_eq!(allocate_next(&mut s, &row(&[1, 1])).unwrap().0, 1);
        assert_eq!((s.pressure(0, 0), s.pressure(1, 0)), (&q(0), &q(0)));
    }

    #[test]
    fn two_type_example() {
        let mut s = PressureState::new(2);
        assert_eq!(allocate_next(&mut s, &row(&[1, 1])).unwrap().0, 0);
        assert_eq!(allocate_next(&mut s, &row(&[4, 4])).unwrap().0, 0);
        assert_eq!(s.pressure(0, 1), &q(1));
        assert_eq!(s.pressure(1, 1), &q(-1));
        let (w, _, types) = allocate_next(&mut s, &row(&[1, 4])).unwrap();
        assert_eq!(types, vec![0, 1]);
        assert_eq!(w, 1);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut s = PressureState::new(2);
        assert!(matches!(allocate_next(&mut s, &row(&[1, 0])), Err(Error::NonPositive(_))));
        assert!(allocate_next(&mut s, &row(&[1])).is_err());
    }

    #[test]
    fn single_agent_takes_everything() {
        let inst = Instance::new(1, vec![row(&[3]), row(&[5])]).unwrap();
        let (a, t) = run_online(&inst, &Policy::PressureGreedy).unwrap();
        assert_eq!(a.assignment, vec![0, 0]);
        assert!(t.steps.iter().all(|s| s.pressures[0].iter().all(Rational::is_zero)));
    }

    #[test]
    fn merge_threshold() {
        assert!(bi_value_should_merge(&q(2), &q(1)));
        assert!(!bi_value_should_merge(&q(10), &q(1)));
        assert!(bi_value_should_merge(&Rational::ratio(11, 30), &q(1)));
        assert!(!bi_value_should_merge(&Rational::ratio(9, 25), &q(1)));
        let mut s = PressureState::new(1);
        assert_eq!(bi_value_register(&mut s, 0, &q(2), 0).unwrap(), 0);
        assert_eq!(bi_value_register(&mut s, 0, &q(2), 1).unwrap(), 0);
        assert_eq!(bi_value_register(&mut s, 0, &q(1), 2).unwrap(), 0);
        assert_eq!(s.type_value(0, 0), &q(2));
        let mut s = PressureState::new(1);
        bi_value_register(&mut s, 0, &q(10), 0).unwrap();
        assert_eq!(bi_value_register(&mut s, 0, &q(1), 1).unwrap(), 1);
        assert!(matches!(
            bi_value_register(&mut s, 0, &q(3), 2),
            Err(Error::BiValuePromiseViolated { agent: 1, item: 3 })
        ));
    }

    #[test]
    fn bi_value_falls_back_on_third_value() {
        let inst = Instance::new(2, vec![row(&[1, 1]), row(&[10, 1]), row(&[3, 1]), row(&[1, 1])]).unwrap();
        let mut a = Allocator::new(Policy::BiValue, 2).unwrap();
        for it in &inst.items {
            a.allocate(&it.d).unwrap();
        }
        assert_eq!(a.fallback_at(), Some(2));
        assert!(!a.in_bi_value_mode());
        assert!(a.state().closed_form_holds());
        let replay = PressureState::replay_rounded(2, &a.history).unwrap();
        assert_eq!(&replay, a.state());
    }

    #[test]
    fn baselines() {
        let inst = Instance::new(3, (0..9).map(|_| row(&[1, 1, 1])).collect()).unwrap();
        let (a, _) = run_online(&inst, &Policy::RoundRobin).unwrap();
        assert_eq!(a.assignment, vec![0, 1, 2, 0, 1, 2, 0, 1, 2]);
        let (a, _) = run_online(&inst, &Policy::DumpToOne).unwrap();
        assert!(a.assignment.iter().all(|&x| x == 0));
        let (a, _) = run_online(&inst, &Policy::External(vec![2; 9])).unwrap();
        assert!(a.assignment.iter().all(|&x| x == 2));
        assert!(run_online(&inst, &Policy::External(vec![0; 3])).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::zoo() {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert!("greedy".parse::<Policy>().is_err());
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let inst = Instance::new(2, vec![row(&[3, 1]), row(&[1, 5])]).unwrap();
        let (alloc, t) = run_online(&inst, &Policy::PressureGreedy).unwrap();
        let back = RunTrace::from_jsonl(2, &t.to_jsonl()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.allocation(), alloc);
        assert_eq!(t.steps[0].rounded, row(&[4, 1]));
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (2usize..6, 1usize..4).prop_flat_map(|(n, k)| {
            let grid = prop::collection::vec((1i64..50, 1i64..9), k);
            (Just(n), grid).prop_flat_map(move |(n, grid)| {
                let grid: Vec<Rational> = grid.into_iter().map(|(a, b)| Rational::ratio(a, b)).collect();
                prop::collection::vec(prop::collection::vec(prop::sample::select(grid), n), 1..60)
                    .prop_map(move |rows| Instance::new(n, rows).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn greedy_invariants(inst in arb_instance()) {
            let mut a = Allocator::new(Policy::PressureGreedy, inst.n).unwrap();
            for it in &inst.items {
                let before = a.state().total();
                let step = a.allocate(&it.d).unwrap();
                prop_assert!(before.is_zero());
                prop_assert!(a.state().total().is_zero());
                prop_assert!(a.state().closed_form_holds());
                let k = a.state().k_max();
                let alpha = Rational::from(2 * k);
                prop_assert!(a.state().max_pressure() <= alpha);
                prop_assert!(a.state().count_bound_holds(&alpha));
                for (r, d) in step.rounded.iter().zip(&it.d) {
                    prop_assert!(d <= r && *r < d * &Rational::from_integer(2));
                }
            }
        }

        #[test]
        fn runs_are_deterministic(inst in arb_instance(), seed in 0u64..100) {
            for p in [Policy::PressureGreedy, Policy::BiValue, Policy::Mixture(seed)] {
                let (_, t1) = run_online(&inst, &p).unwrap();
                let (_, t2) = run_online(&inst, &p).unwrap();
                prop_assert_eq!(t1.to_jsonl(), t2.to_jsonl());
            }
        }

        #[test]
        fn single_type_greedy_is_balanced(n in 2usize..8, m in 1usize..80) {
            let inst = Instance::new(n, (0..m).map(|_| vec![q(3); n]).collect()).unwrap();
            let (a, _) = run_online(&inst, &Policy::PressureGreedy).unwrap();
            let counts: Vec<usize> = a.bundles(n).iter().map(Vec::len).collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }
}
