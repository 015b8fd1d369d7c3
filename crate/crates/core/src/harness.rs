//! Instance generators, experiment runs and reports.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{pressure_bound, Allocator, Policy, RunTrace};
use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};
use crate::mms::agent_mms;
use crate::rational::Rational;
use crate::stacking::allocator_to_stacking;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueGrid {
    /// Values `2^z` with `2^z <= D`.
    PowersOfTwo,
    /// Values `1 + (D-1)·t/1000`.
    UniformRational,
    /// Two values per agent whose ratio sits just above or just below the
    /// bi-value merge threshold `(√3-1)/2`.
    AdversarialNearThreshold,
}

impl FromStr for ValueGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "powers-of-two" => Ok(ValueGrid::PowersOfTwo),
            "uniform-rational" => Ok(ValueGrid::UniformRational),
            "adversarial-near-threshold" => Ok(ValueGrid::AdversarialNearThreshold),
            _ => Err(Error::Parse(format!("unknown value grid {s:?}"))),
        }
    }
}

/// Small/large ratios used by the near-threshold grid: `11/30` merges,
/// `9/25` does not.
pub fn near_threshold_ratios() -> [Rational; 2] {
    [Rational::ratio(11, 30), Rational::ratio(9, 25)]
}

const UNIFORM_STEPS: i64 = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    /// Distinct values drawn per agent.
    pub k: usize,
    /// Largest allowed max/min ratio per agent.
    #[serde(rename = "D")]
    pub spread: Rational,
    pub value_grid: ValueGrid,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleConfig(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.spread < Rational::one() {
            return bad(format!("D = {} is below 1", self.spread));
        }
        match self.value_grid {
            ValueGrid::PowersOfTwo => {
                let avail = pow2_exponents(&self.spread);
                if avail < self.k {
                    return bad(format!("only {avail} powers of two fit in spread {}", self.spread));
                }
            }
            ValueGrid::UniformRational => {
                if self.k > 1 && self.spread == Rational::one() {
                    return bad("k > 1 needs D > 1".into());
                }
                if self.k as i64 > UNIFORM_STEPS + 1 {
                    return bad(format!("the uniform grid has only {} points", UNIFORM_STEPS + 1));
                }
            }
            ValueGrid::AdversarialNearThreshold => {
                if self.k != 2 {
                    return bad("the near-threshold grid draws exactly two values per agent".into());
                }
                if self.spread < Rational::ratio(25, 9) {
                    return bad(format!("D = {} cannot hold the ratio 9/25", self.spread));
                }
            }
        }
        Ok(())
    }
}

/// Number of `z >= 0` with `2^z <= D`.
fn pow2_exponents(spread: &Rational) -> usize {
    let mut count = 0;
    let mut p = Rational::one();
    while &p <= spread {
        count += 1;
        p = &p * Rational::from_integer(2);
    }
    count
}

/// Deterministic in the seed: every agent draws its value set, then each
/// item draws one value per agent.
pub fn generate_instance(cfg: &GeneratorConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let value_sets: Vec<Vec<Rational>> = (0..cfg.n).map(|_| draw_values(cfg, &mut rng)).collect();
    let rows =
        (0..cfg.m).map(|_| value_sets.iter().map(|vs| vs[rng.gen_range(0..vs.len())].clone()).collect()).collect();
    Instance::new(cfg.n, rows)
}

fn draw_values(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<Rational> {
    match cfg.value_grid {
        ValueGrid::PowersOfTwo => {
            let avail = pow2_exponents(&cfg.spread);
            sample(rng, avail, cfg.k).into_iter().map(|z| Rational::pow2(z as i64)).collect()
        }
        ValueGrid::UniformRational => {
            let step = (&cfg.spread - Rational::one()) / Rational::from_integer(UNIFORM_STEPS);
            sample(rng, UNIFORM_STEPS as usize + 1, cfg.k)
                .into_iter()
                .map(|t| Rational::one() + &step * Rational::from(t))
                .collect()
        }
        ValueGrid::AdversarialNearThreshold => {
            let ratios = near_threshold_ratios();
            let large = Rational::from_integer(rng.gen_range(1..=16));
            let small = &large * &ratios[rng.gen_range(0..2)];
            vec![small, large]
        }
    }
}

/// Certified ratio: exact when the MMS is, otherwise an interval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioValue {
    Exact(Rational),
    Interval { lower: Rational, upper: Rational },
}

impl RatioValue {
    pub fn lower(&self) -> &Rational {
        match self {
            RatioValue::Exact(r) => r,
            RatioValue::Interval { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> &Rational {
        match self {
            RatioValue::Exact(r) => r,
            RatioValue::Interval { upper, .. } => upper,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, RatioValue::Exact(_))
    }
}

/// Outcome of a bound comparison that may be undecidable from an MMS interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Unknown,
}

/// `d <= (2+√3)·mms`, decided in exact arithmetic.
pub fn within_two_plus_sqrt3(d: &Rational, mms: &Rational) -> bool {
    let two = Rational::from_integer(2);
    let gap = d - &(&two * mms);
    !gap.is_positive() || &gap * &gap <= Rational::from_integer(3) * mms * mms
}

/// Theoretical per-agent bound a policy is held to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// `d <= factor·MMS`.
    Linear(Rational),
    /// `d <= min(n, 2+√3)·MMS`.
    BiValue { n: usize },
}

impl Bound {
    fn holds(&self, d: &Rational, mms: &Rational) -> bool {
        match self {
            Bound::Linear(f) => d <= &(f * mms),
            Bound::BiValue { n } => d <= &(Rational::from(*n) * mms) && within_two_plus_sqrt3(d, mms),
        }
    }

    /// Pass if the bound holds at the MMS lower end, fail if it breaks at
    /// the upper end, unknown in between.
    pub fn verdict(&self, d: &Rational, mms_lower: &Rational, mms_upper: &Rational) -> Verdict {
        if self.holds(d, mms_lower) {
            Verdict::Pass
        } else if !self.holds(d, mms_upper) {
            Verdict::Fail
        } else {
            Verdict::Unknown
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResult {
    /// 1-based.
    pub agent: usize,
    #[serde(rename = "d_A")]
    pub d_a: Rational,
    pub mms_lower: Rational,
    pub mms_upper: Rational,
    pub ratio: RatioValue,
    pub bound: Bound,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackingResult {
    pub k: usize,
    pub min_margin: Rational,
    pub bound_ok: bool,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub digest: String,
    pub policy: String,
    pub n: usize,
    pub m: usize,
    /// Most distinct rounded (or bi-value) types of any agent.
    pub k_types: usize,
    pub max_pressure: Rational,
    pub pressure_bound: Rational,
    pub pressure_ok: bool,
    /// Item (1-based) at which the bi-value policy fell back to rounding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_at: Option<usize>,
    pub agents: Vec<AgentResult>,
    /// Only for greedy policies with `n >= 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stacking: Option<StackingResult>,
    pub pass: bool,
}

impl RunRecord {
    /// Largest certified ratio lower end over agents.
    pub fn max_ratio_lower(&self) -> Rational {
        self.agents.iter().map(|a| a.ratio.lower().clone()).max().unwrap_or_else(Rational::one)
    }

    pub fn any_violation(&self) -> bool {
        !self.pressure_ok
            || self.agents.iter().any(|a| a.verdict == Verdict::Fail)
            || self.stacking.as_ref().is_some_and(|s| !s.consistent || !s.bound_ok)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub stacking: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks { stacking: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Sorted by instance digest, then by the order policies were given.
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn any_violation(&self) -> bool {
        self.runs.iter().any(RunRecord::any_violation)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per (run, agent), exact values next to 20-digit decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "digest,policy,agent,d_A,mms_lower,mms_upper,ratio_lower,ratio_upper,ratio_lower_dec,ratio_upper_dec,exact,verdict,k_types,max_pressure,pressure_bound,pressure_ok,stacking_margin,stacking_ok,pass\n",
        );
        for r in &self.runs {
            let (margin, sok) = match &r.stacking {
                Some(s) => (s.min_margin.to_string(), (s.consistent && s.bound_ok).to_string()),
                None => (String::new(), String::new()),
            };
            for a in &r.agents {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.digest,
                    r.policy,
                    a.agent,
                    a.d_a,
                    a.mms_lower,
                    a.mms_upper,
                    a.ratio.lower(),
                    a.ratio.upper(),
                    a.ratio.lower().to_decimal_string(20),
                    a.ratio.upper().to_decimal_string(20),
                    a.ratio.is_exact(),
                    serde_json::to_value(a.verdict).expect("verdict").as_str().expect("string"),
                    r.k_types,
                    r.max_pressure,
                    r.pressure_bound,
                    r.pressure_ok,
                    margin,
                    sok,
                    r.pass,
                );
            }
        }
        out
    }
}

/// Bound each baseline is held to. Any allocation meets `n·MMS`, since a
/// bundle never exceeds the total.
pub fn policy_bound(policy: &Policy, n: usize, k_types: usize, fell_back: bool) -> Bound {
    match policy {
        Policy::PressureGreedy => Bound::Linear(Rational::from(8 * k_types + 2)),
        Policy::BiValue if !fell_back => Bound::BiValue { n },
        Policy::BiValue => Bound::Linear(Rational::from(8 * k_types + 2)),
        _ => Bound::Linear(Rational::from(n)),
    }
}

/// Runs one policy on one instance and checks it against its bounds.
pub fn run_policy(inst: &Instance, policy: &Policy, checks: Checks) -> Result<(Allocation, RunTrace, RunRecord)> {
    let n = inst.n;
    let mut alloc = Allocator::new(policy.clone(), n)?;
    let steps = inst.items.iter().map(|it| alloc.allocate(&it.d)).collect::<Result<Vec<_>>>()?;
    let trace = RunTrace { n, steps };
    let allocation = trace.allocation();
    let fallback_at = alloc.fallback_at().map(|j| j + 1);
    let k_types = alloc.state().k_max();
    let max_pressure =
        trace.steps.iter().flat_map(|s| s.pressures.iter().flatten()).max().cloned().unwrap_or_else(Rational::zero);
    let pbound = match policy {
        Policy::BiValue if fallback_at.is_none() => pressure_bound(policy, n, k_types),
        _ => pressure_bound(&Policy::PressureGreedy, n, k_types),
    };
    let greedy = matches!(policy, Policy::PressureGreedy | Policy::BiValue);
    let pressure_ok = !greedy || n < 2 || max_pressure <= pbound;

    let bound = policy_bound(policy, n, k_types, fallback_at.is_some());
    let bundles = allocation.bundles(n);
    let agents = (0..n)
        .map(|i| {
            let d_a = inst.bundle_value(i, &bundles[i]);
            let mms = agent_mms(inst, i)?;
            let (lo, hi) = match &mms.exact_mms {
                Some(e) => (e.clone(), e.clone()),
                None => (mms.lower_bound.clone(), mms.upper_bound.clone()),
            };
            let ratio = if lo.is_zero() {
                RatioValue::Exact(Rational::one())
            } else if mms.exact_mms.is_some() {
                RatioValue::Exact(&d_a / &lo)
            } else {
                RatioValue::Interval { lower: &d_a / &hi, upper: &d_a / &lo }
            };
            let verdict = bound.verdict(&d_a, &lo, &hi);
            Ok(AgentResult { agent: i + 1, d_a, mms_lower: lo, mms_upper: hi, ratio, bound: bound.clone(), verdict })
        })
        .collect::<Result<Vec<_>>>()?;

    let stacking = if checks.stacking && greedy && n >= 2 && !inst.items.is_empty() {
        Some(match allocator_to_stacking(&trace, n) {
            Ok(r) => StackingResult { k: r.k, min_margin: r.min_slack, bound_ok: r.bound_ok, consistent: true },
            Err(_) => StackingResult { k: trace.k(), min_margin: Rational::zero(), bound_ok: false, consistent: false },
        })
    } else {
        None
    };

    let mut record = RunRecord {
        digest: inst.digest(),
        policy: policy.to_string(),
        n,
        m: inst.m(),
        k_types,
        max_pressure,
        pressure_bound: pbound,
        pressure_ok,
        fallback_at,
        agents,
        stacking,
        pass: true,
    };
    record.pass = !record.any_violation();
    Ok((allocation, trace, record))
}

/// Every policy on one instance.
pub fn run_experiment(inst: &Instance, policies: &[Policy], checks: Checks) -> Result<ExperimentReport> {
    let runs = policies.iter().map(|p| run_policy(inst, p, checks).map(|r| r.2)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport { runs })
}

/// Independent instances in parallel; the result does not depend on thread
/// scheduling.
pub fn run_batch(instances: &[Instance], policies: &[Policy], checks: Checks) -> Result<ExperimentReport> {
    let mut reports = instances
        .par_iter()
        .map(|inst| run_experiment(inst, policies, checks).map(|r| (inst.digest(), r.runs)))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(ExperimentReport { runs: reports.into_iter().flat_map(|r| r.1).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::instance_stats;

    fn cfg(grid: ValueGrid, k: usize, d: i64, seed: u64) -> GeneratorConfig {
        GeneratorConfig { n: 3, m: 12, k, spread: Rational::from_integer(d), value_grid: grid, seed }
    }

    #[test]
    fn generator_respects_k_and_spread() {
        for grid in [ValueGrid::PowersOfTwo, ValueGrid::UniformRational] {
            for seed in 0..20 {
                let c = GeneratorConfig { m: 40, ..cfg(grid, 3, 8, seed) };
                let inst = generate_instance(&c).unwrap();
                let st = instance_stats(&inst).unwrap();
                assert!(st.k <= 3 && st.spread <= Rational::from_integer(8));
            }
        }
        let inst = generate_instance(&cfg(ValueGrid::PowersOfTwo, 1, 8, 1)).unwrap();
        assert_eq!(instance_stats(&inst).unwrap().k, 1);
    }

    #[test]
    fn near_threshold_pairs_straddle() {
        let [hi, lo] = near_threshold_ratios();
        let merge = |r: &Rational| {
            let t = Rational::from_integer(2) * r + Rational::one();
            &t * &t > Rational::from_integer(3)
        };
        assert!(merge(&hi) && !merge(&lo));
        let inst = generate_instance(&cfg(ValueGrid::AdversarialNearThreshold, 2, 3, 5)).unwrap();
        assert!(instance_stats(&inst).unwrap().k <= 2);
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = cfg(ValueGrid::UniformRational, 2, 5, 42);
        assert_eq!(generate_instance(&c).unwrap().to_json(), generate_instance(&c).unwrap().to_json());
    }

    #[test]
    fn infeasible_configs() {
        assert!(matches!(generate_instance(&cfg(ValueGrid::PowersOfTwo, 3, 3, 0)), Err(Error::InfeasibleConfig(_))));
        assert!(generate_instance(&cfg(ValueGrid::UniformRational, 2, 1, 0)).is_err());
        assert!(generate_instance(&cfg(ValueGrid::AdversarialNearThreshold, 2, 2, 0)).is_err());
        assert!(generate_instance(&cfg(ValueGrid::AdversarialNearThreshold, 3, 9, 0)).is_err());
    }

    #[test]
    fn sqrt3_comparison() {
        let m = Rational::one();
        assert!(within_two_plus_sqrt3(&Rational::ratio(373, 100), &m));
        assert!(!within_two_plus_sqrt3(&Rational::ratio(374, 100), &m));
        assert!(within_two_plus_sqrt3(&Rational::from_integer(2), &m));
    }

    #[test]
    fn single_type_report() {
        let rows = (0..7).map(|_| vec![Rational::from_integer(3); 3]).collect();
        let inst = Instance::new(3, rows).unwrap();
        let rep = run_experiment(&inst, &Policy::zoo(), Checks::default()).unwrap();
        for r in &rep.runs {
            assert!(r.pass, "{}", r.policy);
            let worst = r.max_ratio_lower();
            match r.policy.as_str() {
                "pressure-greedy" | "round-robin" | "bi-value" => assert_eq!(worst, Rational::one()),
                _ => assert!(worst <= Rational::from_integer(3)),
            }
            if r.policy == "pressure-greedy" {
                assert!(r.stacking.as_ref().unwrap().consistent);
            }
        }
        assert_eq!(rep.to_csv().lines().count(), 1 + 9 * 3);
    }

    #[test]
    fn batch_is_order_independent() {
        let insts: Vec<Instance> =
            (0..6).map(|s| generate_instance(&cfg(ValueGrid::PowersOfTwo, 2, 8, s)).unwrap()).collect();
        let mut rev = insts.clone();
        rev.reverse();
        let p = [Policy::PressureGreedy, Policy::RoundRobin];
        assert_eq!(run_batch(&insts, &p, Checks::default()).unwrap(), run_batch(&rev, &p, Checks::default()).unwrap());
    }
}
